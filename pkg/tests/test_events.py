import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stscflow.errors import ConfigError, ParseError, ValidationError
from stscflow.events import Event, EventStream, SyntheticSceneSpec, generate_synthetic, load_events, save_events
from stscflow.trajectory import warp_positions

from conftest import as_events, random_stream, scene
from oracles import de_casteljau


def test_csv_single_record(tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("t,x,y,p\n0.001,5,7,1\n")
    s = load_events(path, width=16, height=16)
    assert len(s) == 1
    assert s[0] == Event(x=5.0, y=7.0, t=0.001, polarity=1)


def test_csv_without_header(tmp_path):
    path = tmp_path / "bare.csv"
    path.write_text("0.001,5,7,-1\n0.002,1.5,2,1\n")
    s = load_events(path, width=16, height=16)
    assert s.p.tolist() == [-1, 1]
    assert s.x[1] == pytest.approx(1.5)


def test_csv_decreasing_time_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,x,y,p\n0.002,1,1,1\n0.001,2,2,1\n")
    with pytest.raises(ValidationError, match="decrease"):
        load_events(path, width=16, height=16)


@pytest.mark.parametrize(
    "body, needle",
    [("0.1,1,1\n", ":1:"), ("t,x,y,p\n0.1,a,1,1\n", ":2:"), ("0.1,1,1,0\n", "polarity")],
)
def test_csv_parse_errors_name_the_line(tmp_path, body, needle):
    path = tmp_path / "broken.csv"
    path.write_text(body)
    with pytest.raises(ParseError, match=needle):
        load_events(path, width=16, height=16)


def test_csv_needs_sensor_size(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("0.1,1,1,1\n")
    with pytest.raises(ConfigError):
        load_events(path)


def test_out_of_bounds_event_rejected(tmp_path):
    path = tmp_path / "oob.csv"
    path.write_text("0.1,16,1,1\n")
    with pytest.raises(ValidationError, match="outside"):
        load_events(path, width=16, height=16)


def test_binary_round_trip_1000_events(tmp_path):
    s = random_stream(1000, width=32, height=24, seed=3)
    save_events(s, tmp_path / "e.bin")
    back = load_events(tmp_path / "e.bin", t_start=s.t_start, t_end=s.t_end)
    for name in ("x", "y", "t", "p"):
        assert getattr(back, name).tobytes() == getattr(s, name).tobytes()
    assert (back.width, back.height) == (32, 24)


def test_binary_layout(tmp_path):
    s = EventStream([1.5], [2.0], [0.25], [-1], 8, 4, 0.0, 1.0)
    save_events(s, tmp_path / "e.bin")
    raw = (tmp_path / "e.bin").read_bytes()
    assert raw[:4] == b"EVS1"
    assert np.frombuffer(raw[4:12], "<u4").tolist() == [8, 4]
    assert np.frombuffer(raw[12:20], "<u8").tolist() == [1]
    assert len(raw) == 20 + 17
    assert np.frombuffer(raw[20:28], "<f8")[0] == 0.25
    assert np.frombuffer(raw[28:36], "<f4").tolist() == [1.5, 2.0]
    assert np.frombuffer(raw[36:37], "i1")[0] == -1


@pytest.mark.parametrize("cut, needle", [(3, "header"), (25, "record")])
def test_binary_truncation_reported(tmp_path, cut, needle):
    s = random_stream(3)
    save_events(s, tmp_path / "e.bin")
    raw = (tmp_path / "e.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:cut])
    with pytest.raises(ParseError):
        load_events(tmp_path / "t.bin")


def test_binary_bad_magic(tmp_path):
    (tmp_path / "m.bin").write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(ParseError, match="magic"):
        load_events(tmp_path / "m.bin")


@st.composite
def streams(draw):
    n = draw(st.integers(0, 40))
    w = draw(st.integers(1, 50))
    h = draw(st.integers(1, 50))
    coord = lambda hi: st.floats(0, hi, allow_nan=False, exclude_max=True, width=32)
    xs = draw(st.lists(coord(w), min_size=n, max_size=n))
    ys = draw(st.lists(coord(h), min_size=n, max_size=n))
    ts = sorted(draw(st.lists(st.floats(0, 1, allow_nan=False), min_size=n, max_size=n)))
    ps = draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    return EventStream(xs, ys, ts, ps, w, h, 0.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(s=streams(), fmt=st.sampled_from(["binary", "csv"]))
def test_round_trip_identity(tmp_path_factory, s, fmt):
    path = tmp_path_factory.mktemp("rt") / ("e.csv" if fmt == "csv" else "e.bin")
    save_events(s, path, format=fmt)
    back = load_events(path, width=s.width, height=s.height, t_start=s.t_start, t_end=s.t_end)
    for name in ("x", "y", "t", "p"):
        np.testing.assert_array_equal(getattr(back, name), getattr(s, name))


def test_stream_is_immutable():
    s = random_stream(5)
    with pytest.raises(ValueError):
        s.x[0] = 1.0


def test_vertical_edge_linear_sweep():
    s, gt = scene("vertical-edge", "linear")
    np.testing.assert_array_equal(gt.p2, np.broadcast_to([4.0, 0.0], gt.p2.shape))
    edge = 64 / 3.0 + 0.5
    # every event lies in the band the edge sweeps through
    assert s.x.min() >= np.floor(edge) - 1 and s.x.max() <= np.ceil(edge + 4) + 1
    # and rows behave identically
    first_row = np.sort(s.t[s.y == 0])
    for row in (10, 40, 63):
        np.testing.assert_allclose(np.sort(s.t[s.y == row]), first_row, atol=1e-12)
    # later events sit further right
    assert np.corrcoef(s.t, s.x)[0, 1] > 0.9


@pytest.mark.parametrize("pattern", ["vertical-edge", "checkerboard", "random-texture"])
def test_zero_motion_gives_no_events(pattern):
    s, _ = generate_synthetic(SyntheticSceneSpec(pattern=pattern, p1=(0, 0), p2=(0, 0), width=32, height=32))
    assert len(s) == 0
    assert s.duration == pytest.approx(0.1)


def test_curved_midpoint_displacement():
    _, gt = scene("random-texture", "curved")
    a, b = 0.5, 0.25  # 2 s (1 - s), s^2 at s = 0.5
    mid = a * gt.p1 + b * gt.p2
    oracle = de_casteljau((4.0, 0.0), (4.0, 4.0), 0.5)
    assert oracle == (3.0, 1.0)
    np.testing.assert_allclose(mid, np.broadcast_to(oracle, mid.shape), atol=1e-12)


@pytest.mark.parametrize("motion", ["linear", "curved"])
def test_generator_consistency_vertical_edge(motion):
    """Warping each event back to the window start lands on the initial edge."""
    s, gt = scene("vertical-edge", motion)
    qx, qy, _ = warp_positions(gt, s.x, s.y, s.t, s.t_start)
    edge = 64 / 3.0 + 0.5
    assert np.abs(qx - edge).max() <= 0.5


def test_generator_is_seed_deterministic():
    a, _ = generate_synthetic(SyntheticSceneSpec(pattern="random-texture", width=24, height=24, seed=5))
    b, _ = generate_synthetic(SyntheticSceneSpec(pattern="random-texture", width=24, height=24, seed=5))
    c, _ = generate_synthetic(SyntheticSceneSpec(pattern="random-texture", width=24, height=24, seed=6))
    assert a.t.tobytes() == b.t.tobytes() and a.x.tobytes() == b.x.tobytes()
    assert len(a) != len(c) or a.t.tobytes() != c.t.tobytes()


def test_generated_timestamps_are_exact_crossings():
    """Log intensity at the event time sits on a threshold multiple."""
    spec = SyntheticSceneSpec(pattern="vertical-edge", width=32, height=4)
    s, _ = generate_synthetic(spec)
    edge = 32 / 3.0 + 0.5
    off = 0.37 * spec.contrast_threshold
    disp = 4.0 * (s.t - s.t_start) / 0.1  # straight line, 4 px
    val = off + 0.5 * (1 + np.tanh((s.x - disp - edge) / 0.15))
    levels = val / spec.contrast_threshold
    np.testing.assert_allclose(levels, np.round(levels), atol=1e-9)


def test_invalid_scene_spec():
    with pytest.raises(ConfigError):
        SyntheticSceneSpec(contrast_threshold=0.0)
    with pytest.raises(ConfigError):
        SyntheticSceneSpec(pattern="stripes")


def test_select_and_merge():
    s = random_stream(50, seed=2)
    even = s.select(np.arange(50) % 2 == 0)
    odd = s.select(np.arange(50) % 2 == 1)
    merged = even.merge(odd)
    assert sorted(as_events(merged)) == sorted(as_events(s))
