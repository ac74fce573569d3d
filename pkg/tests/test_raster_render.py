import colorsys
import struct

import numpy as np
import pytest

from stscflow.errors import DomainError, ParseError, ValidationError
from stscflow.raster import read_raster, write_raster
from stscflow.render import color_wheel, flow_to_rgb, render_field, save_png
from stscflow.trajectory import BezierFlowField


def test_raster_layout(tmp_path):
    arr = np.arange(24, dtype=np.float64).reshape(2, 3, 4)
    path = tmp_path / "r.raster"
    write_raster(path, arr)
    raw = path.read_bytes()
    assert raw[:5] == b"STSC1"
    assert struct.unpack_from("<III", raw, 5) == (3, 2, 4)
    assert np.frombuffer(raw[17:], "<f4")[:5].tolist() == [0, 1, 2, 3, 4]
    np.testing.assert_array_equal(read_raster(path), arr)


def test_raster_round_trips_nan_and_2d(tmp_path):
    path = tmp_path / "r.raster"
    write_raster(path, np.array([[np.nan, 1.5]]))
    back = read_raster(path)
    assert back.shape == (1, 2, 1) and np.isnan(back[0, 0, 0])


@pytest.mark.parametrize("mutate", ["magic", "short", "long", "header"])
def test_corrupt_rasters(tmp_path, mutate):
    path = tmp_path / "r.raster"
    write_raster(path, np.ones((2, 2, 2)))
    raw = path.read_bytes()
    raw = {"magic": b"XXXX1" + raw[5:], "short": raw[:-1], "long": raw + b"\0" * 4, "header": raw[:9]}[mutate]
    path.write_bytes(raw)
    with pytest.raises(ParseError):
        read_raster(path)


def test_raster_rejects_bad_rank(tmp_path):
    with pytest.raises(ValidationError):
        write_raster(tmp_path / "r", np.zeros(3))


def test_wheel_size():
    assert color_wheel().shape == (55, 3)


def test_zero_field_is_uniform_white():
    img = render_field(BezierFlowField.zeros(5, 6))
    assert img.shape == (5, 6, 3) and np.all(img == 255)


def test_start_of_trajectory_looks_like_zero_flow():
    fld = BezierFlowField.constant(5, 6, (1.0, 2.0), (3.0, -1.0))
    np.testing.assert_array_equal(render_field(fld, 0.0), render_field(BezierFlowField.zeros(5, 6)))


def test_constant_field_has_one_hue():
    img = render_field(BezierFlowField.constant(4, 4, (1.0, 1.0), (3.0, 2.0)))
    assert len({tuple(p) for p in img.reshape(-1, 3)}) == 1
    hue = colorsys.rgb_to_hsv(*(img[0, 0] / 255.0))[0]
    other = render_field(BezierFlowField.constant(4, 4, (1.0, 1.0), (-3.0, -2.0)))
    assert colorsys.rgb_to_hsv(*(other[0, 0] / 255.0))[0] != pytest.approx(hue)


def test_saturation_grows_with_magnitude():
    flow = np.zeros((1, 3, 2))
    flow[0, :, 0] = [0.5, 1.0, 2.0]
    img = flow_to_rgb(flow, max_mag=2.0).astype(int)
    assert img[0, 0].min() > img[0, 1].min() > img[0, 2].min()


def test_render_time_domain():
    with pytest.raises(DomainError):
        render_field(BezierFlowField.zeros(2, 2), 1.5)


def test_png_output(tmp_path):
    from PIL import Image

    img = render_field(BezierFlowField.constant(4, 5, (1.0, 0.0), (2.0, 1.0)))
    save_png(tmp_path / "f.png", img)
    np.testing.assert_array_equal(np.asarray(Image.open(tmp_path / "f.png")), img)
