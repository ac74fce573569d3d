import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stscflow.errors import ConfigError
from stscflow.losses import (
    LossConfig, Objective, aggregation_matrix, curriculum_weights, endpoint_loss, local_aggregate, lsc_loss,
    tc_loss, total_loss,
)
from stscflow.trajectory import BezierFlowField
from stscflow.vwe import WarpedVolume

from conftest import scene
from gradcheck import perturbed, relative_errors
import oracles

XI5 = np.linspace(-2.0, 2.0, 5)


def volume(slices, xi=None, per_bin=None, support=None):
    slices = np.asarray(slices, dtype=np.float64)
    xi = np.linspace(-1.0, 1.0, slices.shape[0]) if xi is None else np.asarray(xi, float)
    return WarpedVolume(slices, xi, per_bin, support)


# aggregation

def test_aggregation_rows_are_normalized():
    for r in (1.0, 2.0, 3.5):
        np.testing.assert_allclose(aggregation_matrix(XI5, r).sum(axis=1), 1.0)


def test_aggregation_matches_quadrature_oracle():
    for r in (1.0, 2.0, 3.0, 10.0):
        for kern in ("triangular", "uniform"):
            np.testing.assert_allclose(aggregation_matrix(XI5, r, kern), oracles.aggregate_weights(list(XI5), r, kern), atol=1e-15)


def test_constant_volume_is_unchanged():
    v = volume(np.full((5, 3, 4), 2.5))
    np.testing.assert_allclose(local_aggregate(v, 2.0), 2.5)


def test_small_radius_is_identity():
    rng = np.random.default_rng(0)
    v = volume(rng.normal(size=(5, 3, 3)))
    np.testing.assert_array_equal(local_aggregate(v, 0.4), v.slices)


def test_three_sample_centre_value_by_hand():
    # xi = {-1, 0, 1}, r = 1, triangular: centre row has trapezoid weights (1/2, 1, 1/2) * kernel (0, 1, 0)
    v = volume(np.array([0.0, 1.0, 0.0]).reshape(3, 1, 1))
    assert local_aggregate(v, 1.0)[1, 0, 0] == pytest.approx(1.0)
    # r = 2: window holds all three, kernel (1/2, 1, 1/2), trapezoid (1/2, 1, 1/2) -> (1/4, 1, 1/4) / 1.5
    out = local_aggregate(v, 2.0)
    assert out[1, 0, 0] == pytest.approx(1.0 / 1.5)
    assert out[1, 0, 0] == pytest.approx(np.dot(oracles.aggregate_weights([-1.0, 0.0, 1.0], 2.0)[1], [0, 1, 0]))


# LSC

def test_lsc_two_sample_hand_value():
    v = volume(np.array([1.0, 3.0]).reshape(2, 1, 1))
    value, _ = lsc_loss(v, LossConfig(aggregate=False))
    assert value == 1.0


def test_lsc_identical_slices_is_zero():
    v = volume(np.tile(np.random.default_rng(1).normal(size=(1, 4, 4)), (5, 1, 1)))
    assert lsc_loss(v)[0] == pytest.approx(0.0, abs=1e-24)


def test_lsc_single_sample_is_zero():
    v = volume(np.ones((1, 2, 2)), xi=[0.0])
    value, grad = lsc_loss(v)
    assert value == 0.0 and not grad.any()


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), K=st.integers(2, 6), r=st.floats(0.1, 3.0))
def test_lsc_matches_oracle(seed, K, r):
    slices = np.random.default_rng(seed).normal(size=(K, 3, 4))
    xi = np.linspace(-1.0, 1.0, K)
    value, _ = lsc_loss(volume(slices, xi), LossConfig(r=r))
    assert value == pytest.approx(oracles.lsc(slices.tolist(), list(xi), r), rel=1e-10, abs=1e-12)
    assert value >= 0.0


def test_lsc_slice_gradient():
    rng = np.random.default_rng(2)
    slices = rng.normal(size=(5, 3, 3))
    v = volume(slices)
    _, grad = lsc_loss(v)
    h = 1e-6
    for idx in [(0, 0, 0), (2, 1, 2), (4, 2, 1)]:
        e = np.zeros_like(slices)
        e[idx] = h
        fd = (lsc_loss(volume(slices + e))[0] - lsc_loss(volume(slices - e))[0]) / (2 * h)
        assert grad[idx] == pytest.approx(fd, rel=1e-6)


# TC

def random_bins(seed, B=3, K=4, H=5, W=6, sparsity=0.5):
    rng = np.random.default_rng(seed)
    per_bin = rng.normal(size=(B, K, H, W)) * (rng.uniform(size=(B, K, H, W)) > sparsity)
    return per_bin


def tc_volume(per_bin, support=None):
    support = np.abs(per_bin) if support is None else support
    return WarpedVolume(per_bin.sum(axis=0), np.linspace(-1, 1, per_bin.shape[1]), per_bin, support)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), B=st.integers(2, 4), sparsity=st.floats(0.0, 0.95))
def test_tc_matches_oracle(seed, B, sparsity):
    pb = random_bins(seed, B=B, sparsity=sparsity)
    value, _ = tc_loss(tc_volume(pb))
    assert value == pytest.approx(oracles.tc(pb.tolist(), np.abs(pb).tolist()), rel=1e-9, abs=1e-12)
    assert value >= 0.0


def test_tc_identical_bins_is_zero():
    pb = np.repeat(random_bins(3, B=1, sparsity=0.0), 4, axis=0)
    assert tc_loss(tc_volume(pb))[0] == pytest.approx(0.0, abs=1e-20)


def test_tc_scaled_bins_are_identical_after_normalization():
    base = random_bins(4, B=1, sparsity=0.0)
    pb = np.concatenate([base, 3.0 * base, 0.5 * base])
    assert tc_loss(tc_volume(pb))[0] == pytest.approx(0.0, abs=1e-12)


def test_tc_constant_bins_have_no_interior_gradient():
    # constant fields have zero central differences away from the zero-padded border
    pb = np.ones((3, 5, 7, 7)) * np.array([1.0, 2.0, 3.0])[:, None, None, None]
    pb_unit = pb / np.sqrt((pb**2).mean(axis=(1, 2, 3)))[:, None, None, None]
    assert np.allclose(pb_unit[0], pb_unit[1])
    assert tc_loss(tc_volume(pb))[0] == pytest.approx(0.0, abs=1e-12)


def test_tc_two_point_variance():
    # bins [0, 0, c] and [c, 0, 0]: at the centre voxel the x-gradients are +g and -g, zero elsewhere
    c = 2.0
    pb = np.array([[[[0.0, 0.0, c]]], [[[c, 0.0, 0.0]]]])
    g = 0.5 * c / np.sqrt(c * c / 3)  # unit-RMS scaling of both bins
    value, _ = tc_loss(tc_volume(pb, support=np.ones_like(pb)))
    assert value == pytest.approx(g * g, rel=1e-6)


def test_tc_needs_two_active_bins():
    pb = np.zeros((3, 3, 4, 4))
    pb[0, 1, 2, 2] = 1.0
    assert tc_loss(tc_volume(pb))[0] == 0.0


def test_tc_without_per_bin_is_an_error():
    with pytest.raises(ConfigError):
        tc_loss(volume(np.ones((3, 2, 2))))


def test_tc_bin_gradient():
    pb = random_bins(5, sparsity=0.3)
    support = np.abs(pb) + 0.1
    _, grad = tc_loss(tc_volume(pb, support))
    h = 1e-6
    rng = np.random.default_rng(0)
    for _ in range(10):
        idx = tuple(rng.integers(0, n) for n in pb.shape)
        e = np.zeros_like(pb)
        e[idx] = h
        fd = (tc_loss(tc_volume(pb + e, support))[0] - tc_loss(tc_volume(pb - e, support))[0]) / (2 * h)
        assert grad[idx] == pytest.approx(fd, rel=1e-5, abs=1e-9)


# control-point gradients

def test_control_point_gradients_match_finite_differences():
    stream, gt = scene("random-texture", "curved", size=32)
    errs = relative_errors(stream, perturbed(gt, 1), n=60, seed=1)
    for name, e in errs.items():
        assert np.mean(e <= 1e-4) >= 0.95, name


# endpoint loss and curriculum

def test_endpoint_loss_examples():
    gt = np.zeros((1, 1, 2))
    mask = np.ones((1, 1), bool)
    assert endpoint_loss([np.array([[[1.0, 2.0]]])], gt, mask, (1.0,))[0] == 3.0
    assert endpoint_loss([gt, gt], gt, mask)[0] == 0.0
    two = np.array([[[2.0, 0.0]]])
    four = np.array([[[4.0, 0.0]]])
    assert endpoint_loss([two, four], gt, mask, (0.25, 0.75))[0] == 3.5


def test_endpoint_loss_masks_and_gradient():
    rng = np.random.default_rng(0)
    gt = rng.normal(size=(4, 5, 2))
    pred = rng.normal(size=(4, 5, 2))
    mask = rng.uniform(size=(4, 5)) > 0.5
    v, (g,) = endpoint_loss([pred], gt, mask, (1.0,))
    assert v == pytest.approx(np.abs(pred - gt)[mask].sum() / mask.sum())
    assert not g[~mask].any()
    with pytest.raises(ConfigError):
        endpoint_loss([pred], gt, np.zeros((4, 5), bool), (1.0,))
    with pytest.raises(ConfigError):
        endpoint_loss([pred, pred], gt, mask, (1.0,))


def test_curriculum_examples():
    assert curriculum_weights(0, 10) == (1.0, 0.0, 0.0)
    assert curriculum_weights(5, 10) == (0.5, 0.25, 0.25)
    assert curriculum_weights(10, 10) == (0.0, 0.5, 0.5)
    assert curriculum_weights(37, 10) == (0.0, 0.5, 0.5)
    with pytest.raises(ConfigError):
        curriculum_weights(-1, 10)


@given(e=st.floats(0, 1e4), E_c=st.floats(1, 1e3))
def test_curriculum_simplex(e, E_c):
    w = curriculum_weights(e, E_c)
    assert min(w) >= 0.0
    assert sum(w) == pytest.approx(1.0, abs=1e-12)


def test_config_validation():
    for bad in (dict(r=0.0), dict(gamma=(0.5, 0.6)), dict(E_c=0.5), dict(w_xi="gauss"), dict(K=0)):
        with pytest.raises(ConfigError):
            LossConfig(**bad)


# combined objective

def test_total_loss_schedule_ends():
    stream, gt = scene("vertical-edge", "linear", size=32)
    fld = gt.scaled(0.5)
    cfg = LossConfig(E_c=10)
    start, (d1, d2) = total_loss(stream, fld, 0, cfg, gt=gt.p2)
    assert start.total == start.flow
    assert not d1.any()
    late, _ = total_loss(stream, fld, 10, cfg)
    assert late.flow is None
    assert late.total == pytest.approx(0.5 * late.lsc + 0.5 * late.tc)
    mid, _ = total_loss(stream, fld, 4, cfg, gt=gt.p2)
    lf, ll, lt = mid.weights
    assert mid.total == pytest.approx(lf * mid.flow + ll * mid.lsc + lt * mid.tc)
    with pytest.raises(ConfigError):
        total_loss(stream, fld, 3, cfg)


def test_breakdown_json_keys():
    stream, gt = scene("vertical-edge", "linear", size=32)
    bd, _ = total_loss(stream, gt, 200)
    assert set(json.loads(bd.to_json())) == {"lsc", "tc", "flow", "weights", "total"}


@pytest.mark.parametrize("motion", ["linear", "curved"])
@pytest.mark.parametrize("term", [0, 1], ids=["lsc", "tc"])
def test_ground_truth_is_lowest(motion, term):
    stream, gt = scene("random-texture", motion, size=64)
    obj = Objective(stream, gt)
    h, w = gt.shape
    cands = [gt, BezierFlowField.zeros(h, w), gt.scaled(0.5), gt.scaled(2.0)]
    vals = [obj.self_supervised(c)[term] for c in cands]
    assert all(vals[0] < v for v in vals[1:]), vals
