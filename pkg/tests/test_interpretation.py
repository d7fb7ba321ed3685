import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ppg2ecg import autodiff as ad
from ppg2ecg.autodiff import Tensor
from ppg2ecg.interpretation import (
    curve_normals,
    diagnosis_attribution,
    ecg_attribution_heatmap,
    integrated_gradients,
    integrated_gradients_fn,
    linear_surrogate,
    midpoints,
    normalize_rows,
    top_count,
)
from ppg2ecg.network import ModelParams, tiny_architecture, without_diagnosis


def test_midpoints():
    np.testing.assert_allclose(midpoints(4), [0.125, 0.375, 0.625, 0.875])
    with pytest.raises(ValueError):
        midpoints(0)


def test_linear_two_point_example():
    amap = integrated_gradients_fn(linear_surrogate([3.0, 4.0]), [1.0, 2.0], [0], steps=7)
    np.testing.assert_allclose(amap.values[0], [3.0, 8.0], atol=1e-12)
    assert amap.completeness_gap[0] < 1e-12


@given(st.integers(1, 300), st.integers(0, 2**32 - 1))
def test_linear_surrogate_exact_any_steps(steps, seed):
    rng = np.random.default_rng(seed)
    u, p = rng.standard_normal(20), rng.standard_normal(20)
    amap = integrated_gradients_fn(linear_surrogate(u), p, [0], steps=steps, chunk=37)
    np.testing.assert_allclose(amap.values[0], u * p, atol=1e-10)
    assert amap.completeness_gap[0] < 1e-10


def test_quadratic_midpoint_exact():
    # G(P) = sum P^2: gradient is linear in alpha, so the midpoint rule is exact
    fn = lambda x: ad.reshape(ad.sum(ad.square(x), -1), (x.shape[0], 1))  # noqa: E731
    p = np.array([1.0, -2.0, 0.5])
    amap = integrated_gradients_fn(fn, p, [0], steps=3)
    np.testing.assert_allclose(amap.values[0], p**2, atol=1e-12)


def test_zero_input_gives_zero_attribution(tiny_model):
    amap = integrated_gradients(tiny_model, np.zeros(32), ("ecg", 5), steps=4)
    assert np.all(amap.values == 0)


def test_chunking_does_not_change_result(tiny_model):
    p = np.random.default_rng(0).uniform(size=32)
    a = integrated_gradients(tiny_model, p, ("disease", [0, 3]), steps=12, chunk=12)
    b = integrated_gradients(tiny_model, p, ("disease", [0, 3]), steps=12, chunk=5)
    np.testing.assert_allclose(a.values, b.values, atol=1e-13)


def test_multi_row_matches_single_rows(tiny_model):
    p = np.random.default_rng(1).uniform(size=32)
    both = integrated_gradients(tiny_model, p, ("ecg", [2, 9]), steps=8)
    one = integrated_gradients(tiny_model, p, ("ecg", 9), steps=8)
    np.testing.assert_allclose(both.values[1], one.values[0], atol=1e-13)


def test_completeness_on_tiny_model(tiny_model):
    p = np.random.default_rng(2).uniform(size=32)
    amap = integrated_gradients(tiny_model, p, ("ecg", list(range(0, 32, 4))), steps=200)
    assert np.all(amap.relative_gap() < 0.01)


def test_bad_targets(tiny_model):
    p = np.zeros(32)
    with pytest.raises(ValueError, match="target index"):
        integrated_gradients(tiny_model, p, ("ecg", 32))
    with pytest.raises(ValueError, match="unknown target"):
        integrated_gradients(tiny_model, p, ("heart", 0))
    with pytest.raises(ValueError, match="single cycle"):
        integrated_gradients(tiny_model, np.zeros((2, 32)), ("ecg", 0))
    ep = ModelParams.initialize(without_diagnosis(tiny_architecture(32)), 0)
    with pytest.raises(ValueError, match="diagnosis"):
        integrated_gradients(ep, p, ("disease", 0))


def test_normalize_rows():
    m = np.array([[1.0, 3.0, 2.0], [5.0, 5.0, 5.0]])
    np.testing.assert_allclose(normalize_rows(m), [[0, 1, 0.5], [0, 0, 0]])


def test_heatmap_files(tiny_model, tmp_path):
    p = np.random.default_rng(3).uniform(size=32)
    amap = ecg_attribution_heatmap(tiny_model, p, steps=4, out_prefix=tmp_path / "hm")
    assert amap.values.shape == (32, 32)
    back = np.loadtxt(tmp_path / "hm.csv", delimiter=",")
    np.testing.assert_array_equal(back, amap.values)
    assert (tmp_path / "hm.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_top_count():
    assert top_count(0.2, 268) == 54
    assert top_count(0.1, 30) == 3
    assert top_count(1.0, 7) == 7
    with pytest.raises(ValueError):
        top_count(0.0, 10)


def test_curve_normals_unit_and_orthogonal():
    p = np.sin(np.linspace(0, 3, 40))
    n = curve_normals(p)
    np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0)
    tangent = np.stack([np.ones(40), np.gradient(p)], axis=1)
    np.testing.assert_allclose((n * tangent).sum(axis=1), 0.0, atol=1e-12)


def test_diagnosis_highlight(tiny_model):
    p = np.random.default_rng(4).uniform(size=32)
    hl = diagnosis_attribution(tiny_model, p, disease=1, top_fraction=0.25, steps=6)
    assert len(hl.indices) == 8 and hl.indices == sorted(hl.indices)
    mag = np.abs(hl.attribution.values[0])
    rest = np.setdiff1d(np.arange(32), hl.indices)
    assert mag[hl.indices].min() >= mag[rest].max()
    d = json.loads(hl.to_json())
    assert len(d["normals"]) == 8 and len(d["normals"][0]) == 2
