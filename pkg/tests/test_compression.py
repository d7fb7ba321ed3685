import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ppg2ecg.autodiff import Tensor
from ppg2ecg.compression import (
    SignificanceReport,
    combine_criteria,
    compress_and_finetune,
    finetune_config,
    keep_top_half,
    prune,
    recursive_swap,
    score_kernels,
)
from ppg2ecg.network import (
    LayerSpec,
    ModuleSpec,
    ModelParams,
    compressed_architecture,
    count_params,
    forward,
    module_forward,
    full_architecture,
    param_shapes,
    recursive_forward,
    tiny_compressed_architecture,
)
from ppg2ecg.training import TrainConfig


def test_combine_unnormalized_example():
    np.testing.assert_allclose(combine_criteria([16, 1], [0.5, 0.9], 1.0, normalize=False), [16.5, 1.9])


def test_combine_lambda_zero_ranks_by_norm():
    norms = np.array([3.0, 9.0, 1.0, 5.0])
    s = combine_criteria(norms, [9.0, 0.0, 7.0, 1.0], lambda_w=0.0)
    assert np.array_equal(np.argsort(s), np.argsort(norms))


def test_combine_normalized_min_zero():
    s = combine_criteria([1.0, 2.0, 4.0], [0.3, 0.1, 0.2])
    assert s.min() == 0.0


def test_keep_half_ties_prefer_low_index():
    assert keep_top_half(np.ones(6)) == [0, 1, 2]
    assert keep_top_half([1.0, 5.0, 5.0, 0.0, 5.0]) == [1, 2, 4]


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=80))
def test_keep_half_size_property(scores):
    keep = keep_top_half(scores)
    assert len(keep) == (len(scores) + 1) // 2
    assert keep == sorted(set(keep))
    dropped = set(range(len(scores))) - set(keep)
    if dropped:
        assert min(scores[i] for i in keep) >= max(scores[i] for i in dropped)


def test_score_identical_channels_tie():
    model = ModelParams.initialize(full_architecture(), 0)
    # identical first-conv kernels give identical F1 channels
    for k in ("first_conv.w", "first_conv.b"):
        model.values[k][:] = model.values[k][0]
    theta = model.values["fusion.theta"]
    theta[:] = theta[:, :1]
    calib = [type("C", (), {"ppg": np.sin(np.linspace(0, 6, 268))})()]
    rep = score_kernels(model, calib)
    assert np.ptp(rep.scores_f1) < 1e-9
    assert rep.f1_keep == list(range(30))


def test_score_empty_calibration(tiny_model):
    with pytest.raises(ValueError, match="empty"):
        score_kernels(tiny_model, [])


@pytest.fixture
def tiny_report(tiny_model, tiny_data):
    return score_kernels(tiny_model, tiny_data)


def test_prune_shapes_and_theta(tiny_model, tiny_report):
    pruned = prune(tiny_model, tiny_report)
    c = tiny_model.arch.channels
    half = (c + 1) // 2
    assert pruned.values["first_conv.w"].shape[0] == half
    assert pruned.values["gen.w"].shape[0] == half
    np.testing.assert_array_equal(
        pruned.values["fusion.theta"],
        tiny_model.values["fusion.theta"][np.ix_(tiny_report.fstar_keep, tiny_report.f1_keep)],
    )
    assert pruned.meta["f1_removed"] == sorted(set(range(c)) - set(tiny_report.f1_keep))
    out = forward(pruned, np.random.default_rng(0).uniform(size=(2, 32)))
    assert out.ecg_hat.shape == (2, 32) and out.class_probs.shape == (2, 5)


def test_prune_is_projection(tiny_model, tiny_report):
    once = prune(tiny_model, tiny_report)
    twice = prune(once, tiny_report)
    assert all(np.array_equal(once.values[k], twice.values[k]) for k in once.values)
    other = SignificanceReport(**{**tiny_report.__dict__, "f1_keep": list(range(3))})
    with pytest.raises(ValueError, match="different report"):
        prune(once, other)


def test_prune_rejects_bad_report(tiny_model, tiny_report):
    bad = SignificanceReport(**{**tiny_report.__dict__, "f1_keep": [0, 0, 1]})
    with pytest.raises(ValueError):
        prune(tiny_model, bad)
    short = SignificanceReport(**{**tiny_report.__dict__, "scores_f1": [1.0]})
    with pytest.raises(ValueError):
        prune(tiny_model, short)


def test_full_prune_geometry():
    model = ModelParams.initialize(full_architecture(), 0)
    rep = SignificanceReport([0.0] * 60, [0.0] * 60, list(range(0, 60, 2)), list(range(1, 60, 2)), 1.0, 1)
    pruned = prune(model, rep)
    shapes = param_shapes(pruned.arch)
    assert shapes["first_conv.w"][0] == 30 and shapes["gen.w"][0] == 30
    assert shapes["fusion.theta"] == (30, 30)
    assert pruned.arch.attention[0] == 120 and pruned.arch.attention[-1] == 30
    assert shapes["cls.conv1.w"][1] == 30
    out = forward(pruned, np.zeros(268) + 0.5)
    assert out.ecg_hat.shape == (268,)
    small = recursive_swap(pruned)
    assert small.arch == compressed_architecture()
    assert small.n_params() == count_params(compressed_architecture())


def test_report_json_round_trip(tiny_report):
    assert SignificanceReport.from_json(tiny_report.to_json()) == tiny_report


def test_recursive_depth_one_and_two(tiny_model, rng):
    arch = tiny_compressed_architecture(32)
    vals = ModelParams.initialize(arch, 1).tensors()
    spec = arch.fems[0]
    x = Tensor(rng.standard_normal((2, spec.n_in, 32)))
    one = recursive_forward(x, vals, "fem", spec, 1).data
    np.testing.assert_array_equal(one, module_forward(x, vals, "fem", spec).data)
    two = recursive_forward(x, vals, "fem", spec, 2).data
    manual = module_forward(module_forward(x, vals, "fem", spec), vals, "fem", spec).data
    np.testing.assert_array_equal(two, manual)


def test_recursive_zero_module(rng):
    arch = tiny_compressed_architecture(32)
    vals = {k: Tensor(np.zeros_like(v)) for k, v in ModelParams.initialize(arch, 1).values.items()}
    spec = arch.fems[0]
    x = Tensor(rng.standard_normal((1, spec.n_in, 32)))
    for depth in (1, 2, 3):
        assert np.all(recursive_forward(x, vals, "fem", spec, depth).data == 0)


def test_recursive_modules_share_parameters(rng):
    # one parameter set drives both applications: a change shows up in both
    arch = tiny_compressed_architecture(32)
    model = ModelParams.initialize(arch, 1)
    spec = arch.fems[0]
    x = Tensor(rng.standard_normal((1, spec.n_in, 32)))
    vals = model.tensors()
    base = recursive_forward(x, vals, "fem", spec, 2).data
    vals["fem.c1.w"].data[...] *= 1.5
    changed = recursive_forward(x, vals, "fem", spec, 2).data
    first_only = module_forward(x, vals, "fem", spec)
    vals["fem.c1.w"].data[...] /= 1.5
    mixed = module_forward(first_only, vals, "fem", spec).data
    assert not np.allclose(changed, base) and not np.allclose(changed, mixed)
    assert sum(k.startswith("fem.") for k in model.values) == 8  # 2 layers x (w, b, gain, bias)


def test_recursive_needs_square_module():
    c1 = LayerSpec(4, 3, 5)
    spec = ModuleSpec(c1, LayerSpec(3, 2, 5))  # 4 -> 5 channels
    with pytest.raises(ValueError, match="equal in/out"):
        recursive_forward(Tensor(np.zeros((1, 4, 32))), {}, "m", spec, 2)


def test_swap_requires_pruned(tiny_model):
    with pytest.raises(ValueError, match="prune"):
        recursive_swap(tiny_model)


def test_finetune_config():
    cfg = finetune_config(TrainConfig(seed=4))
    assert cfg.epochs == 20 and cfg.lr_drop_epoch == 10 and cfg.seed == 4


def test_compress_and_finetune_tiny(tiny_model, tiny_data):
    res = compress_and_finetune(tiny_model, tiny_data, TrainConfig(epochs=1, batch_size=5))
    assert res.model.arch.variant == "compressed"
    assert res.params_compressed == res.model.n_params() < res.params_full
    assert 0 < res.reduction < 1
    assert len(res.history) == 1
