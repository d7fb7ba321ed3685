"""Kernel pruning by significance score, recursive-module swap, and fine-tuning."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .network import (
    ArchConfig,
    LayerSpec,
    ModelParams,
    compressed_architecture,
    forward,
    init_params,
    param_shapes,
    tiny_compressed_architecture,
)
from .training import TrainConfig, train_supervised


@dataclass
class SignificanceReport:
    """Per-kernel scores of the two prunable layers and the kept index sets."""

    scores_f1: list[float]
    scores_fstar: list[float]
    f1_keep: list[int]
    fstar_keep: list[int]
    lambda_w: float
    n_calib: int
    normalized: bool = True

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SignificanceReport":
        return cls(**json.loads(text))


def _znorm(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    return (x - x.mean()) / sd if sd > 0 else np.zeros_like(x)


def combine_criteria(sq_norms, weights, lambda_w: float = 1.0, normalize: bool = True) -> np.ndarray:
    """``S[i] = norm[i] + lambda_w * weight[i]``.

    With ``normalize`` both criteria are z-scored first and the result is
    shifted so the smallest score is 0; ranking is unaffected by the shift.
    """
    a, b = np.asarray(sq_norms, dtype=np.float64), np.asarray(weights, dtype=np.float64)
    if normalize:
        s = _znorm(a) + lambda_w * _znorm(b)
        return s - s.min()
    return a + lambda_w * b


def keep_top_half(scores) -> list[int]:
    """Indices of the ``ceil(C / 2)`` highest scores; ties keep lower indices. Sorted."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((np.arange(scores.size), -scores))
    return sorted(int(i) for i in order[: math.ceil(scores.size / 2)])


def score_kernels(
    model: ModelParams, calib, lambda_w: float = 1.0, normalize: bool = True, batch: int = 100
) -> SignificanceReport:
    """Score first-conv kernels (via ``F_1``) and generation kernels (via ``F*``).

    The feature criterion is the mean squared channel norm over ``calib``.
    The attention criterion is the channel weight ``w`` for ``F*`` and the
    fusion mass ``sum_i alpha[i, j]`` received by channel ``j`` for ``F_1``.
    """
    if not calib:
        raise ValueError("calibration set is empty")
    if model.f1_keep is not None:
        raise ValueError("model is already pruned")
    ppg = np.stack([c.ppg for c in calib])
    c = model.arch.channels
    acc = {k: np.zeros(c) for k in ("n1", "a1", "ns", "as")}
    for i in range(0, len(ppg), batch):
        out = forward(model, ppg[i : i + batch])
        acc["n1"] += (out.f1_map.data**2).sum(axis=(0, 2))
        acc["ns"] += (out.fstar_map.data**2).sum(axis=(0, 2))
        acc["a1"] += out.fusion_alpha.data.sum(axis=(0, 1))
        if out.channel_weights is not None:
            acc["as"] += out.channel_weights.data.sum(axis=0)
    n = len(ppg)
    s1 = combine_criteria(acc["n1"] / n, acc["a1"] / n, lambda_w, normalize)
    ss = combine_criteria(acc["ns"] / n, acc["as"] / n, lambda_w, normalize)
    return SignificanceReport(s1.tolist(), ss.tolist(), keep_top_half(s1), keep_top_half(ss), lambda_w, n, normalize)


def _resize(spec: LayerSpec, n_in: int | None = None, n_out: int | None = None) -> LayerSpec:
    return replace(spec, n_in=spec.n_in if n_in is None else n_in, n_out=spec.n_out if n_out is None else n_out)


def pruned_architecture(arch: ArchConfig, n_f1: int, n_fstar: int) -> ArchConfig:
    fem0 = arch.fems[0]
    fems = (replace(fem0, c1=_resize(fem0.c1, n_in=n_f1)),) + arch.fems[1:]
    new = replace(
        arch,
        first_conv=_resize(arch.first_conv, n_out=n_f1),
        fems=fems,
        generation=_resize(arch.generation, n_in=n_fstar),
        variant="pruned",
    )
    if arch.has_diagnosis:
        att = (4 * n_fstar,) + arch.attention[1:-1] + (n_fstar,)
        cls = (_resize(arch.classifier[0], n_in=n_fstar),) + arch.classifier[1:]
        new = replace(new, attention=att, classifier=cls)
    new.validate()
    return new


def prune(model: ModelParams, report: SignificanceReport) -> ModelParams:
    """Keep the reported half of the first-conv and generation kernels.

    Every tensor touching those channels is sliced: first-conv outputs, the
    first FEM's input, the fusion matrix, the generation kernels, the
    attention network's input/output units, and the classifier's first conv.
    Applying the same report to an already-pruned model returns it unchanged.
    """
    f1k, fsk = list(report.f1_keep), list(report.fstar_keep)
    if model.f1_keep is not None:
        if model.f1_keep == f1k and model.fstar_keep == fsk:
            return model.copy()
        raise ValueError("model was pruned with a different report")
    c = model.arch.channels
    if len(report.scores_f1) != c or len(report.scores_fstar) != c:
        raise ValueError(f"report covers {len(report.scores_f1)} channels, model has {c}")
    for keep in (f1k, fsk):
        if len(keep) != math.ceil(c / 2) or len(set(keep)) != len(keep) or not all(0 <= i < c for i in keep):
            raise ValueError("kept sets must hold ceil(C/2) distinct channel indices")
    arch = pruned_architecture(model.arch, len(f1k), len(fsk))
    v = {k: a.copy() for k, a in model.values.items()}
    for kind in ("w", "b", "ln_g", "ln_b"):
        v[f"first_conv.{kind}"] = v[f"first_conv.{kind}"][f1k]
    v["fem1.c1.w"] = v["fem1.c1.w"][:, f1k]
    v["fusion.theta"] = v["fusion.theta"][np.ix_(fsk, f1k)]
    v["gen.w"] = v["gen.w"][fsk]
    if arch.has_diagnosis:
        cols = (4 * np.asarray(fsk)[:, None] + np.arange(4)[None, :]).ravel()
        v["att.fc1.w"] = v["att.fc1.w"][:, cols]
        last = len(arch.attention) - 1
        v[f"att.fc{last}.w"] = v[f"att.fc{last}.w"][fsk]
        v[f"att.fc{last}.b"] = v[f"att.fc{last}.b"][fsk]
        v["cls.conv1.w"] = v["cls.conv1.w"][:, fsk]
    shapes = param_shapes(arch)
    for k, s in shapes.items():
        if v[k].shape != s:
            raise AssertionError(f"pruned {k} has shape {v[k].shape}, expected {s}")
    meta = dict(model.meta, f1_removed=sorted(set(range(c)) - set(f1k)), fstar_removed=sorted(set(range(c)) - set(fsk)))
    return ModelParams(arch, {k: v[k] for k in shapes}, f1k, fsk, meta)


def default_target(arch: ArchConfig) -> ArchConfig:
    """Compressed layout matching ``arch``: the published one, or its tiny analogue."""
    if arch.channels == 60 or (arch.variant == "pruned" and arch.channels == 30 and arch.length == 268):
        return compressed_architecture(arch.length, arch.has_diagnosis)
    return tiny_compressed_architecture(arch.length, arch.has_diagnosis, channels=arch.first_conv.n_out)


def recursive_swap(pruned: ModelParams, target: ArchConfig | None = None, seed: int = 0) -> ModelParams:
    """Replace the FEM and FTM cascades with one shared module each, applied twice.

    Non-cascade parameters carry over from ``pruned``; the shared modules are
    freshly initialised from ``seed``.
    """
    if pruned.f1_keep is None:
        raise ValueError("prune before swapping in recursive modules")
    target = target or default_target(pruned.arch)
    if target.recursion_depth < 2:
        raise ValueError("target architecture must use recursion")
    fresh = init_params(target, seed)
    values = {}
    for k, shape in param_shapes(target).items():
        if k.startswith(("fem.", "ftm.")):
            values[k] = fresh[k]
        else:
            if k not in pruned.values or pruned.values[k].shape != shape:
                raise ValueError(f"pruned model does not fit the target layout at {k}")
            values[k] = pruned.values[k].copy()
    return ModelParams(target, values, list(pruned.f1_keep), list(pruned.fstar_keep), dict(pruned.meta))


def finetune_config(cfg: TrainConfig | None = None) -> TrainConfig:
    """20 fine-tuning epochs, learning rate dropped halfway."""
    cfg = cfg or TrainConfig()
    return replace(cfg, epochs=20, lr_drop_epoch=10)


@dataclass
class CompressionResult:
    model: ModelParams
    report: SignificanceReport
    history: list[dict]
    params_full: int
    params_compressed: int

    @property
    def reduction(self) -> float:
        return 1.0 - self.params_compressed / self.params_full


def compress_and_finetune(
    model: ModelParams,
    trainset,
    cfg: TrainConfig | None = None,
    calib=None,
    lambda_w: float = 1.0,
    target: ArchConfig | None = None,
    log=None,
    progress=None,
) -> CompressionResult:
    """Score, prune, swap in recursive modules, then fine-tune on ``trainset``.

    ``cfg`` is used as given for fine-tuning (see :func:`finetune_config`);
    ``calib`` defaults to the training set.
    """
    cfg = cfg or finetune_config()
    report = score_kernels(model, calib if calib is not None else trainset, lambda_w)
    small = recursive_swap(prune(model, report), target, seed=cfg.seed)
    result = train_supervised(trainset, cfg, model=small, log=log, progress=progress)
    return CompressionResult(result.model, report, result.history, model.n_params(), result.model.n_params())

