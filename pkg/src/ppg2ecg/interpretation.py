"""Integrated-gradients attribution of network outputs to PPG samples."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .network import ModelParams, forward

DEFAULT_STEPS = 50


@dataclass
class AttributionMap:
    """IG values, one row per selected output.

    ``values[r, i]`` is the contribution of input sample ``i`` to output
    ``indices[r]``; ``output_delta[r]`` is that output at the input minus its
    value at the zero baseline.
    """

    values: np.ndarray
    kind: str
    indices: list[int]
    steps: int
    output_delta: np.ndarray
    completeness_gap: np.ndarray

    def relative_gap(self) -> np.ndarray:
        return self.completeness_gap / np.maximum(np.abs(self.output_delta), 1e-300)


OutputFn = Callable[[Tensor], Tensor]


def output_fn(model: ModelParams, kind: str) -> OutputFn:
    """Batched map ``(B, L) -> (B, n_outputs)`` for ``kind`` in {"ecg", "disease"}."""
    if kind == "ecg":
        return lambda x: forward(model, x, diagnosis=False).ecg_hat
    if kind == "disease":
        if not model.arch.has_diagnosis:
            raise ValueError("model has no diagnosis branch")
        return lambda x: forward(model, x).class_probs
    raise ValueError(f"unknown target kind {kind!r}")


def midpoints(steps: int) -> np.ndarray:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    return (np.arange(1, steps + 1) - 0.5) / steps


def integrated_gradients_fn(
    fn: OutputFn, p, rows: Sequence[int], steps: int = DEFAULT_STEPS, chunk: int = 50, kind: str = "custom"
) -> AttributionMap:
    """Midpoint-rule IG from the zero baseline for outputs ``rows`` of ``fn``.

    One forward graph per chunk of interpolation points is reused for every
    requested output row.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("attribution takes a single cycle")
    alphas = midpoints(steps)
    ends = fn(Tensor(np.stack([p, np.zeros_like(p)]))).data
    n_out = ends.shape[1]
    rows = [int(r) for r in rows]
    for r in rows:
        if not 0 <= r < n_out:
            raise ValueError(f"target index {r} outside [0, {n_out})")
    grad_sum = np.zeros((len(rows), p.size))
    for start in range(0, steps, chunk):
        a = alphas[start : start + chunk]
        x = Tensor(a[:, None] * p[None, :], requires_grad=True)
        y = fn(x)
        tape = Tape.from_output(y)
        for k, r in enumerate(rows):
            seed = np.zeros(y.shape)
            seed[:, r] = 1.0
            x.grad = None
            tape.run(y, seed)
            grad_sum[k] += x.grad.sum(axis=0)
    values = p[None, :] * grad_sum / steps
    delta = ends[0, rows] - ends[1, rows]
    gap = np.abs(values.sum(axis=1) - delta)
    return AttributionMap(values, kind, rows, steps, delta, gap)


def integrated_gradients(
    model: ModelParams, p, target: tuple[str, int | Sequence[int]], steps: int = DEFAULT_STEPS, chunk: int = 50
) -> AttributionMap:
    """IG for ``target = ("ecg", j)`` or ``("disease", d)``; the index may be a list."""
    kind, idx = target
    rows = [idx] if np.isscalar(idx) else list(idx)
    return integrated_gradients_fn(output_fn(model, kind), p, rows, steps, chunk, kind)


def normalize_rows(values: np.ndarray) -> np.ndarray:
    """Min-max scale each row to [0, 1]; constant rows become 0."""
    lo = values.min(axis=1, keepdims=True)
    span = values.max(axis=1, keepdims=True) - lo
    return np.where(span > 0, (values - lo) / np.where(span > 0, span, 1.0), 0.0)


def ecg_attribution_heatmap(
    model: ModelParams, p, steps: int = DEFAULT_STEPS, out_prefix=None, chunk: int = 50
) -> AttributionMap:
    """IG of every ECG output point; row ``j`` explains ``ECG_hat[j]``.

    With ``out_prefix`` the raw matrix goes to ``<prefix>.csv`` and the
    row-normalised heatmap to ``<prefix>.png``.
    """
    amap = integrated_gradients(model, p, ("ecg", range(model.arch.length)), steps, chunk)
    if out_prefix is not None:
        out_prefix = Path(out_prefix)
        np.savetxt(out_prefix.with_suffix(".csv"), amap.values, delimiter=",", fmt="%.17g")
        render_heatmap(normalize_rows(amap.values), out_prefix.with_suffix(".png"))
    return amap


def render_heatmap(matrix: np.ndarray, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4.5), dpi=100)
    im = ax.imshow(matrix, origin="lower", aspect="auto", cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xlabel("PPG sample")
    ax.set_ylabel("ECG sample")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def top_count(top_fraction: float, length: int) -> int:
    if not 0 < top_fraction <= 1:
        raise ValueError("top_fraction must lie in (0, 1]")
    # round first so 0.1 * 30 does not become 4
    return int(math.ceil(round(top_fraction * length, 9)))


def curve_normals(p: np.ndarray) -> np.ndarray:
    """Unit normals of the curve ``(i, p[i])`` at every sample."""
    dy = np.gradient(np.asarray(p, dtype=np.float64))
    n = np.stack([-dy, np.ones_like(dy)], axis=1)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


@dataclass
class Highlight:
    indices: list[int]
    normals: list[list[float]]
    attribution: AttributionMap

    def to_json(self) -> str:
        return json.dumps({"indices": self.indices, "normals": self.normals})


def diagnosis_attribution(
    model: ModelParams, p, disease: int, top_fraction: float = 0.2, steps: int = DEFAULT_STEPS
) -> Highlight:
    """The ``ceil(top_fraction * L)`` PPG samples with the largest |IG| for one class."""
    p = np.asarray(p, dtype=np.float64)
    k = top_count(top_fraction, p.size)
    amap = integrated_gradients(model, p, ("disease", disease), steps)
    mag = np.abs(amap.values[0])
    order = np.lexsort((np.arange(p.size), -mag))
    idx = sorted(int(i) for i in order[:k])
    normals = curve_normals(p)[idx]
    return Highlight(idx, normals.tolist(), amap)


def linear_surrogate(u) -> OutputFn:
    """``G(P) = <u, P>`` as a batched output function, for exactness checks."""
    u = np.asarray(u, dtype=np.float64)
    return lambda x: ad.reshape(ad.matmul(x, Tensor(u[:, None])), (x.shape[0], 1))
