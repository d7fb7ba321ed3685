"""Losses, Adam, and the supervised / semi-supervised training loops."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .network import ForwardOutputs, ModelParams, forward, full_architecture, without_diagnosis

CE_FLOOR = 1e-12


@dataclass
class TrainConfig:
    """Optimisation hyper-parameters; defaults follow the published schedule."""

    epochs: int = 40
    batch_size: int = 10
    lr_initial: float = 5e-4
    lr_after: float = 1e-4
    lr_drop_epoch: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_d: float = 0.1
    lambda_s: float = 5e-6
    lambda_c: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.epochs < 0 or self.batch_size < 1 or self.lr_drop_epoch < 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and lr_drop_epoch >= 0 required")
        for name in ("lr_initial", "lr_after", "eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        for name in ("lambda_d", "lambda_s", "lambda_c"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative")

    def lr_at(self, epoch: int) -> float:
        return self.lr_initial if epoch < self.lr_drop_epoch else self.lr_after

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


# ----------------------------------------------------------------------------
# losses


@dataclass
class LossTerms:
    """Batch-mean loss; ``total`` is differentiable, the rest are plain floats."""

    total: Tensor
    rec: float
    ce: float
    sparse: float
    cycle: float | None = None


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.dtype.kind not in "iu" or np.any(labels < 0) or np.any(labels >= n_classes):
        raise ValueError(f"labels must be integers in [0, {n_classes})")
    out = np.zeros(labels.shape + (n_classes,))
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


def _check_one_hot(label: np.ndarray) -> None:
    if not (np.all((label == 0) | (label == 1)) and np.all(label.sum(axis=-1) == 1)):
        raise ValueError("label must be one-hot")


def sparsity_loss(fstar, f1) -> Tensor:
    """Sum of row and column Euclidean norms of both maps.

    Maps are ``(C, V)`` or batched ``(B, C, V)``; the batched form returns one
    value per example.
    """
    fstar, f1 = ad.as_tensor(fstar), ad.as_tensor(f1)
    total = None
    for m in (fstar, f1):
        term = ad.sum(ad.group_norms(m, -1), -1) + ad.sum(ad.group_norms(m, -2), -1)
        total = term if total is None else total + term
    return total


def squared_error(a: Tensor, b) -> Tensor:
    """Per-example squared Euclidean distance over the last axis."""
    return ad.sum(ad.square(a - ad.as_tensor(b)), -1)


def cross_entropy(probs: Tensor, label: np.ndarray) -> Tensor:
    return -ad.sum(ad.log_clamped(probs, CE_FLOOR) * Tensor(label), -1)


def joint_loss(out: ForwardOutputs, ecg, label, cfg: TrainConfig) -> LossTerms:
    """Reconstruction + weighted cross-entropy + weighted group sparsity.

    Works on one example or a batch; batched terms are averaged over the batch.
    ``label`` is one-hot (or ``None`` to drop the cross-entropy term).
    """
    rec = squared_error(out.ecg_hat, ecg)
    sp = sparsity_loss(out.fstar_map, out.f1_map)
    total = rec + ad.scale(sp, cfg.lambda_s)
    ce_val = 0.0
    if label is not None and out.class_probs is not None:
        label = np.asarray(label, dtype=np.float64)
        _check_one_hot(label)
        if label.shape != out.class_probs.shape:
            raise ValueError(f"label shape {label.shape} != probabilities {out.class_probs.shape}")
        ce = cross_entropy(out.class_probs, label)
        total = total + ad.scale(ce, cfg.lambda_d)
        ce_val = float(ce.data.mean())
    return LossTerms(ad.mean(total), float(rec.data.mean()), ce_val, float(sp.data.mean()))


def cycle_loss(x, g_first: Callable[[Tensor], Tensor], g_second: Callable[[Tensor], Tensor]) -> Tensor:
    """``mean ||x - g_second(g_first(x))||^2`` over the batch."""
    x = ad.as_tensor(x)
    return ad.mean(squared_error(g_second(g_first(x)), x))


def ecg_map(model: ModelParams, p: dict[str, Tensor] | None = None) -> Callable[[Tensor], Tensor]:
    """The generation path of ``model`` as a callable on batches."""
    return lambda x: forward(model, x, p, diagnosis=False).ecg_hat


# ----------------------------------------------------------------------------
# Adam


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, values: dict[str, np.ndarray]) -> "OptimizerState":
        return cls({k: np.zeros_like(a) for k, a in values.items()}, {k: np.zeros_like(a) for k, a in values.items()})


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """Bias-corrected Adam update; returns new parameter and state dicts."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
    t = state.step + 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    new_p, new_m, new_v = {}, {}, {}
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {value.shape} for {name!r}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        new_p[name] = value - lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        new_m[name], new_v[name] = m, v
    return new_p, OptimizerState(new_m, new_v, t)


# ----------------------------------------------------------------------------
# loops


@dataclass
class TrainResult:
    model: ModelParams
    history: list[dict]
    batch_losses: list[float] = field(default_factory=list)
    optimizer: OptimizerState | None = None


@dataclass
class SemiResult:
    model_pe: ModelParams
    model_ep: ModelParams
    history: list[dict]
    batch_losses: list[float] = field(default_factory=list)


def _arrays(data, need_ecg=True, need_label=True):
    if isinstance(data, tuple):
        return data
    if not data:
        raise ValueError("empty dataset")
    ppg = np.stack([c.ppg for c in data])
    ecg = None
    if need_ecg:
        if any(c.ecg is None for c in data):
            raise ValueError("training needs paired cycles; found a cycle without ECG")
        ecg = np.stack([c.ecg for c in data])
    labels = None
    if need_label:
        if any(c.label is None for c in data):
            raise ValueError("training needs labelled cycles; found a cycle without a label")
        labels = np.array([c.label for c in data], dtype=int)
    return ppg, ecg, labels


def _grads(p: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in p.items()}


class _Log:
    def __init__(self, target):
        self._own = isinstance(target, (str, bytes)) or hasattr(target, "__fspath__")
        self._fh = open(target, "w") if self._own else target

    def write(self, rec: dict) -> None:
        if self._fh is not None:
            self._fh.write(json.dumps(rec) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._own and self._fh is not None:
            self._fh.close()


class _BatchStream:
    """Endless shuffled mini-batches; a fresh permutation each pass."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n, self.bs, self.rng = n, batch_size, rng
        self.perm = np.zeros(0, dtype=int)
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.pos >= self.perm.size:
            self.perm = self.rng.permutation(self.n)
            self.pos = 0
        idx = self.perm[self.pos : self.pos + self.bs]
        self.pos += self.bs
        return idx


def _shuffle_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1])


def train_supervised(
    data,
    cfg: TrainConfig | None = None,
    model: ModelParams | None = None,
    log=None,
    progress: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Mini-batch Adam on the joint loss.

    ``data`` is a list of paired, labelled :class:`CycleExample`. Without
    ``model`` a full network is initialised from ``cfg.seed``. Returns the
    trained copy plus per-epoch mean losses.
    """
    cfg = cfg or TrainConfig()
    if model is None:
        model = ModelParams.initialize(full_architecture(len(data[0].ppg) if data else 268), cfg.seed)
    model = model.copy()
    labelled = model.arch.has_diagnosis
    ppg, ecg, labels = _arrays(data, need_label=labelled)
    n = ppg.shape[0]
    targets = one_hot(labels, model.arch.n_classes) if labelled else None
    stream = _BatchStream(n, cfg.batch_size, _shuffle_rng(cfg.seed))
    state = OptimizerState.zeros(model.values)
    steps = math.ceil(n / cfg.batch_size)
    history, batch_losses = [], []
    logger = _Log(log)
    try:
        for epoch in range(cfg.epochs):
            lr = cfg.lr_at(epoch)
            acc = np.zeros(4)
            for _ in range(steps):
                idx = stream.next()
                p = model.tensors(requires_grad=True)
                out = forward(model, ppg[idx], p)
                terms = joint_loss(out, ecg[idx], None if targets is None else targets[idx], cfg)
                terms.total.backward()
                model.values, state = adam_step(model.values, _grads(p), state, lr, cfg)
                batch_losses.append(float(terms.total.data))
                acc += len(idx) * np.array([terms.total.data, terms.rec, terms.ce, terms.sparse])
            acc /= n
            rec = {
                "epoch": epoch,
                "loss_total": float(acc[0]),
                "loss_rec": float(acc[1]),
                "loss_ce": float(acc[2]),
                "loss_sparse": float(acc[3]),
                "loss_cycle": None,
                "lr": lr,
            }
            history.append(rec)
            logger.write(rec)
            if progress:
                progress(rec)
    finally:
        logger.close()
    return TrainResult(model, history, batch_losses, state)


def train_semisupervised(
    paired,
    unpaired_ppg=(),
    unpaired_ecg=(),
    cfg: TrainConfig | None = None,
    model_pe: ModelParams | None = None,
    model_ep: ModelParams | None = None,
    log=None,
    progress: Callable[[dict], None] | None = None,
) -> SemiResult:
    """Joint training of the PPG-to-ECG network and an ECG-to-PPG twin.

    Every step applies one paired batch (joint loss for PPG-to-ECG plus
    reconstruction and sparsity for ECG-to-PPG) followed by one unpaired batch
    (cycle-consistency residuals weighted by ``lambda_c``; cross-entropy on
    unpaired PPG that carries a label). An epoch lasts until the largest pool
    has been visited once. With both unpaired pools empty, the PPG-to-ECG
    trajectory equals :func:`train_supervised` for the same seed.
    """
    cfg = cfg or TrainConfig()
    unpaired_ppg, unpaired_ecg = list(unpaired_ppg), list(unpaired_ecg)
    if not unpaired_ppg and not unpaired_ecg:
        warnings.warn("no unpaired data; semi-supervised training reduces to supervised", stacklevel=2)
    if not paired:
        raise ValueError("semi-supervised training needs at least one paired cycle")
    if model_pe is None:
        model_pe = ModelParams.initialize(full_architecture(len(paired[0].ppg)), cfg.seed)
    if model_ep is None:
        model_ep = ModelParams.initialize(without_diagnosis(model_pe.arch), np.random.default_rng([cfg.seed, 2]))
    if model_ep.arch.has_diagnosis:
        raise ValueError("the ECG-to-PPG network must not have a diagnosis branch")
    g_pe, g_ep = model_pe.copy(), model_ep.copy()
    ncls = g_pe.arch.n_classes

    ppg, ecg, labels = _arrays(paired)
    targets = one_hot(labels, ncls)
    u_ppg = np.stack([c.ppg for c in unpaired_ppg]) if unpaired_ppg else None
    u_lab = None
    if unpaired_ppg and all(c.label is not None for c in unpaired_ppg):
        u_lab = one_hot(np.array([c.label for c in unpaired_ppg], dtype=int), ncls)
    u_ecg = np.stack([c.ecg if c.ecg is not None else c.ppg for c in unpaired_ecg]) if unpaired_ecg else None

    bs = cfg.batch_size
    s_pair = _BatchStream(len(ppg), bs, _shuffle_rng(cfg.seed))
    s_uppg = _BatchStream(len(unpaired_ppg), bs, np.random.default_rng([cfg.seed, 3])) if unpaired_ppg else None
    s_uecg = _BatchStream(len(unpaired_ecg), bs, np.random.default_rng([cfg.seed, 4])) if unpaired_ecg else None
    steps = math.ceil(max(len(ppg), len(unpaired_ppg), len(unpaired_ecg)) / bs)
    st_pe, st_ep = OptimizerState.zeros(g_pe.values), OptimizerState.zeros(g_ep.values)
    history, batch_losses = [], []
    logger = _Log(log)

    def update(p_pe, p_ep, lr):
        nonlocal st_pe, st_ep
        g_pe.values, st_pe = adam_step(g_pe.values, _grads(p_pe), st_pe, lr, cfg)
        g_ep.values, st_ep = adam_step(g_ep.values, _grads(p_ep), st_ep, lr, cfg)

    try:
        for epoch in range(cfg.epochs):
            lr = cfg.lr_at(epoch)
            sums = dict(total=0.0, rec=0.0, ce=0.0, sparse=0.0, cycle=0.0)
            n_pair = n_cyc = 0
            for _ in range(steps):
                # paired batch, both directions
                idx = s_pair.next()
                p_pe, p_ep = g_pe.tensors(True), g_ep.tensors(True)
                out = forward(g_pe, ppg[idx], p_pe)
                terms = joint_loss(out, ecg[idx], targets[idx], cfg)
                back = forward(g_ep, ecg[idx], p_ep)
                back_terms = joint_loss(back, ppg[idx], None, cfg)
                loss = terms.total + back_terms.total
                loss.backward()
                update(p_pe, p_ep, lr)
                batch_losses.append(float(loss.data))
                sums["total"] += len(idx) * float(loss.data)
                sums["rec"] += len(idx) * terms.rec
                sums["ce"] += len(idx) * terms.ce
                sums["sparse"] += len(idx) * terms.sparse
                n_pair += len(idx)
                if s_uppg is None and s_uecg is None:
                    continue
                # unpaired batch: cycle consistency
                p_pe, p_ep = g_pe.tensors(True), g_ep.tensors(True)
                loss = None
                cyc_sum, cyc_n = 0.0, 0
                if s_uppg is not None:
                    j = s_uppg.next()
                    out = forward(g_pe, u_ppg[j], p_pe, diagnosis=u_lab is not None)
                    p_rec = forward(g_ep, out.ecg_hat, p_ep, diagnosis=False).ecg_hat
                    res = squared_error(p_rec, u_ppg[j])
                    loss = ad.scale(ad.mean(res), cfg.lambda_c)
                    if u_lab is not None:
                        loss = loss + ad.scale(ad.mean(cross_entropy(out.class_probs, u_lab[j])), cfg.lambda_d)
                    cyc_sum += float(res.data.sum())
                    cyc_n += len(j)
                if s_uecg is not None:
                    j = s_uecg.next()
                    e_mid = forward(g_ep, u_ecg[j], p_ep, diagnosis=False).ecg_hat
                    e_rec = forward(g_pe, e_mid, p_pe, diagnosis=False).ecg_hat
                    res = squared_error(e_rec, u_ecg[j])
                    term = ad.scale(ad.mean(res), cfg.lambda_c)
                    loss = term if loss is None else loss + term
                    cyc_sum += float(res.data.sum())
                    cyc_n += len(j)
                loss.backward()
                update(p_pe, p_ep, lr)
                batch_losses.append(float(loss.data))
                sums["total"] += cyc_n * float(loss.data)
                sums["cycle"] += cyc_sum
                n_cyc += cyc_n
            rec = {
                "epoch": epoch,
                "loss_total": sums["total"] / max(1, n_pair + n_cyc),
                "loss_rec": sums["rec"] / n_pair,
                "loss_ce": sums["ce"] / n_pair,
                "loss_sparse": sums["sparse"] / n_pair,
                "loss_cycle": sums["cycle"] / n_cyc if n_cyc else None,
                "lr": lr,
            }
            history.append(rec)
            logger.write(rec)
            if progress:
                progress(rec)
    finally:
        logger.close()
    return SemiResult(g_pe, g_ep, history, batch_losses)
