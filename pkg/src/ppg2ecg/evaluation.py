"""Fidelity and diagnosis metrics, plus the JSON evaluation report."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .network import ModelParams, forward_full

# k / 200 is correctly rounded; linspace can land one ulp above a grid value
THRESHOLDS = np.arange(201) / 200.0


def pearson(e, e_hat) -> float:
    """Centered cosine similarity between reference and inferred cycles."""
    e, e_hat = np.asarray(e, dtype=np.float64), np.asarray(e_hat, dtype=np.float64)
    if e.shape != e_hat.shape:
        raise ValueError(f"shape mismatch {e.shape} vs {e_hat.shape}")
    a, b = e - e.mean(), e_hat - e_hat.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("pearson correlation undefined for a constant sequence")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def rrmse(e, e_hat) -> float:
    """``||e - e_hat|| / ||e||``."""
    e, e_hat = np.asarray(e, dtype=np.float64), np.asarray(e_hat, dtype=np.float64)
    if e.shape != e_hat.shape:
        raise ValueError(f"shape mismatch {e.shape} vs {e_hat.shape}")
    ne = np.linalg.norm(e)
    if ne == 0:
        raise ValueError("rRMSE undefined for a zero reference")
    return float(np.linalg.norm(e - e_hat) / ne)


def f1_sweep(probs, labels, d: int, thresholds=THRESHOLDS) -> tuple[float, float]:
    """Best one-vs-rest F1 for class ``d`` over a threshold grid.

    A sample is predicted positive when ``probs[:, d] >= threshold``. Thresholds
    that predict no positives score 0. Returns ``(best_f1, smallest threshold
    reaching it)``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 2 or probs.shape[0] != labels.shape[0] or probs.shape[0] == 0:
        raise ValueError("probs must be (n, classes) with one label per row, n >= 1")
    if not 0 <= d < probs.shape[1]:
        raise ValueError(f"class {d} out of range")
    truth = labels == d
    if not truth.any():
        raise ValueError(f"class {d} has no samples; F1 undefined")
    pred = probs[:, d][:, None] >= np.asarray(thresholds)[None, :]
    tp = (pred & truth[:, None]).sum(axis=0)
    n_pred = pred.sum(axis=0)
    f1 = np.where(n_pred > 0, 2.0 * tp / (n_pred + truth.sum()), 0.0)
    k = int(np.argmax(f1))
    return float(f1[k]), float(thresholds[k])


def confusion_matrix(probs, labels, n_classes: int | None = None) -> np.ndarray:
    """Counts of true class ``m`` (rows) predicted as ``n`` (columns) at argmax."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    n_classes = n_classes or probs.shape[1]
    out = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(out, (labels, probs.argmax(axis=1)), 1)
    return out


@dataclass
class FidelityStats:
    rho_mean: float
    rho_std: float
    rrmse_mean: float
    rrmse_std: float
    n: int


@dataclass
class DiagnosisStats:
    per_class: list[dict]
    avg_f1: float
    accuracy: float
    confusion: list[list[int]]


def fidelity_stats(ecg, ecg_hat) -> FidelityStats:
    ecg, ecg_hat = np.atleast_2d(ecg), np.atleast_2d(ecg_hat)
    if ecg.shape[0] == 0:
        raise ValueError("empty test set")
    rho = np.array([pearson(a, b) for a, b in zip(ecg, ecg_hat)])
    err = np.array([rrmse(a, b) for a, b in zip(ecg, ecg_hat)])
    return FidelityStats(float(rho.mean()), float(rho.std()), float(err.mean()), float(err.std()), len(rho))


def diagnosis_stats(probs, labels) -> DiagnosisStats:
    probs, labels = np.asarray(probs), np.asarray(labels, dtype=int)
    per_class = []
    scores = []
    for d in range(probs.shape[1]):
        support = int((labels == d).sum())
        if support == 0:
            per_class.append({"class": d, "f1": None, "threshold": None, "support": 0})
            continue
        f1, thr = f1_sweep(probs, labels, d)
        per_class.append({"class": d, "f1": f1, "threshold": thr, "support": support})
        scores.append(f1)
    cm = confusion_matrix(probs, labels)
    return DiagnosisStats(per_class, float(np.mean(scores)), float(np.trace(cm) / cm.sum()), cm.tolist())


@dataclass
class EvaluationReport:
    fidelity: FidelityStats
    diagnosis: DiagnosisStats | None
    params: int
    variant: str

    def to_dict(self) -> dict:
        return {
            "fidelity": asdict(self.fidelity),
            "diagnosis": None if self.diagnosis is None else asdict(self.diagnosis),
            "model": {"params": self.params, "variant": self.variant},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def predict(model: ModelParams, ppg: np.ndarray, batch: int = 100) -> tuple[np.ndarray, np.ndarray | None]:
    """Inferred ECG (and class probabilities) for a stack of PPG cycles."""
    ecg, probs = [], []
    for i in range(0, len(ppg), batch):
        out = forward_full(ppg[i : i + batch], model)
        ecg.append(out["ecg_hat"])
        if out["class_probs"] is not None:
            probs.append(out["class_probs"])
    return np.concatenate(ecg), (np.concatenate(probs) if probs else None)


def evaluate_model(model: ModelParams, testset) -> EvaluationReport:
    """Cycle-level metrics of ``model`` on paired (optionally labelled) cycles."""
    if not testset:
        raise ValueError("empty test set")
    if any(c.ecg is None for c in testset):
        raise ValueError("evaluation needs paired cycles")
    ppg = np.stack([c.ppg for c in testset])
    ecg = np.stack([c.ecg for c in testset])
    ecg_hat, probs = predict(model, ppg)
    labels = [c.label for c in testset] if all(c.label is not None for c in testset) else None
    return evaluate_predictions(ecg, ecg_hat, probs, labels, model.n_params(), model.variant)


def evaluate_predictions(ecg, ecg_hat, probs=None, labels=None, params: int = 0, variant: str = "full") -> EvaluationReport:
    """Report from precomputed outputs (also used for the ground-truth oracle)."""
    diag = None
    if probs is not None and labels is not None:
        diag = diagnosis_stats(probs, labels)
    return EvaluationReport(fidelity_stats(ecg, ecg_hat), diag, params, variant)
