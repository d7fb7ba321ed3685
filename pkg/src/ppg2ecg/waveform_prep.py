"""Signal preparation: ingest, detrend, fiducials, cycle segmentation, resampling.

Also hosts the synthetic PPG/ECG generator used for desk-scale validation.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline, make_lsq_spline
from scipy.signal import find_peaks

from .network import CYCLE_LENGTH, N_CLASSES

DEFAULT_FS = 125.0
MIN_CYCLE_S = 0.33
MAX_CYCLE_S = 2.0
# knot spacing of the detrending spline, in units of 1 / (2 * cutoff)
KNOT_FACTOR = 1.25
# synthetic beats longer than this are rendered as a normal beat plus a pause
MAX_BEAT_S = 1.2


@dataclass
class WaveformRecord:
    ppg: np.ndarray
    fs: float = DEFAULT_FS
    ecg: np.ndarray | None = None
    label: int | None = None
    subject_id: str = ""
    onset_marks: np.ndarray | None = None
    rpeak_marks: np.ndarray | None = None

    def __post_init__(self):
        self.ppg = np.asarray(self.ppg, dtype=np.float64)
        if self.ecg is not None:
            self.ecg = np.asarray(self.ecg, dtype=np.float64)
        if not self.fs > 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        if self.ppg.size == 0:
            raise ValueError("empty PPG sequence")
        if not np.all(np.isfinite(self.ppg)):
            raise ValueError("PPG contains non-finite values")
        if self.ecg is not None:
            if self.ecg.shape != self.ppg.shape:
                raise ValueError("PPG and ECG streams must have the same length")
            if not np.all(np.isfinite(self.ecg)):
                raise ValueError("ECG contains non-finite values")

    def __len__(self) -> int:
        return self.ppg.size


@dataclass
class CycleExample:
    ppg: np.ndarray
    ecg: np.ndarray | None = None
    label: int | None = None
    source: str = ""

    def __post_init__(self):
        self.ppg = np.asarray(self.ppg, dtype=np.float64)
        if self.ecg is not None:
            self.ecg = np.asarray(self.ecg, dtype=np.float64)
            if self.ecg.shape != self.ppg.shape:
                raise ValueError("paired cycles must have equal length")
        for arr in (self.ppg, self.ecg):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in cycle {self.source!r}")

    @property
    def length(self) -> int:
        return self.ppg.size

    def to_json(self) -> dict:
        return {
            "ppg": self.ppg.tolist(),
            "ecg": None if self.ecg is None else self.ecg.tolist(),
            "label": self.label,
            "source": self.source,
        }

    @classmethod
    def from_json(cls, d: dict) -> "CycleExample":
        return cls(d["ppg"], d.get("ecg"), d.get("label"), d.get("source", ""))


@dataclass
class FiducialSet:
    ppg_onsets: np.ndarray
    r_peaks: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        self.ppg_onsets = np.asarray(self.ppg_onsets, dtype=int)
        self.r_peaks = np.asarray(self.r_peaks, dtype=int)
        for name, idx in (("ppg_onsets", self.ppg_onsets), ("r_peaks", self.r_peaks)):
            if idx.size > 1 and np.any(np.diff(idx) <= 0):
                raise ValueError(f"{name} must be strictly increasing")

    def check_bounds(self, n: int) -> None:
        for idx in (self.ppg_onsets, self.r_peaks):
            if idx.size and (idx[0] < 0 or idx[-1] >= n):
                raise ValueError("fiducial index outside the record")


# ----------------------------------------------------------------------------
# ingest


def load_record(path, label: int | None = None, subject_id: str | None = None) -> WaveformRecord:
    """Read a ``t,ppg[,ecg][,onset][,rpeak]`` CSV; ``fs`` comes from the median time step."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such record: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    for col in ("t", "ppg"):
        if col not in header:
            raise ValueError(f"{path}: missing required column {col!r}")
    unknown = set(header) - {"t", "ppg", "ecg", "onset", "rpeak"}
    if unknown:
        raise ValueError(f"{path}: unexpected columns {sorted(unknown)}")
    cols: dict[str, list[float]] = {h: [] for h in header}
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        for h, v in zip(header, row):
            try:
                x = float(v)
            except ValueError:
                raise ValueError(f"{path}: row {i}, column {h!r}: not a number: {v!r}") from None
            if not math.isfinite(x):
                raise ValueError(f"{path}: non-finite value in column {h!r} at row {i}")
            cols[h].append(x)
    t = np.asarray(cols["t"])
    if t.size == 0:
        raise ValueError(f"{path}: no samples")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        bad = int(np.argmax(np.diff(t) <= 0)) + 1
        raise ValueError(f"{path}: time column not strictly increasing at row {bad}")
    fs = 1.0 / float(np.median(np.diff(t))) if t.size > 1 else DEFAULT_FS

    def marks(name):
        if name not in cols:
            return None
        return np.flatnonzero(np.asarray(cols[name]) > 0.5)

    return WaveformRecord(
        ppg=np.asarray(cols["ppg"]),
        fs=fs,
        ecg=np.asarray(cols["ecg"]) if "ecg" in cols else None,
        label=label,
        subject_id=subject_id if subject_id is not None else path.stem,
        onset_marks=marks("onset"),
        rpeak_marks=marks("rpeak"),
    )


def write_record_csv(path, rec: WaveformRecord, fiducials: FiducialSet | None = None, ppg_only: bool = False) -> None:
    n = len(rec)
    header = ["t", "ppg"]
    columns = [np.arange(n) / rec.fs, rec.ppg]
    if rec.ecg is not None and not ppg_only:
        header.append("ecg")
        columns.append(rec.ecg)
    if fiducials is not None:
        on = np.zeros(n)
        on[fiducials.ppg_onsets] = 1
        header.append("onset")
        columns.append(on)
        if not ppg_only:
            rp = np.zeros(n)
            rp[fiducials.r_peaks] = 1
            header.append("rpeak")
            columns.append(rp)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) for v in row])


# ----------------------------------------------------------------------------
# detrending


def detrend(x, fs: float = DEFAULT_FS, cutoff: float = 0.5) -> np.ndarray:
    """Remove slow trends by subtracting a least-squares cubic regression spline.

    Knots are spaced ``KNOT_FACTOR / (2 * cutoff)`` seconds apart, which puts
    the half-power point of the trend estimate a little below ``cutoff``. The trend space
    contains constants and straight lines, and the operation is an orthogonal
    projection, so applying it twice changes nothing.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 3:
        raise ValueError(f"detrend needs at least 3 samples, got {n}")
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    degree = min(3, n - 2)
    t = np.arange(n, dtype=np.float64)
    span = t[-1]
    spacing = KNOT_FACTOR * fs / (2.0 * cutoff)
    n_int = max(1, min(int(math.ceil(span / spacing)), n - degree - 1))
    inner = np.linspace(0.0, span, n_int + 1)
    knots = np.r_[[0.0] * degree, inner, [span] * degree]
    trend = make_lsq_spline(t, x, knots, k=degree)(t)
    return x - trend


# ----------------------------------------------------------------------------
# fiducials


def _smooth(x: np.ndarray, width: int) -> np.ndarray:
    if width <= 1:
        return x
    kernel = np.ones(width) / width
    return np.convolve(np.pad(x, (width // 2, width - 1 - width // 2), mode="edge"), kernel, mode="valid")


def detect_ppg_onsets(ppg: np.ndarray, fs: float) -> np.ndarray:
    """Onsets as the minimum preceding each maximal-upslope point."""
    x = np.asarray(ppg, dtype=np.float64)
    if np.ptp(x) <= 1e-12 * max(1.0, np.abs(x).max()):
        return np.zeros(0, dtype=int)
    slope = _smooth(np.gradient(x), max(1, int(round(0.03 * fs))))
    ref = np.percentile(slope, 99.5)
    if ref <= 0:
        return np.zeros(0, dtype=int)
    ups, _ = find_peaks(slope, height=0.3 * ref, distance=max(1, int(MIN_CYCLE_S * fs)))
    onsets = []
    lookback = int(round(0.6 * fs))
    for i, u in enumerate(ups):
        lo = max(0, u - lookback)
        if i > 0:
            lo = max(lo, ups[i - 1])
        seg = x[lo : u + 1]
        onsets.append(lo + int(np.argmin(seg)))
    return np.unique(np.asarray(onsets, dtype=int))


def detect_r_peaks(ecg: np.ndarray, fs: float) -> np.ndarray:
    """Threshold the smoothed squared derivative, then take the dominant QRS extremum."""
    x = np.asarray(ecg, dtype=np.float64)
    if np.ptp(x) <= 1e-12 * max(1.0, np.abs(x).max()):
        return np.zeros(0, dtype=int)
    pad = int(round(0.15 * fs))
    # reflect so a peak on the first or last sample remains a local extremum
    xp = np.pad(x, pad, mode="reflect") if x.size > pad + 1 else x
    off = pad if xp.size != x.size else 0
    energy = _smooth(np.gradient(xp) ** 2, max(1, int(round(0.05 * fs))))
    thr = 0.3 * np.percentile(energy, 99.5)
    cand, _ = find_peaks(energy, height=thr, distance=max(1, int(MIN_CYCLE_S * fs)))
    baseline = np.median(x)
    half = int(round(0.08 * fs))
    peaks = []
    for c in cand:
        lo, hi = max(0, c - half), min(xp.size, c + half + 1)
        j = lo + int(np.argmax(np.abs(xp[lo:hi] - baseline)))
        j -= off
        if 0 <= j < x.size:
            peaks.append(j)
    peaks = np.unique(np.asarray(peaks, dtype=int))
    # merge duplicates that landed within the refractory window
    keep: list[int] = []
    for p in peaks:
        if keep and p - keep[-1] < MIN_CYCLE_S * fs:
            if abs(x[p] - baseline) > abs(x[keep[-1]] - baseline):
                keep[-1] = p
            continue
        keep.append(int(p))
    return np.asarray(keep, dtype=int)


def detect_fiducials(rec: WaveformRecord) -> FiducialSet:
    """PPG onsets and (if ECG present) R-peaks; CSV-supplied markers take precedence."""
    if rec.onset_marks is not None and rec.onset_marks.size:
        onsets = rec.onset_marks
    else:
        onsets = detect_ppg_onsets(rec.ppg, rec.fs)
    if onsets.size == 0:
        raise ValueError("no cycles found: PPG has no detectable onsets")
    rpeaks = np.zeros(0, dtype=int)
    if rec.ecg is not None:
        if rec.rpeak_marks is not None and rec.rpeak_marks.size:
            rpeaks = rec.rpeak_marks
        else:
            rpeaks = detect_r_peaks(rec.ecg, rec.fs)
        if rpeaks.size == 0:
            raise ValueError("no cycles found: ECG has no detectable R-peaks")
    fid = FiducialSet(onsets, rpeaks)
    fid.check_bounds(len(rec))
    return fid


# ----------------------------------------------------------------------------
# segmentation


def resample_cycle(x, length: int = CYCLE_LENGTH) -> np.ndarray:
    """Cubic-spline resampling onto ``length`` uniform points over ``[0, len(x) - 1]``."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least 2 samples to resample")
    if length < 2:
        raise ValueError("target length must be >= 2")
    if x.size == length:
        return x.copy()
    grid = np.linspace(0.0, x.size - 1, length)
    if x.size == 2:
        y = np.interp(grid, [0.0, 1.0], x)
    else:
        y = CubicSpline(np.arange(x.size, dtype=np.float64), x)(grid)
    y[0], y[-1] = x[0], x[-1]
    return y


def minmax(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(), x.max()
    if hi - lo <= 0:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def segment_with_report(
    rec: WaveformRecord,
    fid: FiducialSet,
    length: int = CYCLE_LENGTH,
    min_cycle: float = MIN_CYCLE_S,
    max_cycle: float = MAX_CYCLE_S,
) -> tuple[list[CycleExample], Counter]:
    if length < 16:
        raise ValueError("cycle length must be >= 16")
    drops: Counter = Counter()
    onsets, rpeaks = fid.ppg_onsets, fid.r_peaks
    paired = rec.ecg is not None and rpeaks.size > 0
    out = []
    for k in range(len(onsets) - 1):
        a, b = int(onsets[k]), int(onsets[k + 1])
        dur = (b - a) / rec.fs
        if not (min_cycle <= dur <= max_cycle):
            drops["duration_gate"] += 1
            continue
        ecg_cycle = None
        if paired:
            m = int(np.argmin(np.abs(rpeaks - a)))
            if abs(int(rpeaks[m]) - a) > (b - a) / 2:
                drops["no_matching_rpeak"] += 1
                continue
            if m + 1 >= rpeaks.size:
                drops["ecg_unterminated"] += 1
                continue
            r0, r1 = int(rpeaks[m]), int(rpeaks[m + 1])
            if not (min_cycle <= (r1 - r0) / rec.fs <= max_cycle):
                drops["duration_gate"] += 1
                continue
            ecg_cycle = resample_cycle(rec.ecg[r0 : r1 + 1], length)
        ppg_cycle = resample_cycle(rec.ppg[a : b + 1], length)
        out.append(CycleExample(ppg_cycle, ecg_cycle, rec.label, f"{rec.subject_id}:{k}"))
    return out, drops


def segment_and_align(rec: WaveformRecord, fid: FiducialSet, length: int = CYCLE_LENGTH) -> list[CycleExample]:
    """Cut onset-to-onset PPG cycles, pair each with the R-to-R ECG cycle nearest its onset."""
    cycles, _ = segment_with_report(rec, fid, length)
    if not cycles:
        raise ValueError("no cycles survived segmentation")
    return cycles


def preprocess_record(
    rec: WaveformRecord, length: int = CYCLE_LENGTH, cutoff: float = 0.5, ppg_only: bool = False
) -> tuple[list[CycleExample], Counter]:
    """Detrend, min-max scale each stream to [0, 1], find fiducials, segment."""
    ppg = minmax(detrend(rec.ppg, rec.fs, cutoff))
    ecg = None
    if rec.ecg is not None and not ppg_only:
        ecg = minmax(detrend(rec.ecg, rec.fs, cutoff))
    clean = WaveformRecord(
        ppg, rec.fs, ecg, rec.label, rec.subject_id, rec.onset_marks, None if ppg_only else rec.rpeak_marks
    )
    fid = detect_fiducials(clean)
    return segment_with_report(clean, fid, length)


# ----------------------------------------------------------------------------
# dataset files


def write_dataset(path, cycles: list[CycleExample]) -> None:
    with Path(path).open("w") as fh:
        for c in cycles:
            fh.write(json.dumps(c.to_json(), separators=(",", ":")) + "\n")


def read_dataset(path) -> list[CycleExample]:
    out = []
    with Path(path).open() as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                out.append(CycleExample.from_json(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}: bad record on line {i + 1}: {exc}") from exc
    return out


def stack(cycles: list[CycleExample]) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Arrays (P, E, labels) from a list of cycles; E / labels are None unless all present."""
    ppg = np.stack([c.ppg for c in cycles])
    ecg = np.stack([c.ecg for c in cycles]) if all(c.ecg is not None for c in cycles) else None
    labels = np.array([c.label for c in cycles]) if all(c.label is not None for c in cycles) else None
    return ppg, ecg, labels


# ----------------------------------------------------------------------------
# synthetic generator

# Fixed affine maps bring raw template amplitudes into roughly [0, 1].
_ECG_OFFSET, _ECG_SCALE = 1.05, 2.5
_PPG_SCALE = 1.35


def _gamma_pulse(t: np.ndarray, peak: float, shape: float) -> np.ndarray:
    """Unit-height pulse starting at t = 0 with its maximum at ``peak``."""
    u = np.clip(t, 0.0, None) / peak
    return np.where(t > 0, u**shape * np.exp(shape * (1.0 - u)), 0.0)


def _bump(t: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((t - center) / width) ** 2)


def ppg_template(tau: np.ndarray, z: np.ndarray, cls: int) -> np.ndarray:
    """One PPG cycle over tau in [0, 1], onset at tau = 0.

    ``z`` holds three latents in [-1, 1]: timing, amplitude ratio, sharpness.
    """
    u_time, u_amp, u_width = z
    k_s = 3.0 + 0.6 * u_width
    peak_s = 0.20 + 0.03 * u_time
    delay_d = 0.12
    amp_d = 0.45 + 0.12 * u_amp
    if cls == 1:
        k_s += 2.5
    elif cls == 2:
        delay_d += 0.07
    elif cls == 3:
        amp_d *= 0.45
    elif cls == 4:
        peak_s += 0.06
        k_s -= 0.8
    start_d = peak_s + delay_d
    p = _gamma_pulse(tau, peak_s, k_s)
    p = p + amp_d * _gamma_pulse(tau - start_d, 0.12, 3.0)
    p = p + 0.15 * np.sin(np.pi * np.clip(tau, 0.0, 1.0))
    return p / _PPG_SCALE


def ecg_template(tau: np.ndarray, z: np.ndarray, cls: int, next_tau: np.ndarray | None = None) -> np.ndarray:
    """One ECG cycle over tau in [0, 1], R-peak at tau = 0 (and the next at tau = 1).

    ``next_tau`` places the following QRS independently of the current beat,
    which is how long pauses are rendered.
    """
    u_time, u_amp, u_width = z
    r_amp = 1.0 + 0.2 * u_amp
    r_w = 0.010 + 0.002 * u_width
    q_amp, s_amp = -0.12, -0.25
    t_amp = 0.30 + 0.08 * u_amp
    t_c = 0.30 + 0.04 * u_time
    t_w = 0.05
    p_amp = 0.12
    p_c = 0.82 + 0.02 * u_time
    st = 0.0
    if cls == 1:
        st = 0.35
    elif cls == 2:
        r_amp, q_amp, s_amp = -0.8 * r_amp, 0.1, 0.2
    elif cls == 3:
        t_amp = -0.8 * t_amp
    elif cls == 4:
        p_amp *= 2.5
        t_w = 0.07
        r_w *= 1.4
    e = np.zeros_like(tau)
    if next_tau is None:
        next_tau = tau
    for t, shift in ((tau, 0.0), (next_tau, 1.0)):
        e = e + r_amp * _bump(t, shift, r_w)
        e = e + q_amp * _bump(t, shift - 0.03, 0.008)
        e = e + s_amp * _bump(t, shift + 0.03, 0.010)
    e = e + t_amp * _bump(tau, t_c, t_w) + p_amp * _bump(tau, p_c, 0.025)
    if st:
        rise = 1.0 / (1.0 + np.exp(-(tau - 0.05) / 0.01))
        fall = 1.0 / (1.0 + np.exp(-(0.22 - tau) / 0.02))
        e = e + st * rise * fall
    return (e + _ECG_OFFSET) / _ECG_SCALE


def _subject_latents(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-0.6, 0.6, size=3)


def _cycle_latents(base: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return np.clip(base + rng.normal(0.0, 0.08, size=3), -1.0, 1.0)


def synthesize_dataset(
    n_subjects: int,
    cycles_per_subject: int,
    classes: int = N_CLASSES,
    seed: int = 0,
    length: int = CYCLE_LENGTH,
) -> list[CycleExample]:
    """Paired, labelled cycles from a Gaussian/gamma-bump template model.

    Subject ``s`` has class ``s % classes``, its own latent parameters, and
    per-cycle jitter. PPG and ECG are deterministic functions of the same
    latents and class, so ECG is a fixed function of PPG.
    """
    if n_subjects <= 0 or cycles_per_subject <= 0 or classes <= 0:
        raise ValueError("counts must be positive")
    if classes > N_CLASSES:
        raise ValueError(f"the template model defines {N_CLASSES} classes")
    if length < 16:
        raise ValueError("length must be >= 16")
    rng = np.random.default_rng(seed)
    tau = np.linspace(0.0, 1.0, length)
    out = []
    for s in range(n_subjects):
        cls = s % classes
        base = _subject_latents(rng)
        for k in range(cycles_per_subject):
            z = _cycle_latents(base, rng)
            out.append(CycleExample(ppg_template(tau, z, cls), ecg_template(tau, z, cls), cls, f"synth{s:04d}:{k}"))
    return out


def class_templates(cls: int, length: int = CYCLE_LENGTH) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free (PPG, ECG) template of one class at zero latents."""
    tau = np.linspace(0.0, 1.0, length)
    z = np.zeros(3)
    return ppg_template(tau, z, cls), ecg_template(tau, z, cls)


@dataclass
class SyntheticRecord:
    record: WaveformRecord
    truth: FiducialSet


def synthesize_record(
    durations,
    fs: float = DEFAULT_FS,
    cls: int = 0,
    seed: int = 0,
    ptt: float = 0.15,
    lead: float = 0.0,
    trend: float = 0.0,
    with_ecg: bool = True,
    subject_id: str = "synthetic",
) -> SyntheticRecord:
    """Continuous PPG/ECG stream with one cycle per entry of ``durations`` (seconds).

    R-peaks sit at the cycle boundaries; PPG onsets follow ``ptt`` seconds
    later. ``trend`` adds a slow breathing-like wander of that amplitude.
    """
    rng = np.random.default_rng(seed)
    durations = np.asarray(durations, dtype=np.float64)
    if durations.size == 0 or np.any(durations <= 0):
        raise ValueError("durations must be positive")
    base = _subject_latents(rng)
    lat = [_cycle_latents(base, rng) for _ in durations]
    lengths = np.round(durations * fs).astype(int)
    start = int(round(lead * fs))
    bounds = start + np.r_[0, np.cumsum(lengths)]
    n = int(bounds[-1])
    shift = int(round(ptt * fs))

    beat = int(round(MAX_BEAT_S * fs))

    def render(template, offsets, ecg):
        out = np.zeros(n)
        idx = np.arange(n)
        for k in range(-1, len(lengths)):
            kk = max(k, 0)
            a = offsets[k] if k >= 0 else offsets[0] - lengths[0]
            span = lengths[kk]
            sel = (idx >= a) & (idx < a + span)
            if not sel.any():
                continue
            # beats longer than MAX_BEAT_S keep their shape and idle at baseline
            scale = min(span, beat)
            tau = (idx[sel] - a) / scale
            if ecg:
                out[sel] = template(tau, lat[kk], cls, 1.0 - (a + span - idx[sel]) / scale)
            else:
                out[sel] = template(tau, lat[kk], cls)
        return out

    ecg = render(ecg_template, bounds[:-1], True) if with_ecg else None
    ppg = render(ppg_template, bounds[:-1] + shift, False)
    if trend:
        t = np.arange(n) / fs
        wander = trend * (np.sin(2 * np.pi * 0.2 * t + 0.4) + 0.5 * t / max(t[-1], 1e-9))
        ppg = ppg + wander
        if ecg is not None:
            ecg = ecg + 0.5 * wander
    onsets = bounds[:-1] + shift
    onsets = onsets[onsets < n]
    rpeaks = bounds[:-1] if with_ecg else np.zeros(0, dtype=int)
    rec = WaveformRecord(ppg, fs, ecg, cls, subject_id)
    return SyntheticRecord(rec, FiducialSet(onsets, rpeaks))
