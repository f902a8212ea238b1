"""Synthetic chirp-injection benchmark and reconstruction-error anomaly scoring.

Background windows are low-pass filtered Gaussian noise. Signal windows add a
linearly rising chirp with a Hann taper, overlapping the upper noise band, scaled
to a target SNR (root energy of the chirp over the per-sample noise standard
deviation). Every window is then normalised to zero mean and unit variance.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .lstm import ModelSpec, SpecError, model_forward

BACKGROUND = "background"
SIGNAL = "signal"


@dataclass
class EventWindow:
    samples: np.ndarray
    label: str


@dataclass(frozen=True)
class ScoredEvent:
    loss: float
    label: str


@dataclass(frozen=True)
class ChirpConfig:
    TS: int = 8
    features: int = 1
    snr: float = 8.0
    noise_cutoff: float = 0.4  # fraction of Nyquist
    f_start: float = 0.15  # cycles per sample
    f_stop: float = 0.4
    burn_in: int = 64


def _normalise(w: np.ndarray) -> np.ndarray:
    w = w - w.mean()
    sd = w.std()
    return w / sd if sd > 0 else w


def gen_dataset(n_background: int, n_signal: int, seed: int, cfg: ChirpConfig = ChirpConfig()) -> list[EventWindow]:
    """Background windows first, then signal windows; deterministic per seed."""
    if n_background < 0 or n_signal < 0:
        raise ValueError("counts must be >= 0")
    rng = np.random.default_rng(seed)
    n = cfg.TS * cfg.features
    b, a = sps.butter(4, cfg.noise_cutoff)
    # per-sample std of the filtered noise, from the filter's impulse response
    imp = sps.lfilter(b, a, np.r_[1.0, np.zeros(4095)])
    noise_sd = float(np.sqrt(np.sum(imp * imp)))

    def noise():
        raw = rng.standard_normal((cfg.burn_in + cfg.TS, cfg.features))
        return sps.lfilter(b, a, raw, axis=0)[cfg.burn_in:].reshape(n)

    out = []
    for _ in range(n_background):
        out.append(EventWindow(_normalise(noise()), BACKGROUND))
    t = np.arange(cfg.TS)
    taper = np.hanning(cfg.TS + 2)[1:-1]
    for _ in range(n_signal):
        phase = rng.uniform(0, 2 * np.pi)
        f0 = cfg.f_start * rng.uniform(0.9, 1.1)
        f1 = cfg.f_stop * rng.uniform(0.9, 1.1)
        inst = f0 + (f1 - f0) * t / max(cfg.TS - 1, 1)
        chirp = taper * np.sin(phase + 2 * np.pi * np.cumsum(inst))
        chirp = np.repeat(chirp[:, None], cfg.features, axis=1).reshape(n)
        chirp *= cfg.snr * noise_sd / np.sqrt(np.sum(chirp * chirp))
        out.append(EventWindow(_normalise(noise() + chirp), SIGNAL))
    return out


def stack_windows(events, TS: int, features: int = 1) -> np.ndarray:
    if not events:
        return np.zeros((0, TS, features))
    return np.stack([e.samples for e in events]).reshape(len(events), TS, features)


def score(events, model: ModelSpec, numerics: str = "float", jobs: int = 1, chunk: int = 256) -> list[ScoredEvent]:
    """Mean squared reconstruction error per window."""
    if not events:
        return []
    spec = model.layers[0]
    n = spec.TS * spec.Lx
    if any(e.samples.size != n for e in events):
        raise SpecError(f"windows must hold TS*Lx = {n} samples")
    X = stack_windows(events, spec.TS, spec.Lx)

    def run(lo):
        Y = model_forward(X[lo:lo + chunk], model, numerics)
        return np.mean((Y - X[lo:lo + chunk]) ** 2, axis=(1, 2))

    starts = range(0, len(X), chunk)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            parts = list(ex.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    losses = np.concatenate(parts)
    return [ScoredEvent(float(l), e.label) for l, e in zip(losses, events)]


def threshold_from_fpr(background_losses, target_fpr: float) -> float:
    """Smallest observed loss such that at most ``target_fpr`` of background lies above it.

    Events are flagged when their loss is strictly greater than the threshold.
    ``target_fpr = 1`` returns a value just below the smallest loss, so every
    event is flagged.
    """
    if not 0 < target_fpr <= 1:
        raise ValueError(f"target_fpr must lie in (0, 1], got {target_fpr}")
    losses = np.sort(np.asarray(background_losses, dtype=float))
    if losses.size == 0:
        raise ValueError("no background losses")
    if target_fpr == 1:
        return float(np.nextafter(losses[0], -np.inf))
    n = losses.size
    for thr in np.unique(losses):
        above = n - np.searchsorted(losses, thr, side="right")
        if above <= target_fpr * n:
            return float(thr)
    return float(losses[-1])  # unreachable: nothing lies above the maximum


def empirical_fpr(background_losses, threshold: float) -> float:
    losses = np.asarray(background_losses, dtype=float)
    return float(np.mean(losses > threshold))


def roc_auc(scored) -> tuple[float, np.ndarray]:
    """Trapezoid AUC over all distinct-loss thresholds and the ROC curve.

    The curve rows are ``(threshold, fpr, tpr)`` with events flagged when
    ``loss > threshold``; the last row uses ``-inf`` so everything is flagged.
    Ties between classes contribute half credit, so the area equals the
    Mann-Whitney statistic.
    """
    losses = np.array([s.loss for s in scored], dtype=float)
    pos = np.array([s.label == SIGNAL for s in scored])
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both background and signal events")
    thresholds = np.r_[np.unique(losses)[::-1], -np.inf]
    sp = np.sort(losses[pos])
    sn = np.sort(losses[~pos])
    tpr = (n_pos - np.searchsorted(sp, thresholds, side="right")) / n_pos
    fpr = (n_neg - np.searchsorted(sn, thresholds, side="right")) / n_neg
    fx = np.r_[0.0, fpr]
    ty = np.r_[0.0, tpr]
    auc = float(np.sum(np.diff(fx) * (ty[1:] + ty[:-1]) / 2))
    return auc, np.column_stack([thresholds, fpr, tpr])


def roc_csv(curve: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "fpr", "tpr"])
    for thr, f, t in curve:
        w.writerow([repr(float(thr)), repr(float(f)), repr(float(t))])
    return buf.getvalue()


def dataset_csv(events) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n = events[0].samples.size if events else 0
    w.writerow(["window", "label"] + [f"s{i}" for i in range(n)])
    for k, e in enumerate(events):
        w.writerow([k, e.label] + [repr(float(v)) for v in e.samples])
    return buf.getvalue()


def read_dataset_csv(text: str) -> list[EventWindow]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:2] != ["window", "label"]:
        raise ValueError("dataset CSV must start with a 'window,label,...' header")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if row[1] not in (BACKGROUND, SIGNAL):
            raise ValueError(f"line {lineno}: unknown label {row[1]!r}")
        try:
            out.append(EventWindow(np.array([float(v) for v in row[2:]]), row[1]))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return out
