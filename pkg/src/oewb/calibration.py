"""Confidence calibration: adaptive equal-count binning, RMS and MAD
calibration errors, a soft F1 for mistake flagging, scalar temperature
fitting, and posterior rescaling onto [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import objectives
from .errors import InputError, ParameterError


@dataclass(frozen=True)
class PredictionRecord:
    confidence: float
    correct: bool

    def __post_init__(self):
        c = float(self.confidence)
        if not (math.isfinite(c) and 0.0 <= c <= 1.0):
            raise ParameterError("confidence must lie in [0, 1]")
        object.__setattr__(self, "confidence", c)
        object.__setattr__(self, "correct", bool(self.correct))


@dataclass
class CalibrationReport:
    rms_error: float
    mad_error: float
    soft_f1: float
    temperature: float
    rescaled: bool
    bin_count: int
    soft_f1_degenerate: bool = False


def _conf_correct(records):
    if len(records) == 0:
        raise InputError("no prediction records")
    conf = np.array([r.confidence for r in records], dtype=np.float64)
    corr = np.array([1.0 if r.correct else 0.0 for r in records], dtype=np.float64)
    return conf, corr


def adaptive_bins(records, target_per_bin: int = 100):
    """Split confidence-sorted records into contiguous near-equal-count bins.

    Bin count is max(1, round(n / target_per_bin)); bin sizes differ by at
    most one. Returns the bins as lists of records.
    """
    if target_per_bin < 1:
        raise ParameterError("target_per_bin must be positive")
    conf, _ = _conf_correct(records)
    n = len(records)
    order = np.argsort(conf, kind="mergesort")
    b = max(1, round(n / target_per_bin))
    base, rem = divmod(n, b)
    bins = []
    start = 0
    for i in range(b):
        size = base + (1 if i < rem else 0)
        bins.append([records[j] for j in order[start : start + size]])
        start += size
    return bins


def _bin_gaps(records, target_per_bin: int):
    bins = adaptive_bins(records, target_per_bin)
    n = len(records)
    weights, gaps = [], []
    for chunk in bins:
        conf, corr = _conf_correct(chunk)
        weights.append(len(chunk) / n)
        gaps.append(float(corr.mean() - conf.mean()))
    return weights, gaps, len(bins)


def rms_calibration_error(records, target_per_bin: int = 100) -> float:
    """sqrt(sum_b (|B_b| / n) * (accuracy_b - mean confidence_b)^2)."""
    weights, gaps, _ = _bin_gaps(records, target_per_bin)
    return float(math.sqrt(math.fsum(w * g * g for w, g in zip(weights, gaps))))


def mad_calibration_error(records, target_per_bin: int = 100) -> float:
    """sum_b (|B_b| / n) * |accuracy_b - mean confidence_b|; never exceeds RMS."""
    weights, gaps, _ = _bin_gaps(records, target_per_bin)
    return float(math.fsum(w * abs(g) for w, g in zip(weights, gaps)))


def _soft_f1_flagged(records):
    conf, corr = _conf_correct(records)
    anomaly = 1.0 - conf
    mistake = 1.0 - corr
    num = float(anomaly @ mistake)
    den = float((anomaly + mistake).sum() / 2.0)
    if den == 0.0:
        # every record fully confident and correct: nothing to flag
        return 1.0, True
    return num / den, False


def soft_f1(records) -> float:
    """Soft F1 of mistake flagging with 1 - confidence as the flag strength."""
    value, _ = _soft_f1_flagged(records)
    return value


def tune_temperature(logits, labels, grid_points: int = 200) -> float:
    """Scalar temperature minimizing cross-entropy of logits / T on a held-out set.

    Searches a log-spaced grid over [0.01, 100] (with T = 1 included
    exactly) and refines between the best point's neighbors by
    golden-section search. Network parameters are untouched.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise InputError("tuning needs a nonempty (n, k) logit matrix")
    if labels.shape != (logits.shape[0],):
        raise InputError("labels must supply one class per row")

    def nll_at(t: float) -> float:
        return objectives.ce_loss(logits / t, labels)

    grid = np.unique(np.concatenate((np.logspace(-2.0, 2.0, int(grid_points)), [1.0])))
    ces = np.array([nll_at(t) for t in grid])
    best = int(np.argmin(ces))
    lo = math.log(grid[max(best - 1, 0)])
    hi = math.log(grid[min(best + 1, grid.size - 1)])
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = nll_at(math.exp(c)), nll_at(math.exp(d))
    for _ in range(60):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = nll_at(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = nll_at(math.exp(d))
    refined = math.exp((a + b) / 2.0)
    if nll_at(refined) < ces[best]:
        return float(refined)
    return float(grid[best])


def posterior_rescale(p_max: float, k: int) -> float:
    """(p - 1/k) / (1 - 1/k): maps the uniform floor to exactly 0 and full
    confidence to exactly 1."""
    if int(k) < 2:
        raise ParameterError("k must be >= 2")
    floor = 1.0 / k
    if not (0.0 <= p_max <= 1.0) or p_max < floor:
        raise InputError(f"p_max = {p_max} is impossible for a {k}-class posterior")
    return float((p_max - floor) / (1.0 - floor))


def mixed_prediction_records(in_conf, in_correct, ood_conf, seed=0):
    """Equal-count evaluation pool: inliers keep their correctness flags,
    every out-of-distribution example counts as incorrect."""
    in_conf = np.asarray(in_conf, dtype=np.float64).ravel()
    in_correct = np.asarray(in_correct).ravel().astype(bool)
    ood_conf = np.asarray(ood_conf, dtype=np.float64).ravel()
    if in_conf.shape != in_correct.shape:
        raise InputError("in-distribution confidences and flags must align")
    m = min(in_conf.size, ood_conf.size)
    if m == 0:
        raise InputError("both pools must be nonempty")
    rng = np.random.default_rng(seed)
    if in_conf.size > m:
        keep = np.sort(rng.choice(in_conf.size, size=m, replace=False))
        in_conf, in_correct = in_conf[keep], in_correct[keep]
    if ood_conf.size > m:
        keep = np.sort(rng.choice(ood_conf.size, size=m, replace=False))
        ood_conf = ood_conf[keep]
    records = [PredictionRecord(c, bool(f)) for c, f in zip(in_conf, in_correct)]
    records += [PredictionRecord(c, False) for c in ood_conf]
    return records


def report_from_records(records, temperature: float = 1.0, rescaled: bool = False,
                        target_per_bin: int = 100) -> CalibrationReport:
    weights, gaps, bin_count = _bin_gaps(records, target_per_bin)
    rms = float(math.sqrt(math.fsum(w * g * g for w, g in zip(weights, gaps))))
    mad = float(math.fsum(w * abs(g) for w, g in zip(weights, gaps)))
    f1, degenerate = _soft_f1_flagged(records)
    return CalibrationReport(rms, mad, f1, float(temperature), bool(rescaled), bin_count, degenerate)
