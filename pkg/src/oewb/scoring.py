"""Anomaly scores. Convention everywhere: higher score = more anomalous.

The uniformity-based score negates the cross-entropy H(U; p). A uniform
posterior is the most anomalous signal a classifier can emit, so it gets
the maximal score -log k, while a confident one-hot posterior runs off
toward -inf. Keeping every detector oriented the same way means the
metrics module never needs per-detector sign flips.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from . import density as density_mod
from . import nn_core, objectives
from .errors import ConfigurationError, DataError, ParameterError

DETECTOR_KINDS = ("msp", "uniform_ce", "confidence_branch", "density_bpp")


def msp_score(probs) -> float:
    """Negated maximum class probability of one posterior vector."""
    p = np.asarray(probs, dtype=np.float64).ravel()
    if p.size < 2:
        raise ParameterError("posterior needs k >= 2 entries")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ParameterError("not a probability vector")
    return float(-p.max())


def uniform_ce_score(values, from_logits: bool = True) -> float:
    """-H(U; p) for one posterior: maximal (= -log k) at the uniform posterior."""
    v = np.asarray(values, dtype=np.float64).ravel()
    return float(-objectives.uniform_ce(v[None, :], from_logits=from_logits))


def branch_score(b: float) -> float:
    """1 - b: the confidence head inverted into an anomaly score."""
    if not 0.0 <= b <= 1.0:
        raise ParameterError("confidence must lie in [0, 1]")
    return float(1.0 - b)


def bpp_score(model, seq) -> float:
    """Bits per dimension of one sequence under the density model."""
    return density_mod.bits_per_dim(model, seq)


def score_dataset(model, kind: str, dataset) -> np.ndarray:
    """Per-example anomaly scores for a whole dataset, in input order."""
    if kind not in DETECTOR_KINDS:
        raise ConfigurationError(f"unknown detector kind {kind!r}")
    if kind == "density_bpp":
        if not isinstance(model, density_mod.ARModelParams):
            raise ConfigurationError("density_bpp scoring needs an autoregressive density model")
        seqs = np.asarray(dataset, dtype=np.int64)
        if seqs.size == 0:
            return np.zeros(0)
        return density_mod.bits_per_dim_batch(model, seqs)
    if not isinstance(model, nn_core.NetworkParams):
        raise ConfigurationError(f"{kind} scoring needs classifier parameters")
    X = np.asarray(dataset, dtype=np.float64)
    if X.size == 0:
        return np.zeros(0)
    logits, bpre = nn_core.forward(model, X)
    if kind == "msp":
        return -nn_core.softmax(logits).max(axis=1)
    if kind == "uniform_ce":
        return nn_core.log_softmax(logits).mean(axis=1)
    if bpre is None:
        raise ConfigurationError("confidence_branch scoring needs a network with a confidence head")
    return 1.0 - nn_core.sigmoid(bpre)


def write_scores_csv(path, scores, is_ood, ids=None) -> None:
    """Columns: example_id, score, is_ood (0/1)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    flags = np.asarray(is_ood).ravel().astype(int)
    if scores.shape != flags.shape:
        raise ConfigurationError("scores and is_ood flags must have equal length")
    if ids is None:
        ids = range(scores.size)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["example_id", "score", "is_ood"])
        for i, sc, fl in zip(ids, scores, flags):
            w.writerow([i, repr(float(sc)), int(fl)])


def read_scores_csv(path):
    """Inverse of write_scores_csv; returns (ids, scores, is_ood)."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["example_id", "score", "is_ood"]:
            raise DataError(f"unexpected score file header {header!r}")
        ids, scores, flags = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise DataError(f"malformed score row at line {lineno}")
            try:
                ids.append(row[0])
                scores.append(float(row[1]))
                flags.append(bool(int(row[2])))
            except ValueError as exc:
                raise DataError(f"malformed score row at line {lineno}: {exc}") from exc
    return ids, np.asarray(scores), np.asarray(flags, dtype=bool)
