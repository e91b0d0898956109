"""Training objectives: cross-entropy, uniformity pressure on auxiliary
outliers, confidence-head penalties, and the sequence-likelihood margin.

Losses are scalar batch means. The matching exact gradients live in
nn_core.grad and density.margin_grad, which keeps the value path and the
gradient path in separate code so finite-difference checks compare two
independent implementations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn_core
from .errors import ConfigurationError, DataError, ParameterError

OBJECTIVE_KINDS = (
    "plain_ce",
    "multiclass_oe",
    "confidence_branch_oe",
    "density_margin",
    "token_uniform_ce",
)

_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which loss to optimize, the outlier-term weight, and the hinge margin (nats)."""

    kind: str
    lam: float = 0.0
    margin: float = 0.0

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ConfigurationError(f"unknown objective kind {self.kind!r}")
        if self.lam < 0:
            raise ParameterError("lam must be nonnegative")
        if self.kind == "density_margin" and not self.margin > 0:
            raise ParameterError("density_margin needs a positive margin")


def _log_probs(values, from_logits: bool) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 1:
        v = v[None, :]
    if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
        raise ConfigurationError("expected a nonempty (n, k) array")
    if from_logits:
        return nn_core.log_softmax(v)
    return np.log(np.clip(v, _PROB_FLOOR, None))


def ce_loss(values, labels, from_logits: bool = True) -> float:
    """Mean negative log-probability of the true class."""
    lp = _log_probs(values, from_logits)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (lp.shape[0],):
        raise ConfigurationError("labels must supply one class index per row")
    if np.any(labels < 0) or np.any(labels >= lp.shape[1]):
        raise DataError("class label out of range")
    return float(np.mean(-lp[np.arange(lp.shape[0]), labels]))


def uniform_ce(values, from_logits: bool = True) -> float:
    """Mean cross-entropy from the uniform class distribution to the posterior.

    Equals -(1/k) sum_i log p_i averaged over the batch; lower-bounded by
    log k, attained exactly at the uniform posterior.
    """
    lp = _log_probs(values, from_logits)
    if lp.shape[1] < 2:
        raise ConfigurationError("uniform cross-entropy needs k >= 2 classes")
    return float(np.mean(-lp.mean(axis=1)))


def token_uniform_ce(token_logits, from_logits: bool = True) -> float:
    """Uniformity cross-entropy per token position, averaged over positions."""
    return uniform_ce(token_logits, from_logits=from_logits)


def multiclass_oe_loss(in_batch, oe_batch, params, lam: float) -> float:
    """Labeled cross-entropy plus lam * uniformity pressure on the outlier batch.

    At lam = 0 this is exactly the plain cross-entropy: the outlier term is
    skipped rather than multiplied away.
    """
    if lam < 0:
        raise ParameterError("lam must be nonnegative")
    if in_batch.labels is None:
        raise ConfigurationError("in-distribution batch needs labels")
    logits_in, _ = nn_core.forward(params, in_batch)
    loss = ce_loss(logits_in, in_batch.labels)
    if lam > 0:
        if oe_batch is None or len(oe_batch) == 0:
            raise ConfigurationError("positive lam needs a nonempty outlier batch")
        if oe_batch.labels is not None:
            raise ConfigurationError("outlier batch must be unlabeled")
        logits_oe, _ = nn_core.forward(params, oe_batch)
        loss += lam * uniform_ce(logits_oe)
    return float(loss)


def confidence_branch_oe_term(branch_probs) -> float:
    """0.5 * mean(log b) over outlier confidences; minimizing drives b -> 0.

    Confidences are clamped below at 1e-12 so an exactly-zero b cannot
    produce -inf.
    """
    b = np.asarray(branch_probs, dtype=np.float64)
    if b.size == 0:
        raise ConfigurationError("empty confidence batch")
    if np.any(b < 0.0) or np.any(b > 1.0):
        raise ParameterError("confidences must lie in [0, 1]")
    return float(0.5 * np.mean(np.log(np.clip(b, _PROB_FLOOR, None))))


def confidence_branch_oe_loss(in_batch, oe_batch, params, lam: float = 0.5) -> float:
    """Classifier cross-entropy, a fit term pulling b -> 1 on inliers, and
    lam * mean(log b) on the outlier batch (the exposure penalty)."""
    if params.branch is None:
        raise ConfigurationError("network has no confidence head")
    if in_batch.labels is None:
        raise ConfigurationError("in-distribution batch needs labels")
    if lam < 0:
        raise ParameterError("lam must be nonnegative")
    logits, bpre = nn_core.forward(params, in_batch)
    loss = ce_loss(logits, in_batch.labels)
    loss += nn_core.BRANCH_FIT_WEIGHT * float(np.mean(-nn_core.log_sigmoid(bpre)))
    if lam > 0:
        if oe_batch is None or len(oe_batch) == 0:
            raise ConfigurationError("positive lam needs a nonempty outlier batch")
        _, bpre_oe = nn_core.forward(params, oe_batch)
        loss += lam * float(np.mean(nn_core.log_sigmoid(bpre_oe)))
    return float(loss)


def density_margin_loss(nll_in, nll_out, margin: float) -> float:
    """Mean hinge max(0, margin + nll_in - nll_out) over position-paired examples.

    Zero exactly when every outlier is at least `margin` nats less likely
    than its paired inlier.
    """
    a = np.asarray(nll_in, dtype=np.float64)
    b = np.asarray(nll_out, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ConfigurationError("paired nll arrays must be 1-d with equal length")
    if a.size == 0:
        raise ConfigurationError("empty nll batch")
    if not margin > 0:
        raise ParameterError("margin must be positive")
    return float(np.mean(np.maximum(0.0, margin + a - b)))
