"""Fixed-window autoregressive density model over small discrete alphabets.

The conditional p(x_t | previous c symbols) is a dense network applied to
the one-hot encoded window. Positions before the sequence start are padded
with a reserved start symbol (index V) that never appears in data, so the
chain-rule factorization is exact at every position and total probability
over the sequence space sums to one -- checkable by brute-force
enumeration for tiny alphabets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn_core
from .errors import ConfigurationError, DataError, ParameterError

LN2 = float(np.log(2.0))


@dataclass
class DiscreteSequence:
    """Symbols drawn from {0, ..., alphabet_size - 1}."""

    symbols: np.ndarray
    alphabet_size: int

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.int64).ravel()
        if self.symbols.size < 1:
            raise ConfigurationError("sequence must be nonempty")
        if self.alphabet_size < 2:
            raise ConfigurationError("alphabet_size must be >= 2")
        if np.any(self.symbols < 0) or np.any(self.symbols >= self.alphabet_size):
            raise DataError("symbol outside the alphabet")

    def __len__(self):
        return self.symbols.size


@dataclass
class ARModelParams:
    context_window: int
    alphabet_size: int
    net: nn_core.NetworkParams

    def validate(self) -> "ARModelParams":
        if self.context_window < 1:
            raise ConfigurationError("context_window must be >= 1")
        if self.alphabet_size < 2:
            raise ConfigurationError("alphabet_size must be >= 2")
        expected_in = self.context_window * (self.alphabet_size + 1)
        if self.net.input_dim != expected_in:
            raise ConfigurationError(
                f"network input dim {self.net.input_dim} != context_window * (V + 1) = {expected_in}"
            )
        if self.net.n_classes != self.alphabet_size:
            raise ConfigurationError("network output dim must equal the alphabet size")
        self.net.validate()
        return self

    def copy(self) -> "ARModelParams":
        return ARModelParams(self.context_window, self.alphabet_size, self.net.copy())


def init_ar_model(alphabet_size, context_window, hidden_dims, seed, activation="relu") -> ARModelParams:
    dims = [int(context_window) * (int(alphabet_size) + 1), *[int(h) for h in hidden_dims], int(alphabet_size)]
    net = nn_core.init_network(dims, seed, activation=activation)
    return ARModelParams(int(context_window), int(alphabet_size), net).validate()


def _as_seq_matrix(seqs, alphabet_size: int) -> np.ndarray:
    if isinstance(seqs, DiscreteSequence):
        if seqs.alphabet_size != alphabet_size:
            raise DataError("sequence alphabet does not match the model")
        return seqs.symbols[None, :]
    arr = np.asarray(seqs, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ConfigurationError("sequences must form a nonempty (n, D) integer matrix")
    if np.any(arr < 0) or np.any(arr >= alphabet_size):
        raise DataError("symbol outside the alphabet")
    return arr


def context_features(seqs, context_window: int, alphabet_size: int):
    """One-hot context windows for every position of every sequence.

    Returns (features of shape (n*D, c*(V+1)), next-symbol targets of
    shape (n*D,)). Row order is sequence-major, then position.
    """
    arr = _as_seq_matrix(seqs, alphabet_size)
    n, length = arr.shape
    c, V = int(context_window), int(alphabet_size)
    padded = np.concatenate((np.full((n, c), V, dtype=np.int64), arr), axis=1)
    windows = padded[:, np.arange(length)[:, None] + np.arange(c)[None, :]]  # (n, D, c)
    feats = np.eye(V + 1, dtype=np.float64)[windows].reshape(n * length, c * (V + 1))
    return feats, arr.reshape(n * length)


def nll_batch(model: ARModelParams, seqs) -> np.ndarray:
    """Per-sequence negative log-likelihood in nats for equal-length sequences."""
    arr = _as_seq_matrix(seqs, model.alphabet_size)
    feats, targets = context_features(arr, model.context_window, model.alphabet_size)
    logits, _, _ = nn_core.forward_cached(model.net, feats)
    lp = nn_core.log_softmax(logits)
    tok = lp[np.arange(targets.size), targets]
    return -tok.reshape(arr.shape).sum(axis=1)


def nll(model: ARModelParams, seq) -> float:
    """Total negative log-likelihood of one sequence, in nats (always >= 0)."""
    return float(nll_batch(model, seq)[0])


def bits_per_dim(model: ARModelParams, seq) -> float:
    """nll / (D * ln 2): average bits per symbol."""
    arr = _as_seq_matrix(seq, model.alphabet_size)
    if arr.shape[0] != 1:
        raise ConfigurationError("bits_per_dim scores one sequence; use bits_per_dim_batch")
    return float(nll_batch(model, arr)[0] / (arr.shape[1] * LN2))


def bits_per_dim_batch(model: ARModelParams, seqs) -> np.ndarray:
    arr = _as_seq_matrix(seqs, model.alphabet_size)
    return nll_batch(model, arr) / (arr.shape[1] * LN2)


def mean_nll(model: ARModelParams, seqs) -> float:
    return float(np.mean(nll_batch(model, seqs)))


def train_density(
    model: ARModelParams,
    data,
    *,
    epochs: int = 10,
    batch_size: int = 32,
    lr0: float = 0.1,
    momentum: float = 0.9,
    weight_decay: float = 5e-4,
    seed: int = 0,
) -> ARModelParams:
    """Maximum-likelihood training on inlier sequences; returns a new model."""
    arr = _as_seq_matrix(data, model.alphabet_size)
    if epochs < 1:
        raise ParameterError("epochs must be >= 1")
    feats, targets = context_features(arr, model.context_window, model.alphabet_size)
    rows = feats.shape[0]
    bs = min(int(batch_size), rows)
    steps_per_epoch = (rows + bs - 1) // bs
    net = model.net.copy()
    state = nn_core.init_optimizer(
        net, lr0, total_steps=epochs * steps_per_epoch, momentum=momentum, weight_decay=weight_decay
    )
    rng = np.random.default_rng(seed)
    k = model.alphabet_size
    for _ in range(epochs):
        perm = rng.permutation(rows)
        for start in range(0, rows, bs):
            idx = perm[start : start + bs]
            logits, _, cache = nn_core.forward_cached(net, feats[idx])
            onehot = np.zeros((idx.size, k))
            onehot[np.arange(idx.size), targets[idx]] = 1.0
            dlog = (nn_core.softmax(logits) - onehot) / idx.size
            g = nn_core.backward(net, cache, dlog)
            net, state = nn_core.sgd_step(net, g, state)
    return ARModelParams(model.context_window, model.alphabet_size, net)


def margin_grad(
    model: ARModelParams,
    in_seqs,
    out_seqs,
    margin: float,
    mle_weight: float = 1.0,
    margin_weight: float = 1.0,
) -> nn_core.Grads:
    """Exact gradient of mle_weight * mean-position CE on inliers plus
    margin_weight * mean hinge max(0, margin + nll_in - nll_out).

    Pairs are matched by batch position, so both groups must have equal
    counts. Per active pair the hinge contributes +1 to every inlier
    position row and -1 to every outlier position row, scaled by 1/n_pairs.
    """
    if not margin > 0:
        raise ParameterError("margin must be positive")
    a = _as_seq_matrix(in_seqs, model.alphabet_size)
    b = _as_seq_matrix(out_seqs, model.alphabet_size)
    if a.shape[0] != b.shape[0]:
        raise ConfigurationError("margin pairs require equally sized inlier/outlier batches")
    n_pairs = a.shape[0]
    c, V = model.context_window, model.alphabet_size
    nll_in = nll_batch(model, a)
    nll_out = nll_batch(model, b)
    active = (margin + nll_in - nll_out) > 0

    feats_in, t_in = context_features(a, c, V)
    feats_out, t_out = context_features(b, c, V)
    # per-row weights: the MLE mean over all inlier rows plus the hinge
    # share of each active pair, spread over that pair's position rows
    w_in_seq = mle_weight / (n_pairs * a.shape[1]) + margin_weight * active / n_pairs
    w_out_seq = -margin_weight * active / n_pairs
    w_in = np.repeat(w_in_seq, a.shape[1])
    w_out = np.repeat(w_out_seq, b.shape[1])

    def _weighted_backward(feats, targets, w):
        logits, _, cache = nn_core.forward_cached(model.net, feats)
        onehot = np.zeros((targets.size, V))
        onehot[np.arange(targets.size), targets] = 1.0
        dlog = (nn_core.softmax(logits) - onehot) * w[:, None]
        return nn_core.backward(model.net, cache, dlog)

    return nn_core.add_grads(
        _weighted_backward(feats_in, t_in, w_in), _weighted_backward(feats_out, t_out, w_out)
    )


def finetune_density_oe(
    model: ARModelParams,
    inlier_seqs,
    oe_seqs,
    *,
    margin: float | None = None,
    epochs: int = 2,
    batch_size: int = 32,
    lr0: float = 1e-3,
    momentum: float = 0.9,
    weight_decay: float = 5e-4,
    mle_weight: float = 1.0,
    margin_weight: float = 1.0,
    seed: int = 0,
    oe_objective: str = "margin",
    lam: float = 1.0,
) -> ARModelParams:
    """Exposure fine-tuning of a trained density model.

    Epoch length follows the inlier set; outlier batches are drawn
    cyclically from a fixed seeded permutation and paired with inlier
    batches by position. margin defaults to the sequence length in nats.
    oe_objective selects the paired hinge ("margin") or a per-token
    uniformity penalty ("token_uniform") weighted by lam.
    """
    a = _as_seq_matrix(inlier_seqs, model.alphabet_size)
    b = _as_seq_matrix(oe_seqs, model.alphabet_size)
    if b.shape[0] == 0:
        raise ConfigurationError("exposure fine-tuning needs a nonempty outlier set")
    if oe_objective not in ("margin", "token_uniform"):
        raise ConfigurationError(f"unknown density exposure objective {oe_objective!r}")
    if margin is None:
        margin = float(a.shape[1])
    if not margin > 0:
        raise ParameterError("margin must be positive")
    n_in = a.shape[0]
    bs = min(int(batch_size), n_in)
    steps_per_epoch = (n_in + bs - 1) // bs
    cur = model.copy()
    state = nn_core.init_optimizer(
        cur.net, lr0, total_steps=epochs * steps_per_epoch, momentum=momentum, weight_decay=weight_decay
    )
    rng = np.random.default_rng(seed)
    oe_order = rng.permutation(b.shape[0])
    oe_ptr = 0
    V = model.alphabet_size
    for _ in range(epochs):
        perm = rng.permutation(n_in)
        for start in range(0, n_in, bs):
            idx = perm[start : start + bs]
            take = idx.size
            oe_idx = np.array([oe_order[(oe_ptr + j) % b.shape[0]] for j in range(take)])
            oe_ptr = (oe_ptr + take) % b.shape[0]
            if oe_objective == "margin":
                g = margin_grad(cur, a[idx], b[oe_idx], margin, mle_weight, margin_weight)
            else:
                feats_in, t_in = context_features(a[idx], cur.context_window, V)
                logits, _, cache = nn_core.forward_cached(cur.net, feats_in)
                onehot = np.zeros((t_in.size, V))
                onehot[np.arange(t_in.size), t_in] = 1.0
                dlog = mle_weight * (nn_core.softmax(logits) - onehot) / t_in.size
                g = nn_core.backward(cur.net, cache, dlog)
                feats_oe, _ = context_features(b[oe_idx], cur.context_window, V)
                ologits, _, ocache = nn_core.forward_cached(cur.net, feats_oe)
                doe = lam * (nn_core.softmax(ologits) - 1.0 / V) / feats_oe.shape[0]
                g = nn_core.add_grads(g, nn_core.backward(cur.net, ocache, doe))
            new_net, state = nn_core.sgd_step(cur.net, g, state)
            cur = ARModelParams(cur.context_window, V, new_net)
    return cur


def save_ar_model(model: ARModelParams, path) -> None:
    """Net parameters as the binary format plus a JSON sidecar for the
    window and alphabet."""
    path = Path(path)
    nn_core.save_params(model.net, path)
    meta = {"context_window": model.context_window, "alphabet_size": model.alphabet_size}
    path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_ar_model(path) -> ARModelParams:
    path = Path(path)
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    if not meta_path.exists():
        raise DataError(f"missing density model sidecar {meta_path}")
    meta = json.loads(meta_path.read_text())
    net = nn_core.load_params(path)
    return ARModelParams(int(meta["context_window"]), int(meta["alphabet_size"]), net).validate()
