"""Dense feed-forward classifiers with hand-derived gradients.

Everything here is plain NumPy in float64. A network is a list of
(out, in)-shaped weight matrices plus biases, with an optional scalar
confidence head read off the last hidden layer. All operations are pure:
they return fresh arrays and never mutate their inputs, which is what
makes seeded training runs bitwise reproducible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, ParameterError

PARAMS_MAGIC = b"OEWB"
PARAMS_VERSION = 1

_ACT_CODES = {"relu": 0, "tanh": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}

# Weight of the -log b(x) term that pulls the confidence head toward 1 on
# in-distribution samples when training with the confidence-branch objective.
BRANCH_FIT_WEIGHT = 1.0


@dataclass
class Batch:
    """Row-vector inputs with optional integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ConfigurationError("batch inputs must form a nonempty (n, d) matrix")
        if not np.all(np.isfinite(self.inputs)):
            raise DataError("batch inputs contain non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.inputs.shape[0],):
                raise ConfigurationError("labels must supply one class index per example")
            if np.any(self.labels < 0):
                raise DataError("negative class label")

    def __len__(self):
        return self.inputs.shape[0]


@dataclass
class BranchHead:
    """Scalar confidence head: maps the last hidden layer to one real."""

    weight: np.ndarray  # (last_hidden_dim,)
    bias: np.ndarray  # (1,)


@dataclass
class NetworkParams:
    layer_dims: list[int]
    weights: list[np.ndarray]  # weights[i] has shape (layer_dims[i+1], layer_dims[i])
    biases: list[np.ndarray]
    branch: BranchHead | None = None
    activation: str = "relu"

    def validate(self) -> "NetworkParams":
        dims = self.layer_dims
        if len(dims) < 2 or any(int(d) < 1 for d in dims):
            raise ConfigurationError("layer_dims needs at least two positive entries")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ConfigurationError("expected one weight/bias pair per layer transition")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise ConfigurationError(f"layer {i} parameter shapes do not match layer_dims")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DataError(f"layer {i} has non-finite parameters")
        if self.activation not in _ACT_CODES:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.branch is not None:
            if self.branch.weight.shape != (dims[-2],) or self.branch.bias.shape != (1,):
                raise ConfigurationError("confidence head must map the last hidden layer to one value")
            if not (np.all(np.isfinite(self.branch.weight)) and np.all(np.isfinite(self.branch.bias))):
                raise DataError("confidence head has non-finite parameters")
        return self

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "NetworkParams":
        br = None
        if self.branch is not None:
            br = BranchHead(self.branch.weight.copy(), self.branch.bias.copy())
        return NetworkParams(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            br,
            self.activation,
        )

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in the fixed order shared with Grads and the optimizer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        if self.branch is not None:
            out.append(self.branch.weight)
            out.append(self.branch.bias)
        return out


@dataclass
class Grads:
    """Gradient arrays mirroring NetworkParams.arrays() order."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    branch_weight: np.ndarray | None = None
    branch_bias: np.ndarray | None = None

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        if self.branch_weight is not None:
            out.append(self.branch_weight)
            out.append(self.branch_bias)
        return out


def add_grads(a: Grads, b: Grads) -> Grads:
    bw = bb = None
    if a.branch_weight is not None:
        bw = a.branch_weight + b.branch_weight
        bb = a.branch_bias + b.branch_bias
    return Grads(
        [x + y for x, y in zip(a.weights, b.weights)],
        [x + y for x, y in zip(a.biases, b.biases)],
        bw,
        bb,
    )


def init_network(layer_dims, seed, activation: str = "relu", with_branch: bool = False) -> NetworkParams:
    """Seeded uniform init with per-layer scale sqrt(6 / (fan_in + fan_out)).

    Biases start at zero. The confidence head, when requested, follows the
    same rule with fan_out = 1.
    """
    rng = np.random.default_rng(seed)
    dims = [int(d) for d in layer_dims]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    branch = None
    if with_branch:
        h = dims[-2]
        s = np.sqrt(6.0 / (h + 1))
        branch = BranchHead(rng.uniform(-s, s, size=h), np.zeros(1))
    return NetworkParams(dims, weights, biases, branch, activation).validate()


def _act(z: np.ndarray, name: str) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_grad(z: np.ndarray, name: str) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(np.float64)
    t = np.tanh(z)
    return 1.0 - t * t


def forward_cached(params: NetworkParams, inputs) -> tuple:
    """Forward pass keeping activations; returns (logits, branch_pre, cache)."""
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim != 2:
        raise ConfigurationError("inputs must form an (n, d) matrix")
    if X.shape[1] != params.input_dim:
        raise ConfigurationError(
            f"input width {X.shape[1]} does not match network input dim {params.input_dim}"
        )
    acts = [X]
    pres = []
    a = X
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        pres.append(z)
        if i < last:
            a = _act(z, params.activation)
            acts.append(a)
    logits = pres[-1]
    branch_pre = None
    if params.branch is not None:
        branch_pre = acts[-1] @ params.branch.weight + params.branch.bias[0]
    return logits, branch_pre, (acts, pres)


def forward(params: NetworkParams, batch):
    """Class logits for a batch, plus the confidence pre-activation when a head exists."""
    X = batch.inputs if isinstance(batch, Batch) else batch
    logits, branch_pre, _ = forward_cached(params, X)
    return logits, branch_pre


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax of logits / temperature, max-subtracted for stability."""
    if not temperature > 0:
        raise ParameterError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits, temperature: float = 1.0) -> np.ndarray:
    if not temperature > 0:
        raise ParameterError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def sigmoid(u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def log_sigmoid(u) -> np.ndarray:
    """log(sigmoid(u)) computed without ever forming sigmoid(u) = 0."""
    u = np.asarray(u, dtype=np.float64)
    return np.where(u >= 0, -np.log1p(np.exp(-np.abs(u))), u - np.log1p(np.exp(-np.abs(u))))


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    if np.any(labels >= k):
        raise DataError(f"class label out of range for {k} classes")
    out = np.zeros((labels.shape[0], k))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def backward(params: NetworkParams, cache, dlogits, dbranch_pre=None) -> Grads:
    """Parameter gradients from per-example gradients at the network outputs.

    dlogits is (n, k); dbranch_pre, when given, is (n,) with respect to the
    raw confidence pre-activation. The caller bakes any 1/n factors into
    these upstream gradients; this routine only applies the chain rule.
    """
    acts, pres = cache
    n_layers = len(params.weights)
    gw: list = [None] * n_layers
    gb: list = [None] * n_layers
    gbw = gbb = None
    branch_delta = None
    if params.branch is not None:
        if dbranch_pre is None:
            gbw = np.zeros_like(params.branch.weight)
            gbb = np.zeros(1)
        else:
            branch_delta = np.asarray(dbranch_pre, dtype=np.float64)
            h = acts[n_layers - 1]
            gbw = h.T @ branch_delta
            gbb = np.array([branch_delta.sum()])
    delta = np.asarray(dlogits, dtype=np.float64)
    for i in range(n_layers - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            da = delta @ params.weights[i]
            if i == n_layers - 1 and branch_delta is not None:
                da = da + branch_delta[:, None] * params.branch.weight[None, :]
            delta = da * _act_grad(pres[i - 1], params.activation)
    return Grads(gw, gb, gbw, gbb)


def _require_labeled(batch, what: str) -> None:
    if batch is None or len(batch) == 0:
        raise ConfigurationError(f"{what} needs a nonempty in-distribution batch")
    if batch.labels is None:
        raise ConfigurationError(f"{what} needs labels on the in-distribution batch")


def _require_oe(batch) -> None:
    if batch is None or len(batch) == 0:
        raise ConfigurationError("exposure objective needs a nonempty outlier batch")


def grad(params: NetworkParams, objective, in_batch: Batch | None = None, oe_batch: Batch | None = None) -> Grads:
    """Exact gradient of a training objective with respect to every parameter.

    in_batch supplies labeled in-distribution examples; oe_batch supplies
    auxiliary outliers for the exposure objectives. The sequence-paired
    margin objective lives with the density model (density.margin_grad)
    because its batches are whole sequences, not rows.
    """
    kind = objective.kind
    k = params.n_classes
    if kind == "plain_ce":
        _require_labeled(in_batch, "plain_ce")
        logits, _, cache = forward_cached(params, in_batch.inputs)
        dlog = (softmax(logits) - _one_hot(in_batch.labels, k)) / len(in_batch)
        return backward(params, cache, dlog)
    if kind == "multiclass_oe":
        _require_labeled(in_batch, "multiclass_oe")
        logits, _, cache = forward_cached(params, in_batch.inputs)
        dlog = (softmax(logits) - _one_hot(in_batch.labels, k)) / len(in_batch)
        g = backward(params, cache, dlog)
        lam = float(objective.lam)
        if lam > 0:
            _require_oe(oe_batch)
            ologits, _, ocache = forward_cached(params, oe_batch.inputs)
            doe = lam * (softmax(ologits) - 1.0 / k) / len(oe_batch)
            g = add_grads(g, backward(params, ocache, doe))
        return g
    if kind == "token_uniform_ce":
        _require_oe(oe_batch)
        logits, _, cache = forward_cached(params, oe_batch.inputs)
        dlog = (softmax(logits) - 1.0 / k) / len(oe_batch)
        return backward(params, cache, dlog)
    if kind == "confidence_branch_oe":
        if params.branch is None:
            raise ConfigurationError("confidence-branch objective needs a network with a confidence head")
        _require_labeled(in_batch, "confidence_branch_oe")
        logits, bpre, cache = forward_cached(params, in_batch.inputs)
        n = len(in_batch)
        dlog = (softmax(logits) - _one_hot(in_batch.labels, k)) / n
        # d(-log sigmoid(u))/du = sigmoid(u) - 1
        dbranch = BRANCH_FIT_WEIGHT * (sigmoid(bpre) - 1.0) / n
        g = backward(params, cache, dlog, dbranch)
        lam = float(objective.lam)
        if lam > 0:
            _require_oe(oe_batch)
            _, obpre, ocache = forward_cached(params, oe_batch.inputs)
            doeb = lam * (1.0 - sigmoid(obpre)) / len(oe_batch)
            zeros = np.zeros((len(oe_batch), k))
            g = add_grads(g, backward(params, ocache, zeros, doeb))
        return g
    if kind == "density_margin":
        raise ConfigurationError("margin objectives pair whole sequences; use density.margin_grad")
    raise ConfigurationError(f"unknown objective kind {kind!r}")


@dataclass
class OptimizerState:
    velocity: list[np.ndarray]
    step_count: int
    lr0: float
    momentum: float
    weight_decay: float
    total_steps: int


def init_optimizer(
    params: NetworkParams,
    lr0: float,
    total_steps: int,
    momentum: float = 0.9,
    weight_decay: float = 5e-4,
) -> OptimizerState:
    if not lr0 > 0:
        raise ParameterError("lr0 must be positive")
    if not 0.0 <= momentum < 1.0:
        raise ParameterError("momentum must lie in [0, 1)")
    if weight_decay < 0:
        raise ParameterError("weight_decay must be nonnegative")
    if int(total_steps) < 1:
        raise ParameterError("total_steps must be positive")
    vel = [np.zeros_like(a) for a in params.arrays()]
    return OptimizerState(vel, 0, float(lr0), float(momentum), float(weight_decay), int(total_steps))


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """Half-cosine decay: lr0 * 0.5 * (1 + cos(pi * step / total_steps))."""
    if total_steps <= 0:
        raise ParameterError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ParameterError("step outside the schedule range")
    if not lr0 > 0:
        raise ParameterError("lr0 must be positive")
    return float(lr0 * 0.5 * (1.0 + np.cos(np.pi * step / total_steps)))


def sgd_step(params: NetworkParams, grads: Grads, state: OptimizerState):
    """One Nesterov SGD update; weight decay is added to the raw gradients
    and the learning rate follows the cosine schedule. Returns new
    (params, state) without touching the inputs."""
    p_arrays = params.arrays()
    g_arrays = grads.arrays()
    if len(p_arrays) != len(g_arrays) or len(state.velocity) != len(p_arrays):
        raise ConfigurationError("parameter, gradient, and velocity layouts differ")
    lr = cosine_lr(state.step_count, state.total_steps, state.lr0)
    new_params = params.copy()
    out_arrays = new_params.arrays()
    new_vel = []
    for slot, (p, g, v) in enumerate(zip(p_arrays, g_arrays, state.velocity)):
        if p.shape != g.shape or p.shape != v.shape:
            raise ConfigurationError("gradient shape mismatch")
        gd = g + state.weight_decay * p
        vn = state.momentum * v + gd
        out_arrays[slot][...] = p - lr * (gd + state.momentum * vn)
        new_vel.append(vn)
    new_state = OptimizerState(
        new_vel, state.step_count + 1, state.lr0, state.momentum, state.weight_decay, state.total_steps
    )
    return new_params, new_state


def flatten_params(params: NetworkParams) -> np.ndarray:
    return np.concatenate([a.ravel() for a in params.arrays()])


def unflatten_params(template: NetworkParams, vec: np.ndarray) -> NetworkParams:
    vec = np.asarray(vec, dtype=np.float64)
    out = template.copy()
    arrays = out.arrays()
    if vec.size != sum(a.size for a in arrays):
        raise ConfigurationError("flat vector length does not match the parameter count")
    i = 0
    for a in arrays:
        n = a.size
        a[...] = vec[i : i + n].reshape(a.shape)
        i += n
    return out


def save_params(params: NetworkParams, path) -> None:
    """Write parameters as little-endian binary: magic 'OEWB', version,
    layer count, dims, activation and head flags, then row-major f64 blocks."""
    params.validate()
    dims = params.layer_dims
    parts = [
        PARAMS_MAGIC,
        struct.pack("<I", PARAMS_VERSION),
        struct.pack("<I", len(dims)),
        struct.pack(f"<{len(dims)}I", *dims),
        struct.pack("<BB", _ACT_CODES[params.activation], 1 if params.branch is not None else 0),
    ]
    for w, b in zip(params.weights, params.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    if params.branch is not None:
        parts.append(np.ascontiguousarray(params.branch.weight, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(params.branch.bias, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_params(path) -> NetworkParams:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != PARAMS_MAGIC:
        raise DataError("not a parameter file (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != PARAMS_VERSION:
        raise DataError(f"unsupported parameter file version {version}")
    (n_dims,) = struct.unpack_from("<I", raw, 8)
    off = 12
    try:
        dims = list(struct.unpack_from(f"<{n_dims}I", raw, off))
        off += 4 * n_dims
        act_code, has_branch = struct.unpack_from("<BB", raw, off)
        off += 2
        if act_code not in _ACT_NAMES:
            raise DataError(f"unknown activation code {act_code}")
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w_bytes = 8 * fan_in * fan_out
            weights.append(
                np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out, offset=off).reshape(fan_out, fan_in).copy()
            )
            off += w_bytes
            biases.append(np.frombuffer(raw, dtype="<f8", count=fan_out, offset=off).copy())
            off += 8 * fan_out
        branch = None
        if has_branch:
            h = dims[-2]
            bw = np.frombuffer(raw, dtype="<f8", count=h, offset=off).copy()
            off += 8 * h
            bb = np.frombuffer(raw, dtype="<f8", count=1, offset=off).copy()
            off += 8
            branch = BranchHead(bw, bb)
    except (struct.error, ValueError) as exc:
        raise DataError(f"truncated or corrupt parameter file: {exc}") from exc
    if off != len(raw):
        raise DataError("parameter file has trailing or missing bytes")
    return NetworkParams(dims, weights, biases, branch, _ACT_NAMES[act_code]).validate()
