"""Dataset materialization: synthetic inliers, outlier sources, file ingest.

Vector data moves through CSV (feature columns + optional integer label
column) or a binary container; discrete sequences use CSV rows of symbol
columns. Every materialized auxiliary/test outlier pair is scanned for
byte-identical rows so no test example can leak into training.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import outlier_gen
from ..density import DiscreteSequence
from ..errors import ConfigurationError, DataError
from .config import DatasetSpec

DATA_MAGIC = b"OEWD"
DATA_VERSION = 1


@dataclass
class VectorDataset:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray | None = None  # (n,) int64 or None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise DataError(f"features must be a nonempty (n, d) array, got {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise DataError("labels must align with feature rows")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "VectorDataset":
        lab = None if self.labels is None else self.labels[idx]
        return VectorDataset(self.features[idx], lab)


@dataclass
class SequenceDataset:
    sequences: np.ndarray  # (n, length) int64 symbols
    alphabet_size: int

    def __post_init__(self):
        self.sequences = np.asarray(self.sequences, dtype=np.int64)
        if self.sequences.ndim != 2 or self.sequences.shape[0] == 0:
            raise DataError(f"sequences must be a nonempty (n, length) array")
        if self.sequences.min() < 0 or self.sequences.max() >= self.alphabet_size:
            raise DataError(f"symbols must lie in [0, {self.alphabet_size})")

    @property
    def n(self) -> int:
        return self.sequences.shape[0]

    @property
    def length(self) -> int:
        return self.sequences.shape[1]

    def subset(self, idx) -> "SequenceDataset":
        return SequenceDataset(self.sequences[idx], self.alphabet_size)

    def as_sequences(self) -> list:
        return [DiscreteSequence(row, self.alphabet_size) for row in self.sequences]


def _cluster_means(k: int, dim: int, separation: float) -> np.ndarray:
    """Centers for a k-class mixture with pairwise distance == separation.

    For k <= dim + 1 the centers form a regular simplex; otherwise they sit
    on a circle in the first two coordinates, where only adjacent pairs
    achieve the stated separation.
    """
    if k < 2:
        raise ConfigurationError("need at least two clusters")
    if k <= dim + 1:
        # Rows of I_k centered at the centroid span a regular simplex with
        # side sqrt(2); embed its (k-1)-dim span into the first coordinates.
        pts = np.eye(k) - 1.0 / k
        # Orthonormal basis of the span via SVD.
        _, s, vt = np.linalg.svd(pts, full_matrices=False)
        coords = pts @ vt[: k - 1].T  # (k, k-1)
        coords *= separation / np.sqrt(2.0)
        means = np.zeros((k, dim))
        means[:, : k - 1] = coords
        return means
    if dim < 2:
        raise ConfigurationError(f"cannot place {k} clusters in {dim} dimensions")
    radius = separation / (2.0 * np.sin(np.pi / k))
    angles = 2.0 * np.pi * np.arange(k) / k
    means = np.zeros((k, dim))
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    return means


def make_synthetic_din(
    k: int,
    n_per_cluster: int,
    dim: int,
    separation: float,
    seed,
    class_subset=None,
) -> VectorDataset:
    """Unit-variance Gaussian clusters, one class per cluster."""
    if n_per_cluster < 1:
        raise ConfigurationError("n_per_cluster must be positive")
    means = _cluster_means(k, dim, separation)
    classes = range(k) if class_subset is None else list(class_subset)
    rng = np.random.default_rng(seed)
    feats = []
    labels = []
    for c in classes:
        if not 0 <= c < k:
            raise ConfigurationError(f"class {c} out of range for k={k}")
        x = rng.standard_normal((n_per_cluster, dim)) + means[c]
        feats.append(x)
        labels.append(np.full(n_per_cluster, c, dtype=np.int64))
    return VectorDataset(np.concatenate(feats), np.concatenate(labels))


def make_markov_sequences(
    n: int,
    length: int,
    alphabet_size: int,
    p_step: float,
    p_stay: float,
    seed,
    starts=None,
) -> SequenceDataset:
    """Cyclic-walk sequences: advance +1 w.p. p_step, hold w.p. p_stay,
    else jump uniformly over the remaining symbols."""
    if not 0 <= p_step <= 1 or not 0 <= p_stay <= 1 or p_step + p_stay > 1:
        raise ConfigurationError("p_step and p_stay must be probabilities summing to <= 1")
    if length < 1 or n < 1:
        raise ConfigurationError("n and length must be positive")
    v = alphabet_size
    if v < 2:
        raise ConfigurationError("alphabet_size must be at least 2")
    if v == 2 and p_step + p_stay < 1:
        raise ConfigurationError("binary alphabet leaves no symbols to jump to")
    rng = np.random.default_rng(seed)
    start_pool = np.arange(v) if starts is None else np.asarray(sorted(starts), dtype=np.int64)
    if start_pool.size == 0 or start_pool.min() < 0 or start_pool.max() >= v:
        raise ConfigurationError("starts must be nonempty symbols in range")
    seqs = np.zeros((n, length), dtype=np.int64)
    cur = start_pool[rng.integers(0, start_pool.size, size=n)]
    seqs[:, 0] = cur
    for t in range(1, length):
        u = rng.random(n)
        nxt = np.where(
            u < p_step,
            (cur + 1) % v,
            np.where(u < p_step + p_stay, cur, -1),
        )
        jump = nxt < 0
        if np.any(jump):
            # Uniform over symbols other than cur and cur+1.
            offs = rng.integers(0, max(v - 2, 1), size=int(jump.sum()))
            nxt[jump] = (cur[jump] + 2 + offs) % v
        cur = nxt
        seqs[:, t] = cur
    return SequenceDataset(seqs, v)


# ---------------------------------------------------------------------------
# File formats


def write_vectors_csv(path, data: VectorDataset) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    cols = [f"x{i}" for i in range(data.dim)]
    if data.labels is not None:
        cols.append("label")
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.features[i]]
            if data.labels is not None:
                row.append(str(int(data.labels[i])))
            w.writerow(row)


def read_vectors_csv(path, label_column: str | None = "label") -> VectorDataset:
    p = Path(path)
    if not p.exists():
        raise DataError(f"dataset file {p} does not exist")
    with open(p, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{p}: empty dataset file") from None
        header = [h.strip() for h in header]
        label_idx = None
        if label_column is not None and label_column in header:
            label_idx = header.index(label_column)
        feat_idx = [i for i in range(len(header)) if i != label_idx]
        if not feat_idx:
            raise DataError(f"{p}: no feature columns")
        feats = []
        labels = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{p}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                feats.append([float(row[i]) for i in feat_idx])
                if label_idx is not None:
                    labels.append(int(row[label_idx]))
            except ValueError as exc:
                raise DataError(f"{p}:{lineno}: {exc}") from exc
    if not feats:
        raise DataError(f"{p}: dataset has a header but no rows")
    lab = np.asarray(labels, dtype=np.int64) if label_idx is not None else None
    return VectorDataset(np.asarray(feats, dtype=np.float64), lab)


def write_sequences_csv(path, data: SequenceDataset) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"s{i}" for i in range(data.length)])
        for row in data.sequences:
            w.writerow([str(int(v)) for v in row])


def read_sequences_csv(path, alphabet_size: int) -> SequenceDataset:
    p = Path(path)
    if not p.exists():
        raise DataError(f"dataset file {p} does not exist")
    with open(p, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{p}: empty dataset file") from None
        width = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataError(f"{p}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                rows.append([int(v) for v in row])
            except ValueError as exc:
                raise DataError(f"{p}:{lineno}: {exc}") from exc
    if not rows:
        raise DataError(f"{p}: dataset has a header but no rows")
    return SequenceDataset(np.asarray(rows, dtype=np.int64), alphabet_size)


def write_vectors_binary(path, data: VectorDataset) -> None:
    """Binary container: magic, version, flags, n, d, labels?, row-major f64."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    has_labels = data.labels is not None
    with open(p, "wb") as fh:
        fh.write(DATA_MAGIC)
        fh.write(struct.pack("<IBII", DATA_VERSION, 1 if has_labels else 0, data.n, data.dim))
        fh.write(np.ascontiguousarray(data.features, dtype="<f8").tobytes())
        if has_labels:
            fh.write(np.ascontiguousarray(data.labels, dtype="<i8").tobytes())


def read_vectors_binary(path) -> VectorDataset:
    p = Path(path)
    if not p.exists():
        raise DataError(f"dataset file {p} does not exist")
    blob = p.read_bytes()
    if blob[:4] != DATA_MAGIC:
        raise DataError(f"{p}: bad magic, not a dataset container")
    off = 4
    try:
        version, has_labels, n, d = struct.unpack_from("<IBII", blob, off)
    except struct.error as exc:
        raise DataError(f"{p}: truncated header") from exc
    off += struct.calcsize("<IBII")
    if version != DATA_VERSION:
        raise DataError(f"{p}: unsupported container version {version}")
    need = n * d * 8 + (n * 8 if has_labels else 0)
    if len(blob) - off != need:
        raise DataError(f"{p}: expected {need} payload bytes, found {len(blob) - off}")
    feats = np.frombuffer(blob, dtype="<f8", count=n * d, offset=off).reshape(n, d).copy()
    off += n * d * 8
    labels = None
    if has_labels:
        labels = np.frombuffer(blob, dtype="<i8", count=n, offset=off).copy()
    return VectorDataset(feats, labels)


def ingest_dataset(path, label_column: str | None = "label") -> VectorDataset:
    p = Path(path)
    if p.suffix == ".bin":
        return read_vectors_binary(p)
    return read_vectors_csv(p, label_column=label_column)


# ---------------------------------------------------------------------------
# Generator registry


def _grid_shape(params: dict) -> outlier_gen.GridShape:
    try:
        shape = params["shape"]
        vr = params.get("value_range", (0.0, 1.0))
        return outlier_gen.GridShape(
            int(shape[0]), int(shape[1]), int(shape[2]), (float(vr[0]), float(vr[1]))
        )
    except (KeyError, IndexError, TypeError) as exc:
        raise ConfigurationError(f"generator needs params['shape'] = [h, w, c]: {exc}") from exc


def _post_transform(rows: np.ndarray, params: dict) -> np.ndarray:
    scale = float(params.get("scale", 1.0))
    offset = np.asarray(params.get("offset", 0.0), dtype=np.float64)
    return rows * scale + offset


def materialize_generator(params: dict, n: int, dim: int, seed, din: VectorDataset | None):
    """Dispatch on params['generator']. Corruptors draw their source rows
    from the in-distribution data, so din must be present for them."""
    kind = params.get("generator")
    if kind == "uniform":
        rows = outlier_gen.gen_uniform_noise(n, _grid_shape(params), seed)
    elif kind == "gaussian":
        vr = params.get("value_range")
        vr = None if vr is None else (float(vr[0]), float(vr[1]))
        rows = outlier_gen.gen_gaussian(n, dim, seed, value_range=vr)
    elif kind == "rademacher":
        rows = outlier_gen.gen_rademacher(n, dim, seed)
    elif kind == "bernoulli":
        rows = outlier_gen.gen_bernoulli(n, dim, float(params.get("p", 0.5)), seed)
    elif kind == "blobs":
        rows = outlier_gen.gen_blobs(n, _grid_shape(params), seed)
    elif kind == "uniform_box":
        lo, hi = params.get("low", -1.0), params.get("high", 1.0)
        rng = np.random.default_rng(seed)
        rows = rng.uniform(float(lo), float(hi), size=(n, dim))
    elif kind == "ring":
        radius = float(params.get("radius", 1.0))
        width = float(params.get("width", 0.1))
        if dim < 2:
            raise ConfigurationError("ring generator needs dim >= 2")
        rng = np.random.default_rng(seed)
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        r = radius + width * rng.standard_normal(n)
        rows = np.zeros((n, dim))
        rows[:, 0] = r * np.cos(theta)
        rows[:, 1] = r * np.sin(theta)
        if dim > 2:
            rows[:, 2:] = rng.standard_normal((n, dim - 2))
    elif kind == "shifted_gaussian":
        mean = np.asarray(params.get("mean", [0.0] * dim), dtype=np.float64)
        if mean.shape != (dim,):
            raise ConfigurationError(f"mean must have {dim} entries")
        rng = np.random.default_rng(seed)
        rows = rng.standard_normal((n, dim)) + mean
    elif kind == "scaled_gaussian":
        sigma = float(params.get("sigma", 1.0))
        rng = np.random.default_rng(seed)
        rows = sigma * rng.standard_normal((n, dim))
    elif kind in (
        "arithmetic_mean",
        "geometric_mean",
        "jigsaw",
        "speckle",
        "rgb_ghost",
        "invert",
    ):
        if din is None:
            raise ConfigurationError(f"corruptor {kind!r} needs in-distribution source rows")
        rng = np.random.default_rng(seed)
        take = rng.choice(din.n, size=min(n, din.n), replace=False)
        src = din.features[np.sort(take)]
        if kind == "arithmetic_mean":
            rows = outlier_gen.corrupt_arithmetic_mean(src, seed=seed, n=min(n, src.shape[0]))
        elif kind == "geometric_mean":
            vr = tuple(params.get("value_range", (0.0, 1.0)))
            rows = outlier_gen.corrupt_geometric_mean(
                src, seed=seed, value_range=vr, n=min(n, src.shape[0])
            )
        elif kind == "jigsaw":
            rows = outlier_gen.corrupt_jigsaw(src, _grid_shape(params), seed=seed)
        elif kind == "speckle":
            vr = tuple(params.get("value_range", (0.0, 1.0)))
            rows = outlier_gen.corrupt_speckle(
                src, intensity=float(params.get("intensity", 0.2)), seed=seed, value_range=vr
            )
        elif kind == "rgb_ghost":
            rows = outlier_gen.corrupt_rgb_ghost(src, _grid_shape(params), seed=seed)
        else:
            shape = _grid_shape(params)
            mask = params.get("channel_mask", [True] * shape.channels)
            rows = outlier_gen.corrupt_invert(src, shape, channel_mask=mask)
    else:
        raise ConfigurationError(f"unknown generator {kind!r}")
    if rows.shape[1] != dim:
        raise ConfigurationError(
            f"generator {kind!r} produced dim {rows.shape[1]}, experiment needs {dim}"
        )
    return VectorDataset(_post_transform(rows, params))


def materialize(
    spec: DatasetSpec,
    n: int,
    seed,
    dim: int | None = None,
    din: VectorDataset | None = None,
):
    """Produce the rows a spec describes. Synthetic inliers carry labels;
    everything else is unlabeled. Sequence specs return SequenceDataset."""
    spec.validate()
    if spec.kind == "file":
        if spec.params.get("sequence"):
            return read_sequences_csv(spec.path, int(spec.params["alphabet_size"]))
        return ingest_dataset(spec.path, label_column=spec.params.get("label_column", "label"))
    if spec.kind == "synthetic_gaussian_mixture":
        p = spec.params
        k = int(p.get("k", 4))
        npc = n // k if n is not None else int(p.get("n_per_cluster", 200))
        return make_synthetic_din(
            k=k,
            n_per_cluster=max(npc, 1),
            dim=int(p.get("dim", dim or 2)),
            separation=float(p.get("separation", 4.0)),
            seed=seed,
            class_subset=p.get("class_subset"),
        )
    # generator
    p = spec.params
    if p.get("generator") == "markov_chain":
        return make_markov_sequences(
            n=n,
            length=int(p["length"]),
            alphabet_size=int(p["alphabet_size"]),
            p_step=float(p.get("p_step", 0.8)),
            p_stay=float(p.get("p_stay", 0.1)),
            seed=seed,
            starts=p.get("starts"),
        )
    if dim is None:
        raise ConfigurationError("generator specs need the experiment dimension")
    return materialize_generator(p, n, dim, seed, din)


def _row_bytes(data) -> set:
    if isinstance(data, SequenceDataset):
        return {row.tobytes() for row in np.ascontiguousarray(data.sequences)}
    return {row.tobytes() for row in np.ascontiguousarray(data.features)}


def check_disjoint(oe_data, test_data, oe_name: str, test_name: str) -> None:
    """Refuse to run when any auxiliary training row also appears in a test
    outlier set; shared rows would let test information leak into tuning."""
    shared = _row_bytes(oe_data) & _row_bytes(test_data)
    if shared:
        raise ConfigurationError(
            f"auxiliary outlier set {oe_name!r} shares {len(shared)} row(s) "
            f"with test outlier set {test_name!r}; the two must be disjoint"
        )
