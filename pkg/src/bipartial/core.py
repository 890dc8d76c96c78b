"""Domain types: data tables, distance stores, partitions and merge histories.

Everything here is immutable after construction. Arrays handed out by these
types are flagged read-only so a history or store can be shared between runs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .exceptions import ConfigurationError, InputError

METRICS = ("euclidean", "squared_euclidean", "manhattan")
TRANSFORM_KINDS = ("average_preserving", "max_complement", "affine")

_PDIST_NAMES = {
    "euclidean": "euclidean",
    "squared_euclidean": "sqeuclidean",
    "manhattan": "cityblock",
}


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Data


@dataclass(frozen=True, eq=False)
class DataTable:
    """``n`` objects described by ``m`` numeric features.

    Parameters
    ----------
    values : array-like of shape (n_objects, n_features)
        Finite feature values.
    object_ids : sequence of str, optional
        Unique labels; defaults to ``"0" .. "n-1"``.
    """

    values: np.ndarray
    object_ids: tuple = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise InputError(f"data must be a non-empty 2-D table, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise InputError(f"non-finite feature value at row {bad[0]}, column {bad[1]}")
        ids = self.object_ids
        if ids is None:
            ids = tuple(str(i) for i in range(values.shape[0]))
        else:
            ids = tuple(str(i) for i in ids)
        if len(ids) != values.shape[0]:
            raise InputError(f"{len(ids)} object ids for {values.shape[0]} rows")
        if len(set(ids)) != len(ids):
            raise InputError("object ids must be unique")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "object_ids", ids)

    @property
    def n_objects(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


# ---------------------------------------------------------------------------
# Distances and proximities


@dataclass(frozen=True)
class ProximityTransform:
    """Rule turning distances into proximities.

    All supported kinds have the form ``s = K - d`` for a constant ``K``
    resolved from the distance matrix:

    * ``average_preserving``: ``K = 2 * mean(d)`` over off-diagonal pairs, so
      the mean proximity equals the mean distance; negative values are
      clamped to 0.
    * ``max_complement``: ``K = max(d)``.
    * ``affine``: ``K = c`` given explicitly, or ``c = ratio * max(d)``.
      ``K`` must not be smaller than ``max(d)``.
    """

    kind: str = "average_preserving"
    c: float | None = None
    ratio: float | None = None

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise ConfigurationError(
                f"unknown transform kind {self.kind!r}; expected one of {TRANSFORM_KINDS}"
            )
        if self.kind == "affine":
            if (self.c is None) == (self.ratio is None):
                raise ConfigurationError("affine transform needs exactly one of c or ratio")
            if self.ratio is not None and self.ratio < 1.0:
                raise ConfigurationError(f"affine ratio must be >= 1, got {self.ratio}")

    def resolve_offset(self, d: np.ndarray) -> float:
        """Return the constant ``K`` in ``s = K - d`` for this distance matrix."""
        n = d.shape[0]
        off = d[~np.eye(n, dtype=bool)]
        d_max = float(off.max()) if off.size else 0.0
        if self.kind == "average_preserving":
            return 2.0 * float(off.mean()) if off.size else 0.0
        if self.kind == "max_complement":
            return d_max
        c = self.c if self.c is not None else self.ratio * d_max
        if c < d_max:
            raise ConfigurationError(
                f"affine transform constant c={c!r} is below the largest distance {d_max!r}"
            )
        return float(c)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c": self.c, "ratio": self.ratio}


def proximity(values, offset: float):
    """Apply ``s = max(0, offset - d)`` elementwise."""
    return np.maximum(0.0, offset - np.asarray(values, dtype=float))


@dataclass(frozen=True, eq=False)
class DissimilarityStore:
    """Symmetric distance matrix with an optional derived proximity matrix."""

    d: np.ndarray
    s: np.ndarray | None = None
    transform: ProximityTransform | None = None
    offset: float | None = None
    clamped: int = 0
    metric: str | None = None

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InputError(f"distance matrix must be square, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InputError("distance matrix contains non-finite entries")
        if np.any(d < 0):
            raise InputError("distance matrix contains negative entries")
        if np.any(np.diag(d) != 0):
            raise InputError("distance matrix must have a zero diagonal")
        if not np.array_equal(d, d.T):
            raise InputError("distance matrix is not symmetric")
        object.__setattr__(self, "d", _frozen(d))
        if self.s is not None:
            object.__setattr__(self, "s", _frozen(self.s))

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def require_s(self) -> np.ndarray:
        if self.s is None:
            raise ConfigurationError("proximities not populated; call apply_transform first")
        return self.s


def compute_distances(data: DataTable, metric: str = "euclidean") -> DissimilarityStore:
    """Full pairwise distance matrix of ``data`` under ``metric``."""
    if metric not in METRICS:
        raise ConfigurationError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if data.n_objects == 1:
        d = np.zeros((1, 1))
    else:
        d = squareform(pdist(data.values, _PDIST_NAMES[metric]))
    return DissimilarityStore(d=d, metric=metric)


def apply_transform(store: DissimilarityStore, transform: ProximityTransform) -> DissimilarityStore:
    """Populate proximities ``s`` from ``d``.

    The returned store records how many off-diagonal pairs were clamped at
    zero, which only happens for ``average_preserving``.
    """
    d = store.d
    offset = transform.resolve_offset(d)
    raw = offset - d
    off_diag = ~np.eye(store.n, dtype=bool)
    clamped = int(np.count_nonzero((raw < 0) & off_diag))
    s = np.maximum(raw, 0.0)
    np.fill_diagonal(s, 0.0)
    return DissimilarityStore(
        d=d, s=s, transform=transform, offset=offset, clamped=clamped, metric=store.metric
    )


def build_store(data: DataTable, metric="euclidean", transform: ProximityTransform | None = None):
    """Distances plus proximities in one call."""
    return apply_transform(compute_distances(data, metric), transform or ProximityTransform())


# ---------------------------------------------------------------------------
# Partitions


def canonical_labels(labels) -> np.ndarray:
    """Relabel clusters ``0..p-1`` in order of first appearance."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inverse.reshape(-1)].astype(np.intp)


@dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of ``n`` objects to ``p`` non-empty clusters.

    Labels are stored in canonical form (first appearance order), so two
    partitions with the same blocks compare equal.
    """

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size < 1:
            raise InputError("partition labels must be a non-empty 1-D array")
        object.__setattr__(self, "labels", _frozen(canonical_labels(labels), dtype=np.intp))

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def p(self) -> int:
        return int(self.labels.max()) + 1

    def blocks(self) -> list[list[int]]:
        out = [[] for _ in range(self.p)]
        for i, q in enumerate(self.labels):
            out[q].append(i)
        return out

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls(np.arange(n))

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash(self.labels.tobytes())

    def __repr__(self):
        return f"Partition(p={self.p}, blocks={self.blocks()})"


# ---------------------------------------------------------------------------
# Merge histories


@dataclass(frozen=True)
class MergeRecord:
    """One merger.

    ``left``/``right`` use the scipy convention: atoms are ``0..L-1`` and
    the cluster created at step ``t`` gets id ``L + t - 1``. ``r``,
    ``delta_qs`` and ``delta_qd`` are NaN for classical linkage runs.
    """

    step: int
    left: int
    right: int
    new_cluster: int
    size: int
    link_value: float
    r: float = math.nan
    delta_qs: float = math.nan
    delta_qd: float = math.nan


@dataclass(frozen=True, eq=False)
class ObjectiveProfile:
    """Per-level objective components for ``t = 0 .. L-1``.

    ``qs`` is the similarity-flavoured term and ``qd`` the distance-flavoured
    one; for ``orientation == "maximize"`` they are ``Q_S`` and ``Q^D``, for
    ``"minimize"`` they are ``Q^S`` and ``Q_D``.
    """

    qs: np.ndarray
    qd: np.ndarray
    orientation: str = "maximize"

    def __post_init__(self):
        if self.orientation not in ("maximize", "minimize"):
            raise ConfigurationError(f"bad orientation {self.orientation!r}")
        object.__setattr__(self, "qs", _frozen(self.qs))
        object.__setattr__(self, "qd", _frozen(self.qd))
        if self.qs.shape != self.qd.shape:
            raise InputError("profile components have different lengths")

    @property
    def q_half(self) -> np.ndarray:
        return 0.5 * self.qs + 0.5 * self.qd

    def value(self, r: float) -> np.ndarray:
        """Objective value at weight ``r`` for every level."""
        return r * self.qs + (1.0 - r) * self.qd


@dataclass(frozen=True, eq=False)
class MergeHistory:
    """A complete dendrogram over ``leaves`` atoms.

    ``initial_labels`` maps each of the ``n_objects`` objects to its atom;
    for an ordinary run the atoms are the objects themselves.
    ``r_direction`` says whether thresholds are expected to grow
    (``"increasing"``, the bi-partial engine) or shrink (``"decreasing"``,
    the k-means merger which starts at ``r = 1``).
    """

    records: tuple
    leaves: int
    profile: ObjectiveProfile | None = None
    initial_labels: np.ndarray | None = None
    r_direction: str = "increasing"
    method: str = ""

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        if self.leaves < 1:
            raise InputError("a history needs at least one leaf")
        if len(records) != self.leaves - 1:
            raise InputError(f"{len(records)} records for {self.leaves} leaves")
        for t, rec in enumerate(records, start=1):
            if rec.step != t:
                raise InputError(f"record {t} carries step {rec.step}")
        labels = self.initial_labels
        if labels is None:
            labels = np.arange(self.leaves)
        labels = np.asarray(labels, dtype=np.intp)
        if labels.size and (labels.min() < 0 or labels.max() >= self.leaves):
            raise InputError("initial labels reference unknown atoms")
        object.__setattr__(self, "initial_labels", _frozen(labels, dtype=np.intp))
        if self.profile is not None and self.profile.qs.size != self.leaves:
            raise InputError("profile length does not match the number of levels")
        if self.r_direction not in ("increasing", "decreasing"):
            raise ConfigurationError(f"bad r_direction {self.r_direction!r}")

    @property
    def n_objects(self) -> int:
        return self.initial_labels.size

    @property
    def r(self) -> np.ndarray:
        return np.array([rec.r for rec in self.records], dtype=float)

    @property
    def link_values(self) -> np.ndarray:
        return np.array([rec.link_value for rec in self.records], dtype=float)

    def to_linkage_matrix(self, height="link") -> np.ndarray:
        """scipy-style ``(L-1, 4)`` linkage matrix."""
        h = self.r if height == "r" else self.link_values
        out = np.empty((len(self.records), 4))
        for k, rec in enumerate(self.records):
            out[k] = (rec.left, rec.right, h[k], rec.size)
        return out

    def cluster_members(self) -> dict[int, list[int]]:
        """Atom members of every cluster id (leaves and internal nodes)."""
        members = {i: [i] for i in range(self.leaves)}
        for rec in self.records:
            members[rec.new_cluster] = members[rec.left] + members[rec.right]
        return members


def partition_at_step(history: MergeHistory, t: int) -> Partition:
    """Partition of the objects after the first ``t`` mergers."""
    if not 0 <= t <= len(history.records):
        raise InputError(f"step {t} outside 0..{len(history.records)}")
    parent = list(range(history.leaves + t))
    for rec in history.records[:t]:
        parent[rec.left] = rec.new_cluster
        parent[rec.right] = rec.new_cluster

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    atom_root = np.array([root(i) for i in range(history.leaves)])
    return Partition(atom_root[history.initial_labels])


def atoms_partition(history: MergeHistory) -> Partition:
    return Partition(history.initial_labels)


# ---------------------------------------------------------------------------
# CSV ingestion


ID_COLUMNS = ("id", "object_id")


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _read_rows(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = [[c.strip() for c in row] for row in csv.reader(fh) if any(c.strip() for c in row)]
    if not rows:
        raise InputError(f"{path}: empty file")
    return rows


def _split_table(rows, path):
    """Strip an optional header row and an optional id column."""
    header = None
    if not all(_is_number(c) for c in rows[0][1:]) or (
        not _is_number(rows[0][0]) and len(rows) > 1 and all(_is_number(c) for c in rows[1][:1])
    ):
        header, rows = rows[0], rows[1:]
    if not rows:
        raise InputError(f"{path}: no data rows")
    width = len(rows[0])
    for k, row in enumerate(rows):
        if len(row) != width:
            raise InputError(f"{path}: row {k + 1} has {len(row)} fields, expected {width}")
    ids = None
    named_ids = header is not None and header[0].strip().lower() in ID_COLUMNS
    if named_ids or any(not _is_number(row[0]) for row in rows):
        ids = [row[0] for row in rows]
        rows = [row[1:] for row in rows]
    try:
        values = np.array([[float(c) for c in row] for row in rows], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric feature value ({exc})") from None
    return header, ids, values


def read_data_csv(path) -> DataTable:
    """Load a :class:`DataTable` from CSV.

    A header row is optional. The first column is taken as the object id
    column if the header names it ``id`` or ``object_id``, or if it holds
    anything non-numeric.
    """
    _, ids, values = _split_table(_read_rows(path), path)
    if values.shape[1] == 0:
        raise InputError(f"{path}: no feature columns")
    if not np.all(np.isfinite(values)):
        raise InputError(f"{path}: non-finite feature value")
    return DataTable(values, ids)


def read_matrix_csv(path, tol: float = 1e-9) -> tuple[DissimilarityStore, tuple]:
    """Load a square distance matrix, symmetrizing by averaging.

    Returns the store and the object ids (from an id column or header row
    when present).
    """
    header, ids, d = _split_table(_read_rows(path), path)
    n = d.shape[0]
    if d.shape != (n, n):
        raise InputError(f"{path}: distance matrix is {d.shape[0]}x{d.shape[1]}, not square")
    if not np.all(np.isfinite(d)):
        raise InputError(f"{path}: non-finite distance")
    asym = np.max(np.abs(d - d.T)) if n else 0.0
    if asym > tol:
        raise InputError(f"{path}: matrix not symmetric (max asymmetry {asym:.3g} > {tol:g})")
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    if ids is None and header is not None and len(header) == n:
        ids = header
    ids = tuple(ids) if ids is not None else tuple(str(i) for i in range(n))
    return DissimilarityStore(d=d), ids


def write_data_csv(path, data: DataTable, header: Sequence[str] | None = None):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = header or [f"x{j}" for j in range(data.n_features)]
        w.writerow(["id", *cols])
        for oid, row in zip(data.object_ids, data.values):
            w.writerow([oid, *(format_float(v) for v in row)])


def format_float(x: float) -> str:
    """17 significant digits, round-trip safe."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if math.isnan(x):
        return "nan"
    return "%.17g" % x

