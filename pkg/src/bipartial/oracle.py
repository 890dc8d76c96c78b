"""Exhaustive ground truth for small instances.

Everything here evaluates objectives from scratch on explicit partitions
and shares no code with :mod:`bipartial.objectives`, so the two can be
checked against each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import DataTable, DissimilarityStore, Partition
from .exceptions import ConfigurationError, IncomparablePartitionsError, InputError

DEFAULT_MAX_N = 12
HARD_MAX_N = 14

ORIENTATION = {
    "additive": "maximize",
    "minmax": "maximize",
    "avg_additive": "maximize",
    "facility": "minimize",
}


@dataclass(frozen=True)
class ObjectiveSpec:
    """Names an objective family and its parameters."""

    name: str = "additive"
    facility_cost: str = "centroid"
    facility_scale: float = 1.0

    def __post_init__(self):
        if self.name not in ORIENTATION:
            raise ConfigurationError(f"oracle does not support objective {self.name!r}")

    @property
    def orientation(self) -> str:
        return ORIENTATION[self.name]


def _guard(n, max_n):
    if max_n > HARD_MAX_N:
        raise InputError(f"oracle size guard may not exceed {HARD_MAX_N}")
    if n > max_n:
        raise InputError(
            f"n = {n} exceeds the enumeration bound {max_n} "
            f"(Bell({n}) partitions); raise max_n up to {HARD_MAX_N} to override"
        )
    if n < 1:
        raise InputError("need at least one object")


def restricted_growth_strings(n: int) -> Iterator[tuple]:
    """All restricted growth strings of length ``n`` in lexicographic order."""
    a = [0] * n
    maxes = [0] * n

    def rec(i):
        if i == n:
            yield tuple(a)
            return
        for v in range(maxes[i - 1] + 2):
            a[i] = v
            maxes[i] = max(maxes[i - 1], v)
            yield from rec(i + 1)

    if n == 0:
        return
    yield from rec(1)


def enumerate_partitions(n: int, max_n: int = DEFAULT_MAX_N) -> Iterator[Partition]:
    """Every set partition of ``n`` objects exactly once."""
    _guard(n, max_n)
    for rgs in restricted_growth_strings(n):
        yield Partition(np.array(rgs))


# ---------------------------------------------------------------------------
# From-scratch evaluation


def _blocks(labels):
    labels = np.asarray(labels)
    return [np.flatnonzero(labels == q) for q in np.unique(labels)]


def _centre_cost(X, metric):
    if metric == "manhattan":
        centre = np.median(X, axis=0)
        return float(np.sum(np.abs(X - centre)))
    centre = X.sum(axis=0) / X.shape[0]
    sq = ((X - centre) ** 2).sum(axis=1)
    return float(sq.sum() if metric == "squared_euclidean" else np.sqrt(sq).sum())


def evaluate(spec: ObjectiveSpec, store: DissimilarityStore, labels,
             data: DataTable | None = None) -> tuple[float, float]:
    """Return ``(qs, qd)`` of a partition, computed directly from definitions.

    ``qs`` is the similarity-flavoured term and ``qd`` the distance-flavoured
    one (``Q^S = p`` and ``Q_D = sum of costs`` for the facility objective).
    """
    blocks = _blocks(labels)
    d = store.d
    if spec.name == "facility":
        qs = float(len(blocks))
        qd = 0.0
        for A in blocks:
            if spec.facility_cost == "pairsum":
                sub = d[np.ix_(A, A)]
                qd += spec.facility_scale * (sub.sum() / 2.0) / A.size
            else:
                if data is None:
                    raise ConfigurationError("centroid facility cost needs feature data")
                qd += spec.facility_scale * _centre_cost(data.values[A], store.metric or "euclidean")
        return qs, qd
    s = store.require_s()
    qs = 0.0
    qd = 0.0
    for u, A in enumerate(blocks):
        sub_s = s[np.ix_(A, A)]
        if spec.name == "additive":
            qs += sub_s.sum() / 2.0
        elif spec.name == "minmax":
            if A.size > 1:
                qs += A.size * sub_s[~np.eye(A.size, dtype=bool)].max()
        else:
            qs += 0.5 * sub_s.sum()
        for B in blocks[u + 1:]:
            cross = d[np.ix_(A, B)]
            if spec.name == "additive":
                qd += cross.sum()
            elif spec.name == "minmax":
                qd += cross.min()
            else:
                qd += cross.sum() / (A.size * B.size)
    return float(qs), float(qd)


def objective_value(spec, store, labels, r, data=None) -> float:
    qs, qd = evaluate(spec, store, labels, data)
    return r * qs + (1.0 - r) * qd


def _additive_batch(store, rgs, r):
    """Vectorized additive objective over a stack of labelings."""
    L = np.asarray(rgs)
    n = L.shape[1]
    iu = np.triu_indices(n, 1)
    same = L[:, iu[0]] == L[:, iu[1]]
    s_pairs = store.require_s()[iu]
    d_pairs = store.d[iu]
    qs = same @ s_pairs
    qd = (~same) @ d_pairs
    return r * qs + (1.0 - r) * qd


def oracle_best(spec: ObjectiveSpec, store: DissimilarityStore, r: float,
                data: DataTable | None = None, max_n: int = DEFAULT_MAX_N) -> tuple[Partition, float]:
    """Global optimum of ``r * qs + (1 - r) * qd`` over all partitions.

    Maximized or minimized according to ``spec.orientation``; ties go to
    the partition that comes first in enumeration order.
    """
    if not 0.0 <= r <= 1.0:
        raise InputError(f"r must lie in [0, 1], got {r!r}")
    _guard(store.n, max_n)
    sign = 1.0 if spec.orientation == "maximize" else -1.0
    if spec.name == "additive":
        rgs = np.array(list(restricted_growth_strings(store.n)))
        vals = _additive_batch(store, rgs, r)
        k = int(np.argmax(sign * vals))
        return Partition(rgs[k]), float(vals[k])
    best = None
    best_val = None
    for rgs in restricted_growth_strings(store.n):
        v = objective_value(spec, store, rgs, r, data)
        if best_val is None or sign * v > sign * best_val:
            best, best_val = rgs, v
    return Partition(np.array(best)), float(best_val)


def oracle_switch_point(spec: ObjectiveSpec, store: DissimilarityStore, P: Partition,
                        P_ref: Partition, data: DataTable | None = None) -> float:
    """Weight at which ``P`` and ``P_ref`` have equal objective value.

    ``P`` must be the coarser side: better cohesion and worse separation
    than ``P_ref``. Above the returned ``r``, ``P`` wins.
    """
    qs, qd = evaluate(spec, store, P.labels, data)
    qs0, qd0 = evaluate(spec, store, P_ref.labels, data)
    if spec.orientation == "maximize":
        gain, loss = qs - qs0, qd0 - qd
    else:
        gain, loss = qs0 - qs, qd - qd0
    if P == P_ref or gain < 0 or loss < 0 or gain + loss <= 0:
        raise IncomparablePartitionsError(
            f"partitions are not ordered for a switch point (gain={gain!r}, loss={loss!r})"
        )
    return loss / (loss + gain)
