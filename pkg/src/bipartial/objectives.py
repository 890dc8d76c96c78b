"""Concrete bi-partial objectives for the merger engine.

* :class:`AdditiveObjective` -- summed intra-cluster proximities against
  summed inter-cluster distances. Its thresholds are
  ``D_AB / (D_AB + S_AB)`` over cross-pair sums, which orders pairs like
  average linkage when ``s = c - d``.
* :class:`FacilityObjective` -- ``sum_q D(A_q) + p``, minimized; every
  cluster costs one unit to open.
* :class:`MinMaxObjective` -- single-link distances between clusters,
  size-weighted maximum proximity inside clusters.
* :class:`AvgAdditiveObjective` -- average inter-cluster distances, halved
  ordered-pair proximity sums inside clusters.
"""

from __future__ import annotations

import numpy as np

from .core import DataTable, DissimilarityStore, MergeHistory, Partition, canonical_labels, partition_at_step
from .engine import BipartialObjective, run_bipartial
from .exceptions import ConfigurationError

OBJECTIVES = ("additive", "facility", "minmax", "avg_additive")
FACILITY_COSTS = ("centroid", "pairsum")

# Dense k*k*k temporaries above this many active clusters are built row by row.
_CUBE_LIMIT = 96


def _atom_labels(n, labels):
    if labels is None:
        return None, n
    labels = canonical_labels(labels)
    if labels.size != n:
        raise ConfigurationError(f"{labels.size} labels for {n} objects")
    return labels, int(labels.max()) + 1


def _onehot(labels, L):
    M = np.zeros((labels.size, L))
    M[np.arange(labels.size), labels] = 1.0
    return M


def _block_sums(mat, labels, L):
    """``out[a, b] = sum of mat[i, j]`` over ``i`` in atom a, ``j`` in atom b."""
    if labels is None:
        return np.array(mat, dtype=float, copy=True)
    M = _onehot(labels, L)
    return M.T @ mat @ M


def _block_reduce(mat, labels, L, fn):
    """Block-wise max or min; diagonal blocks include only ``i != j``."""
    if labels is None:
        out = np.array(mat, dtype=float, copy=True)
        np.fill_diagonal(out, 0.0)
        return out
    init = -np.inf if fn is np.maximum else np.inf
    out = np.full((L, L), init)
    for a in range(L):
        ia = np.flatnonzero(labels == a)
        for b in range(L):
            ib = np.flatnonzero(labels == b)
            blk = mat[np.ix_(ia, ib)]
            if a == b:
                blk = blk[~np.eye(ia.size, dtype=bool)]
            if blk.size:
                out[a, b] = blk.max() if fn is np.maximum else blk.min()
    out[~np.isfinite(out)] = 0.0
    return out


def _sizes(labels, n, L):
    if labels is None:
        return np.ones(n, dtype=np.intp)
    return np.bincount(labels, minlength=L)


class AdditiveObjective(BipartialObjective):
    """``Q_S = sum of s_ij inside clusters``, ``Q^D = sum of d_ij across``.

    Merging ``A`` and ``B`` moves exactly the cross pairs from one sum to
    the other, so ``dS = S_AB`` and ``dD = D_AB``.
    """

    name = "additive"

    def __init__(self, store: DissimilarityStore, labels=None):
        labels, L = _atom_labels(store.n, labels)
        super().__init__(_sizes(labels, store.n, L))
        self._cd = _block_sums(store.d, labels, L)
        self._cs = _block_sums(store.require_s(), labels, L)
        self._qs0 = float(np.trace(self._cs)) / 2.0
        self._qd0 = float(self._cd.sum() - np.trace(self._cd)) / 2.0

    def qs_initial(self):
        return self._qs0

    def qd_initial(self):
        return self._qd0

    def deltas(self, a, b):
        return float(self._cs[a, b]), float(self._cd[a, b])

    def pair_deltas(self, act):
        ix = np.ix_(act, act)
        return self._cs[ix], self._cd[ix]

    def link_value(self, a, b, dS, dD):
        return dD / (self.sizes[a] * self.sizes[b])

    def _merge(self, a, b):
        for m in (self._cs, self._cd):
            m[a, :] += m[b, :]
            m[:, a] += m[:, b]


def additive_deltas(store: DissimilarityStore, A, B) -> tuple[float, float]:
    """``(S_AB, D_AB)``: cross-pair sums of proximities and distances."""
    ix = np.ix_(np.asarray(A), np.asarray(B))
    return float(store.require_s()[ix].sum()), float(store.d[ix].sum())


class MinMaxObjective(BipartialObjective):
    """``Q^D = sum over cluster pairs of min d``; ``Q_S = sum of |A| * max s in A``."""

    name = "minmax"

    def __init__(self, store: DissimilarityStore, labels=None):
        labels, L = _atom_labels(store.n, labels)
        super().__init__(_sizes(labels, store.n, L))
        s = store.require_s()
        self._dmin = _block_reduce(store.d, labels, L, np.minimum)
        self._smax = _block_reduce(s, labels, L, np.maximum)
        self._S = np.diag(self._smax).copy()
        np.fill_diagonal(self._dmin, 0.0)
        np.fill_diagonal(self._smax, 0.0)

    def qs_initial(self):
        return float(np.sum(self.sizes * self._S))

    def qd_initial(self):
        return float(np.triu(self._dmin, 1).sum())

    def _ds(self, a, b):
        na, nb = self.sizes[a], self.sizes[b]
        s_ab = np.maximum(np.maximum(self._S[a], self._S[b]), self._smax[a, b])
        # written so each term is non-negative in floating point
        return na * (s_ab - self._S[a]) + nb * (s_ab - self._S[b])

    def deltas(self, a, b):
        act = np.flatnonzero(self.active)
        others = act[(act != a) & (act != b)]
        dd = self._dmin[a, b] + np.maximum(self._dmin[a, others], self._dmin[b, others]).sum()
        return float(self._ds(a, b)), float(dd)

    def pair_deltas(self, act):
        k = act.size
        D = self._dmin[np.ix_(act, act)]
        S = self._S[act]
        X = self._smax[np.ix_(act, act)]
        n = self.sizes[act].astype(float)
        s_ab = np.maximum(np.maximum(S[:, None], S[None, :]), X)
        dS = n[:, None] * (s_ab - S[:, None]) + n[None, :] * (s_ab - S[None, :])
        if k <= _CUBE_LIMIT:
            full = np.maximum(D[:, None, :], D[None, :, :]).sum(axis=2)
        else:
            full = np.empty((k, k))
            for i in range(k):
                full[i] = np.maximum(D[i][None, :], D).sum(axis=1)
        # the c = a and c = b terms each contribute D[a, b]
        dD = full - D
        return dS, dD

    def link_value(self, a, b, dS, dD):
        return float(self._dmin[a, b])

    def _merge(self, a, b):
        self._S[a] = max(self._S[a], self._S[b], self._smax[a, b])
        self._dmin[a, :] = np.minimum(self._dmin[a, :], self._dmin[b, :])
        self._dmin[:, a] = self._dmin[a, :]
        self._dmin[a, a] = 0.0
        self._smax[a, :] = np.maximum(self._smax[a, :], self._smax[b, :])
        self._smax[:, a] = self._smax[a, :]
        self._smax[a, a] = 0.0


class AvgAdditiveObjective(BipartialObjective):
    """``Q^D = sum over cluster pairs of mean cross distance``;
    ``Q_S = sum over clusters of half the ordered-pair proximity sum``.

    Merging ``A`` and ``B`` removes ``D(A, B)`` and, for each other
    cluster ``C``, replaces ``D(A, C) + D(B, C)`` by the size-weighted mean
    ``D(AB, C)``. Summed up this gives
    ``dD = (|B| R_A + |A| R_B) / (|A| + |B|)`` with ``R_X`` the total average
    distance from ``X`` to every other current cluster.
    """

    name = "avg_additive"

    def __init__(self, store: DissimilarityStore, labels=None):
        labels, L = _atom_labels(store.n, labels)
        super().__init__(_sizes(labels, store.n, L))
        self._cd = _block_sums(store.d, labels, L)
        self._cs = _block_sums(store.require_s(), labels, L)

    def _avg(self, act):
        n = self.sizes[act].astype(float)
        D = self._cd[np.ix_(act, act)] / np.outer(n, n)
        np.fill_diagonal(D, 0.0)
        return D, n

    def qs_initial(self):
        return float(np.trace(self._cs)) / 2.0

    def qd_initial(self):
        D, _ = self._avg(np.flatnonzero(self.active))
        return float(np.triu(D, 1).sum())

    def deltas(self, a, b):
        act = np.flatnonzero(self.active)
        D, n = self._avg(act)
        ia, ib = int(np.flatnonzero(act == a)[0]), int(np.flatnonzero(act == b)[0])
        R = D.sum(axis=1)
        dd = (n[ib] * R[ia] + n[ia] * R[ib]) / (n[ia] + n[ib])
        return float(self._cs[a, b]), float(dd)

    def pair_deltas(self, act):
        D, n = self._avg(act)
        R = D.sum(axis=1)
        dD = (n[None, :] * R[:, None] + n[:, None] * R[None, :]) / (n[:, None] + n[None, :])
        return self._cs[np.ix_(act, act)], dD

    def link_value(self, a, b, dS, dD):
        return float(self._cd[a, b] / (self.sizes[a] * self.sizes[b]))

    def _merge(self, a, b):
        for m in (self._cs, self._cd):
            m[a, :] += m[b, :]
            m[:, a] += m[:, b]


# ---------------------------------------------------------------------------
# Facility location


def _centre(X, metric):
    return np.median(X, axis=0) if metric == "manhattan" else X.mean(axis=0)


def _dist_to(X, c, metric):
    diff = X - c
    if metric == "manhattan":
        return np.abs(diff).sum(axis=1)
    sq = np.einsum("ij,ij->i", diff, diff)
    return sq if metric == "squared_euclidean" else np.sqrt(sq)


def centroid_cost(X, metric="euclidean") -> float:
    """Sum of distances from the rows of ``X`` to their centre.

    The centre is the coordinate-wise median under ``manhattan`` and the
    mean otherwise.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return float(_dist_to(X, _centre(X, metric), metric).sum())


class FacilityObjective(BipartialObjective):
    """Facility-location objective ``Q(P) = sum_q D(A_q) + p``, minimized.

    Parameters
    ----------
    store : DissimilarityStore
        Needed for ``cost="pairsum"``; its metric is used for ``"centroid"``.
    data : DataTable, optional
        Required for ``cost="centroid"``.
    cost : {"centroid", "pairsum"}
        ``centroid``: sum of distances to the cluster centre.
        ``pairsum``: within-cluster pair-distance sum divided by cluster size
        (for squared Euclidean distances both coincide).
    scale : float
        Multiplies ``D``; sets the exchange rate against the unit opening
        cost of a cluster.
    """

    name = "facility"
    orientation = "minimize"

    def __init__(self, store: DissimilarityStore, data: DataTable | None = None,
                 cost="centroid", scale=1.0, labels=None, metric=None):
        if cost not in FACILITY_COSTS:
            raise ConfigurationError(f"unknown facility cost {cost!r}; expected {FACILITY_COSTS}")
        if not scale > 0:
            raise ConfigurationError(f"facility scale must be positive, got {scale!r}")
        if cost == "centroid" and data is None:
            raise ConfigurationError("facility cost 'centroid' needs feature data, not a distance matrix")
        n = store.n
        labels, L = _atom_labels(n, labels)
        super().__init__(_sizes(labels, n, L))
        self.cost = cost
        self.scale = float(scale)
        self.metric = metric or store.metric or "euclidean"
        lab = labels if labels is not None else np.arange(n)
        self._members = [list(np.flatnonzero(lab == a)) for a in range(L)]
        if cost == "pairsum":
            self._cd = _block_sums(store.d, labels, L)
            self._intra = np.diag(self._cd) / 2.0
        else:
            self._X = data.values
        self._cost = np.array([self._cluster_cost(a) for a in range(L)])
        self._gain = np.zeros((L, L))
        for a in range(L):
            self._refresh_row(a, np.arange(a + 1, L))

    def _cluster_cost(self, a):
        if self.cost == "pairsum":
            return self.scale * self._intra[a] / self.sizes[a]
        return self.scale * centroid_cost(self._X[self._members[a]], self.metric)

    def _pair_gains(self, a, others):
        """``D(A u B) - D(A) - D(B)`` for slot ``a`` against each of ``others``."""
        if self.cost == "pairsum":
            tot = self._intra[a] + self._intra[others] + self._cd[a, others]
            union = self.scale * tot / (self.sizes[a] + self.sizes[others])
            return union - self._cost[a] - self._cost[others]
        if self.metric == "squared_euclidean":
            # Ward increment, exact for mean centres
            ca = self._X[self._members[a]].mean(axis=0)
            cb = np.array([self._X[self._members[b]].mean(axis=0) for b in others])
            na, nb = self.sizes[a], self.sizes[others]
            diff = cb - ca
            return self.scale * na * nb / (na + nb) * np.einsum("ij,ij->i", diff, diff)
        union = np.array([
            self.scale * centroid_cost(self._X[self._members[a] + self._members[b]], self.metric)
            for b in others
        ])
        return union - self._cost[a] - self._cost[others]

    def _refresh_row(self, a, others):
        others = np.asarray(others, dtype=np.intp)
        if others.size == 0:
            return
        g = self._pair_gains(a, others)
        self._gain[a, others] = g
        self._gain[others, a] = g

    def qs_initial(self):
        return float(self.n_atoms)

    def qd_initial(self):
        return float(self._cost.sum())

    def deltas(self, a, b):
        return 1.0, float(self._gain[a, b])

    def pair_deltas(self, act):
        return np.ones((act.size, act.size)), self._gain[np.ix_(act, act)]

    def merge_gain(self, a, b) -> float:
        """Change of ``Q(P)`` if slots ``a`` and ``b`` merge; negative is better."""
        return float(self._gain[a, b]) - 1.0

    def _merge(self, a, b):
        new_cost = self._cost[a] + self._cost[b] + self._gain[a, b]
        self._members[a] = self._members[a] + self._members[b]
        self._members[b] = []
        if self.cost == "pairsum":
            self._intra[a] = self._intra[a] + self._intra[b] + self._cd[a, b]
            self._cd[a, :] += self._cd[b, :]
            self._cd[:, a] += self._cd[:, b]
        self._cost[a] = new_cost
        self._cost[b] = 0.0

    def on_merge(self, a, b):
        a, b = min(a, b), max(a, b)
        super().on_merge(a, b)
        if self.cost != "pairsum":
            # recompute from members to avoid drift in the running cost
            self._cost[a] = self._cluster_cost(a)
        others = np.flatnonzero(self.active)
        self._refresh_row(a, others[others != a])


def facility_merge_gain(objective: FacilityObjective, a: int, b: int) -> float:
    """``D(A u B) - D(A) - D(B) - 1``; negative means the merger pays off."""
    return objective.merge_gain(a, b)


def facility_stop_step(history: MergeHistory) -> int:
    """Number of leading mergers that strictly decrease ``Q(P)``."""
    t = 0
    for rec in history.records:
        if rec.delta_qd - rec.delta_qs < 0:
            t += 1
        else:
            break
    return t


def run_facility(objective: FacilityObjective) -> tuple[Partition, MergeHistory]:
    """Greedy facility-location merging.

    Repeatedly merges the pair with the most negative change of ``Q(P)``
    and stops as soon as no merger improves it. The full hierarchy is kept
    in the returned history; the partition is the greedy stopping point.
    """
    history = run_bipartial(objective)
    return partition_at_step(history, facility_stop_step(history)), history


def make_objective(name: str, store: DissimilarityStore, data: DataTable | None = None,
                   labels=None, facility_cost="centroid", facility_scale=1.0) -> BipartialObjective:
    """Construct a fresh objective by name."""
    if name == "additive":
        return AdditiveObjective(store, labels)
    if name == "minmax":
        return MinMaxObjective(store, labels)
    if name == "avg_additive":
        return AvgAdditiveObjective(store, labels)
    if name == "facility":
        return FacilityObjective(store, data, facility_cost, facility_scale, labels)
    raise ConfigurationError(f"unknown objective {name!r}; expected one of {OBJECTIVES}")
