"""k-means with a bi-partial objective.

The classical centre-and-reallocate iteration minimizes the within-cluster
dispersion ``Q_D``. Adding the outer-similarity term ``Q^S`` (each object's
largest proximity to a foreign centroid, weighted by 1/2) gives the
objective ``Q_D^S = Q_D + Q^S``, which has an interior minimum over the
number of clusters ``p``. The same objective also drives a merger
procedure (:func:`run_bipartial_kmeans`) and a two-stage hybrid.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DataTable,
    MergeHistory,
    Partition,
    ProximityTransform,
    build_store,
    canonical_labels,
    compute_distances,
    partition_at_step,
)
from .engine import BipartialObjective, StopDecision, run_bipartial, select_partition
from .exceptions import ConfigurationError, InputError
from .objectives import make_objective

KMEANS_METRICS = ("squared_euclidean", "manhattan")
SEEDINGS = ("random", "farthest_point")


def _check_metric(metric):
    if metric not in KMEANS_METRICS:
        raise ConfigurationError(f"k-means metric must be one of {KMEANS_METRICS}, got {metric!r}")


def centres(X, labels, p, metric):
    """Mean (squared Euclidean) or coordinate-wise median (Manhattan) per cluster."""
    out = np.empty((p, X.shape[1]))
    for q in range(p):
        pts = X[labels == q]
        out[q] = np.median(pts, axis=0) if metric == "manhattan" else pts.mean(axis=0)
    return out


def point_centre_distances(X, C, metric):
    diff = X[:, None, :] - C[None, :, :]
    if metric == "manhattan":
        return np.abs(diff).sum(axis=2)
    return np.einsum("ijk,ijk->ij", diff, diff)


@dataclass(frozen=True, eq=False)
class CentroidModel:
    """Result of a centre-and-reallocate run.

    ``centroids[q]`` belongs to cluster ``q`` of ``partition`` (canonical
    labels). ``qd_trace`` holds ``Q_D`` after every completed iteration.
    """

    centroids: np.ndarray
    partition: Partition
    metric: str
    qd: float
    n_iter: int = 0
    qd_trace: tuple = ()
    restart: int = 0

    @property
    def p(self) -> int:
        return self.centroids.shape[0]

    @property
    def labels(self) -> np.ndarray:
        return self.partition.labels


def _seed(X, p, metric, seeding, rng):
    n = X.shape[0]
    if seeding == "random":
        return rng.choice(n, size=p, replace=False)
    chosen = [int(rng.integers(n))]
    mind = point_centre_distances(X, X[chosen], metric)[:, 0]
    for _ in range(1, p):
        mind[chosen] = -1.0
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, point_centre_distances(X, X[[nxt]], metric)[:, 0])
    return np.array(chosen)


def _lloyd(X, p, metric, seeding, rng, max_iter):
    C = X[_seed(X, p, metric, seeding, rng)].astype(float)
    labels = None
    trace = []
    it = 0
    for it in range(1, max_iter + 1):
        dist = point_centre_distances(X, C, metric)
        new = np.argmin(dist, axis=1)
        counts = np.bincount(new, minlength=p)
        if np.any(counts == 0):
            # re-seed empty clusters at the objects that are worst served
            cost = dist[np.arange(X.shape[0]), new]
            order = np.argsort(-cost, kind="stable")
            pos = 0
            for q in np.flatnonzero(counts == 0):
                while counts[new[order[pos]]] < 2:
                    pos += 1
                i = order[pos]
                counts[new[i]] -= 1
                new[i] = q
                counts[q] = 1
                pos += 1
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        C = centres(X, labels, p, metric)
        d_own = point_centre_distances(X, C, metric)[np.arange(X.shape[0]), labels]
        trace.append(float(d_own.sum()))
    return C, labels, trace, it


def kmeans_classic(data: DataTable, p: int, seeding: str = "farthest_point", restarts: int = 10,
                   metric: str = "squared_euclidean", seed: int = 0, max_iter: int = 300,
                   n_jobs: int = 1) -> CentroidModel:
    """Best of ``restarts`` centre-and-reallocate runs.

    Restarts draw independent generators from ``seed`` and may run in
    threads; the result does not depend on ``n_jobs`` (lowest ``Q_D`` wins,
    earliest restart on ties).
    """
    _check_metric(metric)
    if seeding not in SEEDINGS:
        raise ConfigurationError(f"seeding must be one of {SEEDINGS}, got {seeding!r}")
    X = data.values
    n = X.shape[0]
    if not 1 <= p <= n:
        raise InputError(f"number of clusters p={p} must lie in 1..{n}")
    if restarts < 1:
        raise ConfigurationError("restarts must be >= 1")
    children = np.random.SeedSequence(seed).spawn(restarts)

    def one(k):
        return _lloyd(X, p, metric, seeding, np.random.default_rng(children[k]), max_iter)

    if n_jobs > 1 and restarts > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            runs = list(pool.map(one, range(restarts)))
    else:
        runs = [one(k) for k in range(restarts)]
    best = min(range(restarts), key=lambda k: (runs[k][2][-1], k))
    C, labels, trace, it = runs[best]
    canon = canonical_labels(labels)
    order = np.empty(p, dtype=np.intp)
    order[canon] = labels
    return CentroidModel(
        centroids=C[order], partition=Partition(canon), metric=metric,
        qd=trace[-1], n_iter=it, qd_trace=tuple(trace), restart=best,
    )


def resolve_offset(data: DataTable, metric: str, transform: ProximityTransform) -> float:
    """Constant ``K`` of ``s = max(0, K - d)`` for object-to-centroid proximities."""
    return transform.resolve_offset(compute_distances(data, metric).d)


def outer_similarity(X, C, labels, metric, offset) -> np.ndarray:
    """Per-object largest proximity to a centroid other than its own."""
    if C.shape[0] < 2:
        return np.zeros(X.shape[0])
    s = np.maximum(0.0, offset - point_centre_distances(X, C, metric))
    s[np.arange(X.shape[0]), labels] = -np.inf
    return s.max(axis=1)


def bipartial_kmeans_objective(data: DataTable, model: CentroidModel,
                               transform: ProximityTransform | None = None,
                               outer_weight: float = 0.5, offset: float | None = None):
    """``(Q_D, Q^S, Q_D^S)`` of a centroid model.

    ``Q^S`` is ``outer_weight`` times the summed outer similarity; it is 0
    for a single cluster, where no foreign centroid exists.
    """
    if offset is None:
        offset = resolve_offset(data, model.metric, transform or ProximityTransform())
    X = data.values
    labels = model.labels
    qd = float(point_centre_distances(X, model.centroids, model.metric)[np.arange(X.shape[0]), labels].sum())
    qs = float(outer_weight * outer_similarity(X, model.centroids, labels, model.metric, offset).sum())
    return qd, qs, qd + qs


def evaluate_partition(data: DataTable, labels, metric="squared_euclidean", offset=0.0,
                       outer_weight=0.5):
    """``(Q_D, Q^S)`` for an arbitrary labelling, centroids recomputed."""
    labels = canonical_labels(labels)
    p = int(labels.max()) + 1
    C = centres(data.values, labels, p, metric)
    qd = float(point_centre_distances(data.values, C, metric)[np.arange(labels.size), labels].sum())
    qs = float(outer_weight * outer_similarity(data.values, C, labels, metric, offset).sum())
    return qd, qs


# ---------------------------------------------------------------------------
# Merger procedure


OUTER_SCOPES = ("partition", "pair")


class KMeansMergeObjective(BipartialObjective):
    """Merger rule for the k-means objective.

    For a candidate pair ``(A, B)`` the distance part is
    ``dD = D(A u B) - D(A) - D(B)``, with ``D(A)`` the dispersion of ``A``
    around its own centre. The similarity part ``dS`` is ``outer_weight``
    times ``S(A) + S(B) - S(A u B)``, where ``S`` is a cluster's summed
    outer similarity. ``outer_scope`` fixes the foreign centroids it sees:

    ``"partition"``
        All other clusters of the current partition (before the merger for
        ``S(A)``, ``S(B)``; after it for ``S(A u B)``). An object of ``A``
        then only contributes if its best foreign centroid is ``B``, by the
        gap between its best and second-best foreign proximity.
    ``"pair"``
        Only the partner cluster, so ``S(A u B) = 0`` and
        ``dS = w * (sum_A s(x, c_B) + sum_B s(x, c_A))``. For two singletons
        with ``w = 1/2`` this gives the threshold ``s / (s + D({i, j}))``.

    Both choices give ``dS >= 0``. The recorded threshold is
    ``dS / (dS + dD)``: the largest weight on the dispersion term at which
    the merger still pays off.
    """

    name = "bipartial_kmeans"
    orientation = "minimize"
    mirror_r = True

    def __init__(self, data: DataTable, metric="squared_euclidean", offset=None,
                 transform: ProximityTransform | None = None, outer_weight=0.5, labels=None,
                 outer_scope="partition"):
        _check_metric(metric)
        if outer_scope not in OUTER_SCOPES:
            raise ConfigurationError(f"outer_scope must be one of {OUTER_SCOPES}, got {outer_scope!r}")
        X = data.values
        n = X.shape[0]
        labels = canonical_labels(labels) if labels is not None else np.arange(n)
        if labels.size != n:
            raise InputError(f"{labels.size} labels for {n} objects")
        L = int(labels.max()) + 1
        super().__init__(np.bincount(labels, minlength=L))
        if offset is None:
            offset = resolve_offset(data, metric, transform or ProximityTransform())
        self.metric = metric
        self.offset = float(offset)
        self.w = float(outer_weight)
        self.outer_scope = outer_scope
        self._X = X
        self._slot = labels.copy()
        self._members = [np.flatnonzero(labels == a) for a in range(L)]
        self._C = centres(X, labels, L, metric)
        dist = point_centre_distances(X, self._C, metric)
        self._disp = np.array([dist[self._members[a], a].sum() for a in range(L)])
        # proximity of every object to every live centroid; retired columns are -inf
        self._s = np.maximum(0.0, self.offset - dist)
        onehot = np.zeros((n, L))
        onehot[np.arange(n), labels] = 1.0
        self._SM = onehot.T @ self._s
        self._qs0 = self.w * float(self._best_foreign()[0].sum()) if L > 1 else 0.0
        self._gain = np.zeros((L, L))
        for a in range(L):
            self._refresh_row(a, np.arange(a + 1, L))

    def _best_foreign(self):
        """Best and second-best foreign proximity per object, and the best slot."""
        s = self._s.copy()
        idx = np.arange(s.shape[0])
        s[idx, self._slot] = -np.inf
        f = np.argmax(s, axis=1)
        m1 = s[idx, f]
        s[idx, f] = -np.inf
        m2 = s.max(axis=1)
        m1 = np.where(np.isfinite(m1), m1, 0.0)
        m2 = np.where(np.isfinite(m2), m2, 0.0)
        return m1, m2, f

    def _union_disp(self, a, b):
        pts = self._X[np.concatenate([self._members[a], self._members[b]])]
        c = np.median(pts, axis=0) if self.metric == "manhattan" else pts.mean(axis=0)
        return float(point_centre_distances(pts, c[None, :], self.metric).sum())

    def _refresh_row(self, a, others):
        others = np.asarray(others, dtype=np.intp)
        if others.size == 0:
            return
        if self.metric == "squared_euclidean":
            na, nb = self.sizes[a], self.sizes[others]
            diff = self._C[others] - self._C[a]
            g = na * nb / (na + nb) * np.einsum("ij,ij->i", diff, diff)
        else:
            g = np.array([self._union_disp(a, b) for b in others]) - self._disp[a] - self._disp[others]
        self._gain[a, others] = g
        self._gain[others, a] = g

    def _similarity_gains(self):
        """``S(A) + S(B) - S(A u B)`` for all slot pairs (unweighted)."""
        if self.outer_scope == "pair":
            return self._SM + self._SM.T
        m1, m2, f = self._best_foreign()
        G = np.zeros((self.n_atoms, self.n_atoms))
        np.add.at(G, (self._slot, f), m1 - m2)
        return G + G.T

    def qs_initial(self):
        return self._qs0

    def qd_initial(self):
        return float(self._disp.sum())

    def deltas(self, a, b):
        return self.w * float(self._similarity_gains()[a, b]), float(self._gain[a, b])

    def pair_deltas(self, act):
        ix = np.ix_(act, act)
        return self.w * self._similarity_gains()[ix], self._gain[ix]

    def _merge(self, a, b):
        self._members[a] = np.concatenate([self._members[a], self._members[b]])
        self._members[b] = np.array([], dtype=np.intp)
        self._slot[self._members[a]] = a
        pts = self._X[self._members[a]]
        self._C[a] = np.median(pts, axis=0) if self.metric == "manhattan" else pts.mean(axis=0)
        self._disp[a] = float(point_centre_distances(pts, self._C[a][None, :], self.metric).sum())
        self._disp[b] = 0.0
        self._s[:, a] = np.maximum(0.0, self.offset - point_centre_distances(self._X, self._C[a][None, :], self.metric)[:, 0])
        self._s[:, b] = -np.inf
        self._SM[a, :] += self._SM[b, :]
        self._SM[b, :] = 0.0
        self._SM[:, b] = 0.0
        for c in range(self.n_atoms):
            if self.active[c] and c != b:
                self._SM[c, a] = self._s[self._members[c], a].sum() if c != a else 0.0

    def on_merge(self, a, b):
        a, b = min(a, b), max(a, b)
        super().on_merge(a, b)
        others = np.flatnonzero(self.active)
        self._refresh_row(a, others[others != a])


def bipartial_kmeans_merge_threshold(objective: KMeansMergeObjective, a: int, b: int) -> float:
    """``w*dS / (w*dS + dD)`` for merging slots ``a`` and ``b``; lies in [0, 1]."""
    dS, dD = objective.deltas(a, b)
    if dS < 0 or dD < 0:
        from .exceptions import ObjectiveContractError
        raise ObjectiveContractError(f"negative delta (dS={dS!r}, dD={dD!r})", left=a, right=b,
                                     delta_qs=dS, delta_qd=dD)
    return dS / (dS + dD) if dS + dD > 0 else 1.0


def run_bipartial_kmeans(data: DataTable, transform: ProximityTransform | None = None,
                         metric: str = "squared_euclidean", outer_weight: float = 0.5,
                         labels=None, outer_scope: str = "partition") -> MergeHistory:
    """Full merger hierarchy under the k-means bi-partial rule.

    Starts from singletons (or from the clusters in ``labels``) and always
    merges the pair with the largest threshold. The thresholds are
    expected to decrease; increases are reported by
    :func:`bipartial.engine.envelope_report` as signs of nested structure.
    """
    obj = KMeansMergeObjective(data, metric, transform=transform, outer_weight=outer_weight,
                               labels=labels, outer_scope=outer_scope)
    init = canonical_labels(labels) if labels is not None else None
    return run_bipartial(obj, initial_labels=init)


def select_bipartial_kmeans(data: DataTable, history: MergeHistory, metric="squared_euclidean",
                            offset=0.0, outer_weight=0.5):
    """Stop rule for a k-means merger history.

    The crossing of 1/2 is used when the thresholds never increase;
    otherwise the level with the smallest exact ``Q_D^S`` wins. Returns
    ``(partition, decision, curve)`` with ``curve`` from :func:`level_curve`.
    """
    curve = level_curve(data, history, metric, offset, outer_weight)
    partition, decision = select_partition(history, curve[:, 3])
    return partition, decision, curve


def level_curve(data: DataTable, history: MergeHistory, metric="squared_euclidean",
                offset=0.0, outer_weight=0.5) -> np.ndarray:
    """Exact ``(p, Q_D, Q^S, Q_D^S)`` rows for every level of a history."""
    rows = []
    for t in range(len(history.records) + 1):
        P = partition_at_step(history, t)
        qd, qs = evaluate_partition(data, P.labels, metric, offset, outer_weight)
        rows.append((P.p, qd, qs, qd + qs))
    return np.array(rows)


# ---------------------------------------------------------------------------
# Sweep over p and the two-stage hybrid


@dataclass
class SweepResult:
    p: np.ndarray
    qds: np.ndarray
    qd: np.ndarray
    qs: np.ndarray
    models: list = field(default_factory=list, repr=False)

    @property
    def argmin_p(self) -> int:
        return int(self.p[int(np.argmin(self.qds))])

    def rows(self):
        best = self.argmin_p
        for k in range(self.p.size):
            yield int(self.p[k]), float(self.qds[k]), float(self.qd[k]), float(self.qs[k]), int(self.p[k]) == best


def kmeans_sweep(data: DataTable, p_values, restarts: int = 20, seed: int = 0,
                 metric: str = "squared_euclidean", transform: ProximityTransform | None = None,
                 outer_weight: float = 0.5, seeding: str = "farthest_point",
                 n_jobs: int = 1) -> SweepResult:
    """Classical k-means for each ``p`` scored by ``Q_D^S``.

    Each ``p`` gets its own seed stream derived from ``(seed, p)``.
    """
    offset = resolve_offset(data, metric, transform or ProximityTransform())
    ps, qds, qd, qs, models = [], [], [], [], []
    for p in p_values:
        model = kmeans_classic(data, int(p), seeding, restarts, metric,
                               seed=int(np.random.SeedSequence([seed, int(p)]).generate_state(1)[0]),
                               n_jobs=n_jobs)
        a, b, c = bipartial_kmeans_objective(data, model, offset=offset, outer_weight=outer_weight)
        ps.append(int(p))
        qd.append(a)
        qs.append(b)
        qds.append(c)
        models.append(model)
    return SweepResult(np.array(ps), np.array(qds), np.array(qd), np.array(qs), models)


@dataclass
class HybridResult:
    partition: Partition
    history: MergeHistory
    stage1: CentroidModel
    decision: StopDecision | None
    curve: np.ndarray | None = None


def default_first_stage_p(n: int) -> int:
    return max(1, math.ceil(math.sqrt(n)))


def hybrid_two_stage(data: DataTable, first_stage_p: int | None = None,
                     objective: str = "bipartial_kmeans", metric: str = "squared_euclidean",
                     transform: ProximityTransform | None = None, outer_weight: float = 0.5,
                     restarts: int = 10, seed: int = 0, seeding: str = "farthest_point",
                     facility_cost="centroid", facility_scale=1.0, n_jobs: int = 1,
                     outer_scope: str = "partition") -> HybridResult:
    """k-means into ``first_stage_p`` groups, then bi-partial mergers on the groups.

    ``objective`` is ``"bipartial_kmeans"`` or any engine objective name
    (``additive``, ``minmax``, ``avg_additive``, ``facility``); the engine
    objectives work on the object-level distance matrix under ``metric``.
    """
    n = data.n_objects
    p1 = default_first_stage_p(n) if first_stage_p is None else int(first_stage_p)
    if not 1 <= p1 <= n:
        raise InputError(f"first_stage_p={p1} must lie in 1..{n}")
    transform = transform or ProximityTransform()
    stage1 = kmeans_classic(data, p1, seeding, restarts, metric, seed=seed, n_jobs=n_jobs)
    labels = stage1.labels
    offset = resolve_offset(data, metric, transform)
    if p1 == 1:
        history = MergeHistory(records=(), leaves=1, initial_labels=labels, method=objective)
        return HybridResult(stage1.partition, history, stage1, None)
    if objective == "bipartial_kmeans":
        obj = KMeansMergeObjective(data, metric, offset=offset, outer_weight=outer_weight,
                                   labels=labels, outer_scope=outer_scope)
    else:
        store = build_store(data, metric, transform)
        obj = make_objective(objective, store, data, labels, facility_cost, facility_scale)
    history = run_bipartial(obj, initial_labels=labels)
    curve = level_curve(data, history, metric, offset, outer_weight)
    scores = curve[:, 3] if objective == "bipartial_kmeans" else None
    partition, decision = select_partition(history, scores)
    return HybridResult(partition, history, stage1, decision, curve)
