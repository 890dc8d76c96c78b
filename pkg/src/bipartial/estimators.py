"""scikit-learn style wrappers around the clustering procedures.

The estimators follow the usual conventions: hyper-parameters are stored
unchanged by ``__init__``, ``fit`` validates its input and sets trailing
underscore attributes, and ``fit_predict`` comes from ``ClusterMixin``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import (
    DataTable,
    DissimilarityStore,
    Partition,
    ProximityTransform,
    apply_transform,
    build_store,
    partition_at_step,
)
from .engine import envelope_report, run_bipartial, select_partition
from .exceptions import ConfigurationError, InputError
from .kmeans import (
    bipartial_kmeans_objective,
    hybrid_two_stage,
    kmeans_classic,
    kmeans_sweep,
    point_centre_distances,
    resolve_offset,
)
from .linkage import run_linkage
from .objectives import make_objective, run_facility


def make_transform(kind="average_preserving", c=None, ratio=None) -> ProximityTransform:
    return ProximityTransform(kind, c=c, ratio=ratio)


def _as_table(X) -> DataTable:
    return DataTable(check_array(X, dtype=np.float64, ensure_all_finite=True))


def _as_store(X, metric, transform) -> tuple[DissimilarityStore, DataTable | None]:
    """Distance store from features, or from a square matrix when ``metric='precomputed'``."""
    if metric == "precomputed":
        D = check_array(X, dtype=np.float64, ensure_all_finite=True)
        if D.shape[0] != D.shape[1]:
            raise InputError(f"precomputed distances must be square, got {D.shape}")
        return apply_transform(DissimilarityStore(D), transform), None
    data = _as_table(X)
    return build_store(data, metric, transform), data


class BipartialAgglomerative(ClusterMixin, BaseEstimator):
    """Hierarchical merging driven by a bi-partial objective.

    Builds the complete hierarchy and reports the level chosen by the
    ``r = 1/2`` stop rule (or, for ``objective='facility'``, the greedy
    stopping point).

    Parameters
    ----------
    objective : {'additive', 'minmax', 'avg_additive', 'facility'}
    metric : {'euclidean', 'squared_euclidean', 'manhattan', 'precomputed'}
    proximity : {'average_preserving', 'max_complement', 'affine'}
        How proximities are derived from distances.
    proximity_c, proximity_ratio : float, optional
        Offset of the affine transform, given directly or as a multiple of
        the largest distance.
    facility_cost : {'centroid', 'pairsum'}
    facility_scale : float

    Attributes
    ----------
    labels_ : ndarray of shape (n_samples,)
    history_ : MergeHistory
    decision_ : StopDecision or None
    envelope_ : EnvelopeReport
    n_clusters_ : int
    """

    def __init__(self, objective="additive", metric="euclidean", proximity="average_preserving",
                 proximity_c=None, proximity_ratio=None, facility_cost="centroid", facility_scale=1.0):
        self.objective = objective
        self.metric = metric
        self.proximity = proximity
        self.proximity_c = proximity_c
        self.proximity_ratio = proximity_ratio
        self.facility_cost = facility_cost
        self.facility_scale = facility_scale

    def fit(self, X, y=None):
        tr = make_transform(self.proximity, self.proximity_c, self.proximity_ratio)
        store, data = _as_store(X, self.metric, tr)
        if store.n < 2:
            raise InputError("need at least two samples")
        obj = make_objective(self.objective, store, data, None, self.facility_cost, self.facility_scale)
        if self.objective == "facility":
            partition, self.history_ = run_facility(obj)
            self.decision_ = None
        else:
            self.history_ = run_bipartial(obj)
            partition, self.decision_ = select_partition(self.history_)
        self.store_ = store
        self.envelope_ = envelope_report(self.history_)
        self.labels_ = partition.labels.copy()
        self.n_clusters_ = partition.p
        return self

    def labels_at(self, n_clusters: int) -> np.ndarray:
        """Labels of the hierarchy level with ``n_clusters`` clusters."""
        check_is_fitted(self, "history_")
        return partition_at_step(self.history_, self.history_.leaves - n_clusters).labels.copy()


class LanceWilliamsClustering(ClusterMixin, BaseEstimator):
    """Classical agglomerative clustering, cut at ``n_clusters``.

    Parameters
    ----------
    scheme : {'single', 'complete', 'upgma', 'wpgma', 'centroid_upgmc', 'median_wpgmc'}
    n_clusters : int
    metric : {'euclidean', 'squared_euclidean', 'manhattan', 'precomputed'}
    """

    def __init__(self, scheme="upgma", n_clusters=2, metric="euclidean"):
        self.scheme = scheme
        self.n_clusters = n_clusters
        self.metric = metric

    def fit(self, X, y=None):
        if self.metric == "precomputed":
            store = DissimilarityStore(check_array(X, dtype=np.float64))
        else:
            from .core import compute_distances

            store = compute_distances(_as_table(X), self.metric)
        if not 1 <= self.n_clusters <= store.n:
            raise ConfigurationError(f"n_clusters must lie in 1..{store.n}")
        self.history_ = run_linkage(store, self.scheme)
        self.labels_ = partition_at_step(self.history_, store.n - self.n_clusters).labels.copy()
        return self


class BipartialKMeans(TransformerMixin, ClusterMixin, BaseEstimator):
    """k-means scored by the bi-partial objective ``Q_D^S``.

    With ``n_clusters=None`` every ``p`` in ``p_range`` (inclusive) is tried
    and the one with the smallest ``Q_D^S`` is kept.

    Parameters
    ----------
    n_clusters : int or None
    p_range : tuple of int
    metric : {'squared_euclidean', 'manhattan'}
    proximity, proximity_c, proximity_ratio
        Proximity transform for object-to-centroid similarities.
    outer_weight : float
        Weight of the outer-similarity term.
    restarts : int
    seeding : {'farthest_point', 'random'}
    random_state : int
    n_jobs : int
        Threads used for restarts; does not affect the result.

    Attributes
    ----------
    cluster_centers_, labels_, n_clusters_, objective_ (Q_D, Q^S, Q_D^S),
    sweep_ (when the number of clusters was searched)
    """

    def __init__(self, n_clusters=None, p_range=(1, 10), metric="squared_euclidean",
                 proximity="average_preserving", proximity_c=None, proximity_ratio=None,
                 outer_weight=0.5, restarts=20, seeding="farthest_point", random_state=0, n_jobs=1):
        self.n_clusters = n_clusters
        self.p_range = p_range
        self.metric = metric
        self.proximity = proximity
        self.proximity_c = proximity_c
        self.proximity_ratio = proximity_ratio
        self.outer_weight = outer_weight
        self.restarts = restarts
        self.seeding = seeding
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        data = _as_table(X)
        tr = make_transform(self.proximity, self.proximity_c, self.proximity_ratio)
        seed = 0 if self.random_state is None else int(self.random_state)
        if self.n_clusters is None:
            lo, hi = self.p_range
            hi = min(int(hi), data.n_objects)
            self.sweep_ = kmeans_sweep(data, range(int(lo), hi + 1), self.restarts, seed, self.metric,
                                       tr, self.outer_weight, self.seeding, self.n_jobs)
            k = int(np.argmin(self.sweep_.qds))
            model = self.sweep_.models[k]
        else:
            self.sweep_ = None
            model = kmeans_classic(data, int(self.n_clusters), self.seeding, self.restarts,
                                   self.metric, seed=seed, n_jobs=self.n_jobs)
        offset = resolve_offset(data, self.metric, tr)
        self.model_ = model
        self.objective_ = bipartial_kmeans_objective(data, model, offset=offset,
                                                     outer_weight=self.outer_weight)
        self.cluster_centers_ = model.centroids.copy()
        self.labels_ = model.labels.copy()
        self.n_clusters_ = model.p
        self.n_features_in_ = data.n_features
        return self

    def transform(self, X):
        """Distances (in the fitted metric) from each sample to each centroid."""
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=np.float64)
        return point_centre_distances(X, self.cluster_centers_, self.metric)

    def predict(self, X):
        return np.argmin(self.transform(X), axis=1)


class HybridBipartialClustering(ClusterMixin, BaseEstimator):
    """k-means into many small groups, then bi-partial merging of the groups.

    Parameters
    ----------
    first_stage_p : int or None
        Number of first-stage groups; ``None`` means ``ceil(sqrt(n))``.
    objective : {'bipartial_kmeans', 'additive', 'minmax', 'avg_additive', 'facility'}
    metric : {'squared_euclidean', 'manhattan'}
    outer_weight, restarts, seeding, random_state, n_jobs
        As for :class:`BipartialKMeans`.

    Attributes
    ----------
    labels_, history_, decision_, stage1_, curve_, n_clusters_
    """

    def __init__(self, first_stage_p=None, objective="bipartial_kmeans", metric="squared_euclidean",
                 proximity="average_preserving", proximity_c=None, proximity_ratio=None,
                 outer_weight=0.5, restarts=10, seeding="farthest_point", random_state=0,
                 facility_cost="centroid", facility_scale=1.0, n_jobs=1):
        self.first_stage_p = first_stage_p
        self.objective = objective
        self.metric = metric
        self.proximity = proximity
        self.proximity_c = proximity_c
        self.proximity_ratio = proximity_ratio
        self.outer_weight = outer_weight
        self.restarts = restarts
        self.seeding = seeding
        self.random_state = random_state
        self.facility_cost = facility_cost
        self.facility_scale = facility_scale
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        data = _as_table(X)
        res = hybrid_two_stage(
            data, self.first_stage_p, self.objective, self.metric,
            make_transform(self.proximity, self.proximity_c, self.proximity_ratio),
            self.outer_weight, self.restarts, 0 if self.random_state is None else int(self.random_state),
            self.seeding, self.facility_cost, self.facility_scale, self.n_jobs,
        )
        self.result_ = res
        self.history_ = res.history
        self.decision_ = res.decision
        self.stage1_ = res.stage1
        self.curve_ = res.curve
        self.labels_ = res.partition.labels.copy()
        self.n_clusters_ = res.partition.p
        return self


__all__ = [
    "BipartialAgglomerative",
    "LanceWilliamsClustering",
    "BipartialKMeans",
    "HybridBipartialClustering",
    "make_transform",
    "Partition",
]
