"""Clustering with bi-partial objective functions.

The package provides a merger engine driven by the bi-partial switch
threshold, several objective families, classical Lance-Williams linkage,
a k-means variant scored by the same kind of objective, an exhaustive
oracle for small instances, and a command-line tool.
"""

from .core import (
    DataTable,
    DissimilarityStore,
    MergeHistory,
    MergeRecord,
    ObjectiveProfile,
    Partition,
    ProximityTransform,
    apply_transform,
    build_store,
    compute_distances,
    partition_at_step,
    read_data_csv,
    read_matrix_csv,
)
from .engine import (
    BipartialObjective,
    EnvelopeReport,
    StopDecision,
    envelope_report,
    merge_threshold,
    run_bipartial,
    select_partition,
)
from .estimators import (
    BipartialAgglomerative,
    BipartialKMeans,
    HybridBipartialClustering,
    LanceWilliamsClustering,
)
from .exceptions import (
    BipartialError,
    ConfigurationError,
    DegeneratePairError,
    IncomparablePartitionsError,
    InputError,
    InvariantViolation,
    ObjectiveContractError,
)
from .kmeans import (
    CentroidModel,
    KMeansMergeObjective,
    bipartial_kmeans_merge_threshold,
    bipartial_kmeans_objective,
    hybrid_two_stage,
    kmeans_classic,
    kmeans_sweep,
    run_bipartial_kmeans,
)
from .linkage import SCHEMES, LWCoefficients, lw_update, run_linkage
from .objectives import (
    AdditiveObjective,
    AvgAdditiveObjective,
    FacilityObjective,
    MinMaxObjective,
    additive_deltas,
    facility_merge_gain,
    make_objective,
    run_facility,
)
from .oracle import ObjectiveSpec, enumerate_partitions, oracle_best, oracle_switch_point

__version__ = "0.1.0"
