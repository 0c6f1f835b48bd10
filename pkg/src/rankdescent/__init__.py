"""Approximate K-nearest-neighbor digraphs from triplet comparisons.

The only similarity primitive is a per-anchor comparator, so similarity
does not need to be symmetric or satisfy the triangle inequality.  The
builder runs snapshot-parallel friend-set update rounds and stops when the
sampled friend clustering rate stalls; an exact brute-force oracle, recall
measurement, and a metrizability checker round out the toolkit.
"""

from .core import (
    BoundedNeighborSet,
    ConfigError,
    Dataset,
    ItemId,
    RankingSystem,
    ScoredRankingSystem,
    build_cofriends,
    verify_total_order,
)
from .descent import (
    DescentConfig,
    KnnState,
    RoundStats,
    candidate_set,
    derive_rng,
    friend_clustering_rate,
    init_random_kout,
    propose_new_friend_set,
    round_budget,
    run,
    run_round,
    run_to_fixed_point,
)
from .similarity import (
    EuclideanRankingSystem,
    KlRankingSystem,
    MetricRankingSystem,
    euclidean_ranking,
    kl_divergence,
    load_points_csv,
    load_points_f64,
    sample_simplex_uniform,
    save_points_csv,
    save_points_f64,
    validate_simplex_points,
)
from .evaluation import (
    DIGRAPH_GUARD,
    ORACLE_GUARD,
    ExactKnnGraph,
    NonMetricWitness,
    RankingDigraph,
    build_ranking_digraph,
    exact_knn,
    find_cycle_witness,
    format_cycle,
    recall,
    search_non_metric_witness,
    to_dot,
    uniform_recall_sample,
)
from .bench import (
    ExperimentReport,
    ExperimentSpec,
    OracleGuardError,
    dimension_sweep,
    emit_report,
    emit_sweep,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "BoundedNeighborSet",
    "ConfigError",
    "Dataset",
    "DescentConfig",
    "DIGRAPH_GUARD",
    "EuclideanRankingSystem",
    "ExactKnnGraph",
    "ExperimentReport",
    "ExperimentSpec",
    "ItemId",
    "KlRankingSystem",
    "KnnState",
    "MetricRankingSystem",
    "NonMetricWitness",
    "ORACLE_GUARD",
    "OracleGuardError",
    "RankingDigraph",
    "RankingSystem",
    "RoundStats",
    "ScoredRankingSystem",
    "build_cofriends",
    "build_ranking_digraph",
    "candidate_set",
    "derive_rng",
    "dimension_sweep",
    "emit_report",
    "emit_sweep",
    "euclidean_ranking",
    "exact_knn",
    "find_cycle_witness",
    "format_cycle",
    "friend_clustering_rate",
    "init_random_kout",
    "kl_divergence",
    "load_points_csv",
    "load_points_f64",
    "propose_new_friend_set",
    "recall",
    "round_budget",
    "run",
    "run_experiment",
    "run_round",
    "run_to_fixed_point",
    "sample_simplex_uniform",
    "save_points_csv",
    "save_points_f64",
    "search_non_metric_witness",
    "to_dot",
    "uniform_recall_sample",
    "validate_simplex_points",
    "verify_total_order",
]
