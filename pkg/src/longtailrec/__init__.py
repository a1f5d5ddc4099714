"""Long-tail-aware recommendation engine.

Builds per-user recommendation lists that trade off predicted rating,
long-tail exposure, an age/activity-conditioned long-tail quota, and genre
fit, via a memetic optimizer seeded by decaying injection of long-tail items.
Includes user- and item-based collaborative filtering baselines, a
nearest-centroid age-group predictor over genre rating profiles, evaluation
metrics (precision, novelty, aggregate diversity), and an experiment harness
with a CLI.
"""

__version__ = "0.1.0"

from .age_model import (
    AgeClassifier,
    GenreFeatureVector,
    featurize_user,
    featurize_users,
    predict_age_group,
    train_age_classifier,
)
from .cf import (
    ColdUserError,
    ItemBasedCF,
    RatingMatrix,
    UserBasedCF,
    predict_rating,
    top_n_item_based,
    top_n_user_based,
    user_similarity,
)
from .dataset import (
    AGE_GROUPS,
    GENRES,
    Dataset,
    Item,
    ParseError,
    PopularityPartition,
    Rating,
    SplitDataset,
    User,
    parse_movielens,
    popularity_partition,
    temporal_split,
    warm_user_ids,
)
from .harness import (
    METHODS,
    ExperimentConfig,
    ExperimentOutcome,
    RoundOutcome,
    emit_figure_data,
    multi_round_serve,
    prepare_experiment,
    run_experiment,
)
from .memetic import (
    InjectionParams,
    MemeticConfig,
    OptimizationResult,
    ServingHistory,
    crossover,
    initialize_population,
    inject_items,
    injection_probability,
    local_search,
    mutate,
    optimize_user,
    record_served,
)
from .metrics import (
    EvalReport,
    aggregate_diversity,
    build_report,
    novelty,
    precision,
)
from .objectives import (
    CandidateList,
    ObjectiveContext,
    ObjectiveVector,
    ObjectiveWeights,
    PopulationStats,
    obj_accuracy,
    obj_dynamic_quota,
    obj_genre_distance,
    obj_long_tail_participation,
    scalarize,
)
from .profiles import (
    AgeGenreProfile,
    DynamicsCurve,
    build_age_genre_profiles,
    build_dynamics_curves,
    target_long_tail_count,
)
from .synth import SynthConfig, generate, write_movielens

__all__ = [
    "AGE_GROUPS",
    "AgeClassifier",
    "AgeGenreProfile",
    "CandidateList",
    "ColdUserError",
    "Dataset",
    "DynamicsCurve",
    "EvalReport",
    "ExperimentConfig",
    "ExperimentOutcome",
    "GENRES",
    "GenreFeatureVector",
    "InjectionParams",
    "Item",
    "ItemBasedCF",
    "METHODS",
    "MemeticConfig",
    "ObjectiveContext",
    "ObjectiveVector",
    "ObjectiveWeights",
    "OptimizationResult",
    "ParseError",
    "PopularityPartition",
    "PopulationStats",
    "Rating",
    "RatingMatrix",
    "RoundOutcome",
    "ServingHistory",
    "SplitDataset",
    "SynthConfig",
    "User",
    "UserBasedCF",
    "aggregate_diversity",
    "build_age_genre_profiles",
    "build_dynamics_curves",
    "build_report",
    "crossover",
    "emit_figure_data",
    "featurize_user",
    "featurize_users",
    "generate",
    "initialize_population",
    "inject_items",
    "injection_probability",
    "local_search",
    "multi_round_serve",
    "mutate",
    "novelty",
    "obj_accuracy",
    "obj_dynamic_quota",
    "obj_genre_distance",
    "obj_long_tail_participation",
    "optimize_user",
    "parse_movielens",
    "popularity_partition",
    "precision",
    "predict_age_group",
    "predict_rating",
    "prepare_experiment",
    "record_served",
    "run_experiment",
    "scalarize",
    "target_long_tail_count",
    "temporal_split",
    "top_n_item_based",
    "top_n_user_based",
    "train_age_classifier",
    "user_similarity",
    "warm_user_ids",
    "write_movielens",
]
