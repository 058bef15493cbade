"""2PL IRT ranking for sparse benchmark evaluation matrices."""

from .matrix import (
    MaskDiagnostics,
    MatrixError,
    ResponseMatrix,
    coverage,
    diagnose_mask,
    difficulty_gap,
    estimate_difficulty_heterogeneity,
    load_matrix_csv,
    save_matrix_csv,
)
from .model import (
    AbilityVector,
    Fit2PL,
    FitError,
    FitSettings,
    ItemParameterSet,
    ModelError,
    NonIdentifiedError,
    PriorConfig,
    fit,
    gradient,
    log_likelihood,
    predict_prob,
    rank_by_ability,
    standard_errors,
)
from .stats import (
    InteractionFit,
    PowerLawFit,
    Ranking,
    RankingError,
    ols_interaction,
    power_law_fit,
    rank_descending,
    rank_displacement,
    simple_average,
    spearman_rho,
)

__version__ = "0.1.0"
