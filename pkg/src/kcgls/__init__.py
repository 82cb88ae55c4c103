"""Constrained GLS evaluation of measurement comparisons.

Best linear unbiased estimates of artefact values and participant effects
under an identifiability constraint, with the covariance adjustment for
participant-specific systematic random effects.
"""

__version__ = "0.1.0"

from .adjustment import (
    AdjustmentBlocks,
    covariance_adjustment,
    theorem2_blocks,
    white_diagonal_variance,
)
from .consistency import ConsistencyReport, consistency_report, global_chisq, participant_zscores
from .design import DesignMatrix, LinkageResult, build_design, check_linkage, embed_constraint
from .estimator import (
    GlsSolution,
    ProjectorF,
    build_projector,
    solve_augmented,
    solve_by_projection,
    solve_full,
    solve_reduced,
)
from .model import (
    ComparisonData,
    Constraint,
    CovarianceModel,
    MeasurementRecord,
    validate_comparison,
)
from .simulate import (
    MonteCarloReport,
    SimulationConfig,
    generate_comparison,
    monte_carlo_cov_check,
    oracle_constrained_gls,
    random_comparison,
)

__all__ = [
    "AdjustmentBlocks",
    "ComparisonData",
    "ConsistencyReport",
    "Constraint",
    "CovarianceModel",
    "DesignMatrix",
    "GlsSolution",
    "LinkageResult",
    "MeasurementRecord",
    "MonteCarloReport",
    "ProjectorF",
    "SimulationConfig",
    "build_design",
    "build_projector",
    "check_linkage",
    "consistency_report",
    "covariance_adjustment",
    "embed_constraint",
    "generate_comparison",
    "global_chisq",
    "monte_carlo_cov_check",
    "oracle_constrained_gls",
    "participant_zscores",
    "random_comparison",
    "solve_augmented",
    "solve_by_projection",
    "solve_full",
    "solve_reduced",
    "theorem2_blocks",
    "validate_comparison",
    "white_diagonal_variance",
]
