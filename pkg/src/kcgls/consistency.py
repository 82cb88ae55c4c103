"""Consistency diagnostics for a solved comparison.

Per-participant standardized effects (estimate over its total standard
uncertainty) and a global residual chi-square against the declared
random-error covariance.  Neither statistic carries a distributional
claim; interpretation is the analyst's.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import DesignMatrix
from .estimator import GlsSolution
from .linalg import spd_solve
from .model import ComparisonData, CovarianceModel

#: Variances below this (relative to the largest participant variance and
#: an absolute floor) are treated as exactly zero: the effect is pinned by
#: the constraint and its z-score is not applicable.
ZERO_VARIANCE_TOL = 1e-14


@dataclass(frozen=True)
class ParticipantEffect:
    """One participant's estimated effect and its standardized value.

    ``zscore`` is None when the constraint pins the effect (zero
    variance), e.g. for a reference laboratory with weight one.
    """

    participant_id: str
    effect: float
    uncertainty: float
    zscore: float | None


@dataclass(frozen=True)
class ConsistencyReport:
    per_participant: tuple[ParticipantEffect, ...]
    chi_square: float
    dof: int
    flagged: tuple[str, ...]


def participant_zscores(
    sol: GlsSolution,
    z_crit: float = 2.0,
    include_adjustment: bool = True,
) -> tuple[tuple[ParticipantEffect, ...], tuple[str, ...]]:
    """Standardize the participant effects by their standard uncertainties.

    By default the variance includes the systematic-effect adjustment;
    with ``include_adjustment=False`` only the statistical term is used,
    which answers the alternative question of total systematic error.
    Returns the per-participant effects and the ids with |z| > z_crit.
    """
    cov = sol.cov if include_adjustment else sol.cov_statistical
    diag = np.diag(cov)
    scale = max(float(np.max(diag)), 1.0)

    effects = []
    flagged = []
    for idx, (kind, name) in enumerate(sol.labels):
        if kind != "participant":
            continue
        var = float(diag[idx])
        if var <= ZERO_VARIANCE_TOL * scale:
            effects.append(ParticipantEffect(name, float(sol.b[idx]), 0.0, None))
            continue
        u = float(np.sqrt(var))
        z = float(sol.b[idx]) / u
        effects.append(ParticipantEffect(name, float(sol.b[idx]), u, z))
        if abs(z) > z_crit:
            flagged.append(name)
    return tuple(effects), tuple(flagged)


def global_chisq(
    data: ComparisonData,
    dm: DesignMatrix,
    sol: GlsSolution,
    cov_model: CovarianceModel,
) -> tuple[float, int]:
    """Residual chi-square r' V0^-1 r and its degrees of freedom.

    Uses V0 only: the systematic-effect term lives in the column space of
    X and cannot be seen from residuals.  dof = m - (n - 1) since the
    constraint restores the one degree of freedom lost to the design's
    rank deficiency.
    """
    residuals = sol.residuals
    if residuals is None:
        residuals = data.observation_vector() - dm.x @ sol.b
    chi2 = float(residuals @ spd_solve(cov_model.v0, residuals))
    dof = dm.m - (dm.n - 1)
    return max(chi2, 0.0), dof


def consistency_report(
    data: ComparisonData,
    dm: DesignMatrix,
    sol: GlsSolution,
    cov_model: CovarianceModel,
    z_crit: float = 2.0,
    include_adjustment: bool = True,
) -> ConsistencyReport:
    """Assemble the full consistency report for a solved comparison."""
    effects, flagged = participant_zscores(sol, z_crit, include_adjustment)
    chi2, dof = global_chisq(data, dm, sol, cov_model)
    return ConsistencyReport(
        per_participant=effects, chi_square=chi2, dof=dof, flagged=flagged
    )
