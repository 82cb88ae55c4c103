"""Domain types for measurement comparisons and their validation.

A comparison consists of measurements Y indexed by (participant, artefact,
repeat), a random-error covariance V0 over the measurements, a
systematic-effect covariance over the participants, and an identifiability
constraint on the participant effects.  All types are immutable after
construction; ``validate_comparison`` checks every invariant before any
numerics run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

#: Relative tolerance for positive-(semi)definiteness checks.  Supplied
#: covariances are often rounded to a few digits, so small negative
#: eigenvalues are tolerated on the PSD side.
EPS_PD = 1e-12

#: Absolute tolerance on the sum of constraint weights.
WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class MeasurementRecord:
    """One measurement of one artefact by one participant.

    Covariate values are stored as deviations from the reference value
    (e.g. a temperature reading minus the nominal temperature), not as
    raw values.
    """

    participant_id: str
    artefact_id: str
    repeat_index: int
    value: float
    covariates: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ComparisonData:
    """The full set of measurements in a comparison.

    The order of ``records`` is canonical: it defines the row order of the
    design matrix, the observation vector and V0.
    """

    records: tuple[MeasurementRecord, ...]
    participants: tuple[str, ...]
    artefacts: tuple[str, ...]
    covariate_names: tuple[str, ...] = ()

    def __init__(self, records, participants, artefacts, covariate_names=()):
        object.__setattr__(self, "records", tuple(records))
        object.__setattr__(self, "participants", tuple(participants))
        object.__setattr__(self, "artefacts", tuple(artefacts))
        object.__setattr__(self, "covariate_names", tuple(covariate_names))

    @property
    def m(self) -> int:
        """Number of measurements."""
        return len(self.records)

    @property
    def n_participants(self) -> int:
        return len(self.participants)

    @property
    def n_artefacts(self) -> int:
        return len(self.artefacts)

    @property
    def n_covariates(self) -> int:
        return len(self.covariate_names)

    def observation_vector(self) -> np.ndarray:
        """Measured values in record order."""
        return np.array([r.value for r in self.records], dtype=float)


@dataclass(frozen=True)
class CovarianceModel:
    """Random-error covariance V0 and systematic-effect covariance.

    ``v0`` is m-by-m over the measurements in record order; ``a_tilde`` is
    L-by-L over the participants in roster order.
    """

    v0: np.ndarray
    a_tilde: np.ndarray

    def __init__(self, v0, a_tilde):
        object.__setattr__(self, "v0", np.asarray(v0, dtype=float))
        object.__setattr__(self, "a_tilde", np.asarray(a_tilde, dtype=float))

    def a_embedded(self, n_artefacts: int, n_covariates: int = 0) -> np.ndarray:
        """Embed the participant covariance into full parameter space.

        Returns the n-by-n matrix (n = J + L + K) that is zero except for
        the L-by-L participant block, which equals ``a_tilde``.
        """
        ell = self.a_tilde.shape[0]
        n = n_artefacts + ell + n_covariates
        a = np.zeros((n, n))
        a[n_artefacts:n_artefacts + ell, n_artefacts:n_artefacts + ell] = self.a_tilde
        return a


@dataclass(frozen=True)
class Constraint:
    """Identifiability constraint: weighted participant effects sum to d."""

    weights: Mapping[str, float]
    d: float = 0.0

    def __init__(self, weights, d=0.0):
        object.__setattr__(self, "weights", dict(weights))
        object.__setattr__(self, "d", float(d))


def _symmetry_violation(mat: np.ndarray) -> float:
    return float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0


def validate_comparison(
    data: ComparisonData,
    cov: CovarianceModel,
    cons: Constraint,
    eps_pd: float = EPS_PD,
) -> list[str]:
    """Check every model invariant; return the list of violations.

    An empty list means the inputs are valid.  Violations are data, not
    exceptions: the function never raises on bad inputs.
    """
    violations: list[str] = []

    m = data.m
    ell = data.n_participants
    j = data.n_artefacts

    if m < 1:
        violations.append("at least one measurement is required")
    if ell < 2:
        violations.append("at least two participants are required")
    if j < 1:
        violations.append("at least one artefact is required")

    participants = set(data.participants)
    artefacts = set(data.artefacts)
    covariates = set(data.covariate_names)
    if len(participants) != ell:
        violations.append("participant roster contains duplicates")
    if len(artefacts) != j:
        violations.append("artefact roster contains duplicates")

    seen = set()
    for rec in data.records:
        key = (rec.participant_id, rec.artefact_id, rec.repeat_index)
        if key in seen:
            violations.append(
                f"duplicate record {key}: (participant, artefact, repeat) must be unique"
            )
        seen.add(key)
        if rec.participant_id not in participants:
            violations.append(f"record references unknown participant {rec.participant_id!r}")
        if rec.artefact_id not in artefacts:
            violations.append(f"record references unknown artefact {rec.artefact_id!r}")
        if rec.repeat_index < 1:
            violations.append(f"repeat index must be >= 1, got {rec.repeat_index}")
        for name in rec.covariates:
            if name not in covariates:
                violations.append(f"record uses unrostered covariate {name!r}")

    # V0: m x m, symmetric, positive definite.
    if cov.v0.shape != (m, m):
        violations.append(f"V0 must be {m}x{m}, got {cov.v0.shape}")
    else:
        if _symmetry_violation(cov.v0) > 0:
            violations.append("V0 must be symmetric")
        else:
            eig = np.linalg.eigvalsh(cov.v0)
            if eig[0] <= eps_pd * max(eig[-1], 0.0):
                violations.append("V0 not positive definite")

    # A~: L x L, symmetric, positive semidefinite.
    if cov.a_tilde.shape != (ell, ell):
        violations.append(f"a_tilde must be {ell}x{ell}, got {cov.a_tilde.shape}")
    else:
        if _symmetry_violation(cov.a_tilde) > 0:
            violations.append("a_tilde must be symmetric")
        else:
            eig = np.linalg.eigvalsh(cov.a_tilde)
            if eig[0] < -eps_pd * max(1.0, float(eig[-1])):
                violations.append("a_tilde not positive semidefinite")

    # Constraint weights.
    if set(cons.weights) != participants:
        violations.append("constraint weights must cover exactly the participant roster")
    neg = [p for p, w in cons.weights.items() if w < 0]
    if neg:
        violations.append(f"constraint weights must be non-negative: {sorted(neg)}")
    total = sum(cons.weights.values())
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        violations.append("weights must sum to 1")
    if not any(w > 0 for w in cons.weights.values()):
        violations.append("at least one constraint weight must be positive")

    return violations
