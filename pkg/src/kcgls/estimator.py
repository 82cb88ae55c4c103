"""Constrained GLS solvers for the comparison model.

Four equivalent routes to the best linear unbiased estimate under the
constraint w'b = d:

* ``solve_reduced``     - reparametrize on the orthonormal complement S of
  the constraint direction and solve the reduced normal equations.
* ``solve_augmented``   - absorb the constraint into the normal matrix as
  a rank-one augmentation c.ww'.
* ``solve_full``        - like the augmented route but folding the
  systematic-effect covariance into the error covariance.
* ``solve_by_projection`` - project an estimate obtained under a different
  constraint onto the constraint surface with F = I - f.w'/(w'f).

All routes report the covariance split into a statistical term and the
systematic-effect adjustment F A F'; the estimates themselves never
depend on the systematic-effect covariance (up to rounding in the full
route).

A non-zero offset d is handled once, centrally: observations are shifted
by (d/|w|^2).X.w, the homogeneous problem is solved, and the matching
shift of the parameters is added back.  Covariances are unaffected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import DesignMatrix, embed_constraint
from .errors import (
    DegenerateConstraint,
    NotPositiveDefinite,
    SingularAugmentedSystem,
    SingularFullCovariance,
    SingularReducedSystem,
)
from .linalg import SpdFactorization, orthonormal_complement
from .model import Constraint, CovarianceModel

#: Threshold on |w'f| below which the constraint cannot fix the null direction.
DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class ProjectorF:
    """The oblique projector F = I - f.w'/(w'f).

    F maps any parameter vector onto the surface w'b = 0 without changing
    the fitted values (X f = 0), and is idempotent.
    """

    f: np.ndarray
    w: np.ndarray
    matrix: np.ndarray

    @property
    def v(self) -> np.ndarray:
        """Unit-normalized constraint direction."""
        return self.w / np.linalg.norm(self.w)


@dataclass(frozen=True)
class GlsSolution:
    """A constrained GLS estimate with its covariance split.

    ``cov`` always equals ``cov_statistical + cov_adjustment``.  For the
    full-covariance route the adjustment is folded into the statistical
    term and reported as zero.
    """

    b: np.ndarray
    cov: np.ndarray
    cov_statistical: np.ndarray
    cov_adjustment: np.ndarray
    method: str
    c_used: float | None
    residuals: np.ndarray | None
    labels: tuple[tuple[str, str], ...]


def build_projector(f: np.ndarray, w: np.ndarray) -> ProjectorF:
    """Construct F = I - f.w'/(w'f) and verify its idempotence."""
    f = np.asarray(f, dtype=float)
    w = np.asarray(w, dtype=float)
    wf = float(w @ f)
    if abs(wf) < DEGENERACY_TOL:
        raise DegenerateConstraint(f"|w'f| = {abs(wf)} is numerically zero")
    matrix = np.eye(len(f)) - np.outer(f, w) / wf
    drift = np.max(np.abs(matrix @ matrix - matrix))
    if drift > 1e-8:
        raise DegenerateConstraint(f"projector failed idempotence check (drift {drift})")
    return ProjectorF(f=f, w=w, matrix=matrix)


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _adjustment(cov: CovarianceModel, dm: DesignMatrix, proj: ProjectorF) -> np.ndarray:
    j = len(dm.artefact_columns)
    k = len(dm.covariate_columns)
    a = cov.a_embedded(j, k)
    return _symmetrize(proj.matrix @ a @ proj.matrix.T)


def _prepare(dm: DesignMatrix, cons: Constraint, y: np.ndarray):
    """Common setup: embedded weights, projector, offset-shifted data."""
    w = embed_constraint(cons, dm)
    proj = build_projector(dm.f, w)
    y = np.asarray(y, dtype=float)
    d_hat = cons.d / float(w @ w)
    y_shifted = y - d_hat * (dm.x @ w)
    return w, proj, y, y_shifted, d_hat


def solve_reduced(
    dm: DesignMatrix, cov: CovarianceModel, cons: Constraint, y: np.ndarray
) -> GlsSolution:
    """Solve by reparametrizing on the complement of the constraint direction.

    Writes b = S b~ where the columns of S complete the unit constraint
    direction to an orthogonal matrix, solves the (n-1)-dimensional GLS
    problem for b~, and maps back.  The statistical covariance is
    S (S'X'V0^-1 X S)^-1 S'.
    """
    if not dm.full_rank:
        raise SingularReducedSystem("design is rank deficient (linkage or covariate failure)")
    w, proj, y, y_shifted, d_hat = _prepare(dm, cons, y)

    v0_fact = SpdFactorization(cov.v0)
    xt_v0inv = v0_fact.solve(dm.x).T  # (X' V0^-1), n x m
    s = orthonormal_complement(proj.v)
    reduced_normal = s.T @ (xt_v0inv @ dm.x) @ s
    try:
        fact = SpdFactorization(reduced_normal)
    except NotPositiveDefinite as exc:
        raise SingularReducedSystem(str(exc)) from exc

    b = s @ fact.solve(s.T @ (xt_v0inv @ y_shifted)) + d_hat * w
    cov_statistical = _symmetrize(s @ fact.solve(s.T))
    cov_adjustment = _adjustment(cov, dm, proj)
    return GlsSolution(
        b=b,
        cov=cov_statistical + cov_adjustment,
        cov_statistical=cov_statistical,
        cov_adjustment=cov_adjustment,
        method="reduced",
        c_used=None,
        residuals=y - dm.x @ b,
        labels=dm.labels,
    )


def default_augmentation_scale(dm: DesignMatrix, cov: CovarianceModel) -> float:
    """Default c: the mean diagonal scale of the normal matrix.

    The augmentation weight should be of similar size to the elements of
    X'V0^-1 X; trace/n is a deterministic, scale-free choice.
    """
    v0_fact = SpdFactorization(cov.v0)
    normal = dm.x.T @ v0_fact.solve(dm.x)
    return float(np.trace(normal)) / dm.n


def _augmented_solve(x, v0_fact, w, proj, y_shifted, c, error_cls):
    """Shared core of the augmented and full-covariance routes.

    Returns (b0, cov_total_statistical) where the covariance is
    P^-1 - f.f'/(c.(w'f)^2) with P = X'V0^-1 X + c.ww', symmetrized.
    """
    xt_v0inv = v0_fact.solve(x).T
    p = xt_v0inv @ x + c * np.outer(w, w)
    try:
        p_fact = SpdFactorization(p)
    except NotPositiveDefinite as exc:
        raise error_cls(str(exc)) from exc
    b0 = p_fact.solve(xt_v0inv @ y_shifted)
    wf = float(w @ proj.f)
    # P^-1 F' written as the rank-one subtraction; averaging with the
    # transpose removes the O(eps) asymmetry of the computed inverse.
    cov_stat = p_fact.solve(np.eye(len(w))) - np.outer(proj.f, proj.f) / (c * wf * wf)
    return b0, _symmetrize(cov_stat)


def solve_augmented(
    dm: DesignMatrix,
    cov: CovarianceModel,
    cons: Constraint,
    y: np.ndarray,
    c: float | None = None,
) -> GlsSolution:
    """Solve via the augmented normal matrix X'V0^-1 X + c.ww'.

    The result is independent of c (any c != 0); ``c=None`` selects the
    default scale.  Interpretable as appending the constraint to the data
    as a pseudo-observation.
    """
    if not dm.full_rank:
        raise SingularAugmentedSystem("design is rank deficient (linkage or covariate failure)")
    if c is not None and c == 0:
        raise SingularAugmentedSystem("augmentation weight c must be non-zero")
    w, proj, y, y_shifted, d_hat = _prepare(dm, cons, y)
    if c is None:
        c = default_augmentation_scale(dm, cov)

    v0_fact = SpdFactorization(cov.v0)
    b0, cov_statistical = _augmented_solve(
        dm.x, v0_fact, w, proj, y_shifted, c, SingularAugmentedSystem
    )
    b = b0 + d_hat * w
    cov_adjustment = _adjustment(cov, dm, proj)
    return GlsSolution(
        b=b,
        cov=cov_statistical + cov_adjustment,
        cov_statistical=cov_statistical,
        cov_adjustment=cov_adjustment,
        method="augmented",
        c_used=c,
        residuals=y - dm.x @ b,
        labels=dm.labels,
    )


def solve_full(
    dm: DesignMatrix,
    cov: CovarianceModel,
    cons: Constraint,
    y: np.ndarray,
    c: float | None = None,
) -> GlsSolution:
    """Solve with the systematic effects folded into the error covariance.

    Replaces V0 by V0 + X A X' and runs the augmented route with a zero
    adjustment; the reported covariance is already the total.
    """
    if not dm.full_rank:
        raise SingularFullCovariance("design is rank deficient (linkage or covariate failure)")
    if c is not None and c == 0:
        raise SingularFullCovariance("augmentation weight c must be non-zero")
    w, proj, y, y_shifted, d_hat = _prepare(dm, cons, y)

    j = len(dm.artefact_columns)
    k = len(dm.covariate_columns)
    a = cov.a_embedded(j, k)
    v_full = cov.v0 + dm.x @ a @ dm.x.T
    try:
        v_fact = SpdFactorization(_symmetrize(v_full))
    except NotPositiveDefinite as exc:
        raise SingularFullCovariance(str(exc)) from exc

    if c is None:
        normal = dm.x.T @ v_fact.solve(dm.x)
        c = float(np.trace(normal)) / dm.n

    b0, cov_total = _augmented_solve(
        dm.x, v_fact, w, proj, y_shifted, c, SingularFullCovariance
    )
    b = b0 + d_hat * w
    n = dm.n
    return GlsSolution(
        b=b,
        cov=cov_total,
        cov_statistical=cov_total,
        cov_adjustment=np.zeros((n, n)),
        method="full",
        c_used=c,
        residuals=y - dm.x @ b,
        labels=dm.labels,
    )


def solve_by_projection(
    b0: np.ndarray,
    cov0: np.ndarray,
    cons: Constraint,
    dm: DesignMatrix,
    y: np.ndarray | None = None,
    cov0_adjustment: np.ndarray | None = None,
) -> GlsSolution:
    """Re-constrain an existing estimate via the projector F.

    ``b0`` must be a best linear unbiased estimate under some other
    constraint (e.g. one participant effect pinned to zero) with
    covariance ``cov0``.  Returns b = F b0 + (d/(w'f)).f with covariance
    F cov0 F'; the fitted values, and hence the residuals, are unchanged.

    If the adjustment part of ``cov0`` is supplied it is projected
    separately so the statistical/adjustment split is preserved;
    otherwise the whole projected covariance is reported as statistical.
    """
    b0 = np.asarray(b0, dtype=float)
    cov0 = np.asarray(cov0, dtype=float)
    w = embed_constraint(cons, dm)
    proj = build_projector(dm.f, w)
    wf = float(w @ dm.f)

    b = proj.matrix @ b0 + (cons.d / wf) * dm.f
    cov = _symmetrize(proj.matrix @ cov0 @ proj.matrix.T)
    if cov0_adjustment is not None:
        adj = _symmetrize(proj.matrix @ np.asarray(cov0_adjustment, float) @ proj.matrix.T)
    else:
        adj = np.zeros_like(cov)
    return GlsSolution(
        b=b,
        cov=cov,
        cov_statistical=cov - adj,
        cov_adjustment=adj,
        method="projection",
        c_used=None,
        residuals=None if y is None else np.asarray(y, float) - dm.x @ b,
        labels=dm.labels,
    )
