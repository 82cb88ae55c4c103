"""Synthetic comparisons, an independent oracle, and Monte Carlo checks.

The generative model is the comparison model itself: each measurement is
artefact value + covariate terms + participant effect + a per-participant
systematic draw + random error.  Draws are Gaussian and deterministic
given the seed; the design (exchange pattern and covariate deviations) is
fixed across draws so repeated draws differ only in the noise.

``oracle_constrained_gls`` solves the constrained weighted least squares
problem through a bordered KKT system - a route sharing no machinery with
the production solvers, so agreement between the two is evidence, not
tautology.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .design import DesignMatrix, build_design, check_linkage, embed_constraint
from .errors import InvalidConfig, SingularKkt
from .estimator import solve_reduced
from .linalg import SpdFactorization, orthonormal_complement
from .model import ComparisonData, Constraint, CovarianceModel, MeasurementRecord


@dataclass(frozen=True)
class SimulationConfig:
    """Ground-truth description of a synthetic comparison.

    ``pattern`` lists (participant, artefact, repeat count) triples; its
    order (expanded by repeats) is the record order.  ``v0`` may be a
    full m-by-m matrix or a scalar iid variance.
    """

    participants: tuple[str, ...]
    artefacts: tuple[str, ...]
    pattern: tuple[tuple[str, str, int], ...]
    theta: Mapping[str, float]
    delta: Mapping[str, float]
    weights: Mapping[str, float]
    d: float
    a_tilde: np.ndarray
    v0: np.ndarray
    covariate_names: tuple[str, ...] = ()
    kappa: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0
    n_draws: int = 10_000

    def __init__(
        self,
        participants,
        artefacts,
        pattern,
        theta,
        delta,
        weights,
        d,
        a_tilde,
        v0,
        covariate_names=(),
        kappa=None,
        seed=0,
        n_draws=10_000,
    ):
        object.__setattr__(self, "participants", tuple(participants))
        object.__setattr__(self, "artefacts", tuple(artefacts))
        object.__setattr__(self, "pattern", tuple((p, a, int(r)) for p, a, r in pattern))
        object.__setattr__(self, "theta", dict(theta))
        object.__setattr__(self, "delta", dict(delta))
        object.__setattr__(self, "weights", dict(weights))
        object.__setattr__(self, "d", float(d))
        object.__setattr__(self, "a_tilde", np.asarray(a_tilde, dtype=float))
        m = sum(int(r) for _, _, r in self.pattern)
        v0 = np.asarray(v0, dtype=float)
        if v0.ndim == 0:
            v0 = float(v0) * np.eye(m)
        object.__setattr__(self, "v0", v0)
        object.__setattr__(self, "covariate_names", tuple(covariate_names))
        object.__setattr__(self, "kappa", dict(kappa or {}))
        object.__setattr__(self, "seed", int(seed))
        object.__setattr__(self, "n_draws", int(n_draws))

    @property
    def m(self) -> int:
        return sum(r for _, _, r in self.pattern)

    def constraint(self) -> Constraint:
        return Constraint(self.weights, self.d)

    def covariance_model(self) -> CovarianceModel:
        return CovarianceModel(self.v0, self.a_tilde)


@dataclass(frozen=True)
class GroundTruth:
    """The parameter values and random draws behind one synthetic dataset."""

    theta: dict[str, float]
    delta: dict[str, float]
    kappa: dict[str, float]
    phi: dict[str, float]

    def beta(self, dm: DesignMatrix) -> np.ndarray:
        """Truth assembled in the design's column order."""
        out = np.zeros(dm.n)
        for name, col in dm.artefact_columns.items():
            out[col] = self.theta[name]
        for name, col in dm.participant_columns.items():
            out[col] = self.delta[name]
        for name, col in dm.covariate_columns.items():
            out[col] = self.kappa[name]
        return out


@dataclass(frozen=True)
class MonteCarloReport:
    """Element-wise comparison of empirical and analytic estimate covariance."""

    analytic_cov: np.ndarray
    empirical_cov: np.ndarray
    standard_error: np.ndarray
    max_studentized: float
    n_draws: int


def validate_config(cfg: SimulationConfig) -> None:
    """Raise InvalidConfig if the configuration breaks its invariants."""
    ell = len(cfg.participants)
    if set(cfg.theta) != set(cfg.artefacts):
        raise InvalidConfig("theta must cover exactly the artefact roster")
    if set(cfg.delta) != set(cfg.participants):
        raise InvalidConfig("delta must cover exactly the participant roster")
    if set(cfg.weights) != set(cfg.participants):
        raise InvalidConfig("weights must cover exactly the participant roster")
    if set(cfg.kappa) != set(cfg.covariate_names):
        raise InvalidConfig("kappa must cover exactly the covariate roster")
    if cfg.a_tilde.shape != (ell, ell):
        raise InvalidConfig(f"a_tilde must be {ell}x{ell}")
    if cfg.v0.shape != (cfg.m, cfg.m):
        raise InvalidConfig(f"v0 must be {cfg.m}x{cfg.m}")
    wd = sum(cfg.weights[p] * cfg.delta[p] for p in cfg.participants)
    if abs(wd - cfg.d) > 1e-12:
        raise InvalidConfig(f"true effects violate the constraint: w'delta = {wd}, d = {cfg.d}")
    skeleton = _skeleton_data(cfg)
    if not check_linkage(skeleton).passed:
        raise InvalidConfig("exchange pattern is not linked")


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (tolerates zero eigenvalues)."""
    eigval, eigvec = np.linalg.eigh(m)
    eigval = np.clip(eigval, 0.0, None)
    return (eigvec * np.sqrt(eigval)) @ eigvec.T


def _covariate_deviations(cfg: SimulationConfig) -> np.ndarray:
    """Fixed covariate design, drawn once from the seed (m x K)."""
    rng = np.random.default_rng((cfg.seed, 0xC0))
    return rng.uniform(-1.0, 1.0, size=(cfg.m, len(cfg.covariate_names)))


def _skeleton_data(cfg: SimulationConfig) -> ComparisonData:
    """The comparison with all measured values zero (design only)."""
    deviations = _covariate_deviations(cfg)
    records = []
    row = 0
    for pid, aid, reps in cfg.pattern:
        for r in range(1, reps + 1):
            covs = {
                name: float(deviations[row, k])
                for k, name in enumerate(cfg.covariate_names)
            }
            records.append(MeasurementRecord(pid, aid, r, 0.0, covs))
            row += 1
    return ComparisonData(records, cfg.participants, cfg.artefacts, cfg.covariate_names)


def _draw_noise(
    cfg: SimulationConfig,
    draw_index: int,
    sqrt_a: np.ndarray,
    sqrt_v: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw systematic effects (length L) and random errors (length m)."""
    rng = np.random.default_rng((cfg.seed, 0x5E, draw_index))
    phi = sqrt_a @ rng.standard_normal(len(cfg.participants))
    eps = sqrt_v @ rng.standard_normal(cfg.m)
    return phi, eps


def generate_comparison(
    cfg: SimulationConfig, draw_index: int = 0
) -> tuple[ComparisonData, GroundTruth]:
    """Forward-sample one synthetic comparison dataset.

    Deterministic given (seed, draw_index); the exchange pattern and
    covariate deviations depend on the seed only.
    """
    validate_config(cfg)
    skeleton = _skeleton_data(cfg)
    phi, eps = _draw_noise(cfg, draw_index, _psd_sqrt(cfg.a_tilde), _psd_sqrt(cfg.v0))
    phi_by_id = {p: float(phi[i]) for i, p in enumerate(cfg.participants)}

    records = []
    for row, rec in enumerate(skeleton.records):
        value = (
            cfg.theta[rec.artefact_id]
            + cfg.delta[rec.participant_id]
            + phi_by_id[rec.participant_id]
            + sum(cfg.kappa[name] * dev for name, dev in rec.covariates.items())
            + float(eps[row])
        )
        records.append(
            MeasurementRecord(
                rec.participant_id, rec.artefact_id, rec.repeat_index, value, rec.covariates
            )
        )
    data = ComparisonData(records, cfg.participants, cfg.artefacts, cfg.covariate_names)
    truth = GroundTruth(
        theta=dict(cfg.theta), delta=dict(cfg.delta), kappa=dict(cfg.kappa), phi=phi_by_id
    )
    return data, truth


def oracle_constrained_gls(
    x: np.ndarray, sigma: np.ndarray, w: np.ndarray, d: float, y: np.ndarray
) -> np.ndarray:
    """Constrained weighted least squares via the bordered KKT system.

    Minimizes (y - X b)' Sigma^-1 (y - X b) subject to w'b = d by solving

        [ X'Sigma^-1 X   w ] [ b  ]   [ X'Sigma^-1 y ]
        [ w'             0 ] [ mu ] = [ d            ]

    Deliberately shares nothing with the production solvers: no
    complement basis, no projector, no augmentation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    n = x.shape[1]
    sig_fact = SpdFactorization(sigma)
    xtsi = sig_fact.solve(x).T
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = xtsi @ x
    kkt[:n, n] = w
    kkt[n, :n] = w
    rhs = np.concatenate([xtsi @ y, [float(d)]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularKkt(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularKkt("KKT solve produced non-finite values")
    return sol[:n]


def oracle_constrained_cov(x: np.ndarray, sigma: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Covariance of the oracle estimate: the leading block of the KKT inverse."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    n = x.shape[1]
    sig_fact = SpdFactorization(sigma)
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = sig_fact.solve(x).T @ x
    kkt[:n, n] = w
    kkt[n, :n] = w
    try:
        inv = np.linalg.inv(kkt)
    except np.linalg.LinAlgError as exc:
        raise SingularKkt(str(exc)) from exc
    return inv[:n, :n]


def _estimator_map(dm: DesignMatrix, cov: CovarianceModel, cons: Constraint):
    """The linear map and offset with b = G y + h for the reduced solver."""
    w = embed_constraint(cons, dm)
    v = w / np.linalg.norm(w)
    s = orthonormal_complement(v)
    v0_fact = SpdFactorization(cov.v0)
    xt_v0inv = v0_fact.solve(dm.x).T
    m_fact = SpdFactorization(s.T @ (xt_v0inv @ dm.x) @ s)
    g = s @ m_fact.solve(s.T @ xt_v0inv)
    d_hat = cons.d / float(w @ w)
    h = d_hat * w - d_hat * (g @ (dm.x @ w))
    return g, h


def monte_carlo_cov_check(cfg: SimulationConfig, n_draws: int | None = None) -> MonteCarloReport:
    """Compare the empirical covariance of the estimates with the analytic one.

    Runs ``n_draws`` generate-and-solve cycles.  The estimator is linear
    in the observations, so the solve step applies the precomputed
    estimator map of the reduced route to each draw; the map is the exact
    solver output (tests cross-check this per draw).  Standard errors of
    the empirical covariance elements use the Gaussian fourth-moment
    formula var(C_ij) = (C_ii C_jj + C_ij^2) / N.
    """
    validate_config(cfg)
    if n_draws is None:
        n_draws = cfg.n_draws
    skeleton = _skeleton_data(cfg)
    dm = build_design(skeleton)
    cov_model = cfg.covariance_model()
    cons = cfg.constraint()

    data0, truth = generate_comparison(cfg, 0)
    analytic = solve_reduced(dm, cov_model, cons, data0.observation_vector()).cov

    base = dm.x @ truth.beta(dm)
    part_cols = [dm.participant_columns[p] for p in cfg.participants]
    x_part = dm.x[:, part_cols]
    sqrt_a = _psd_sqrt(cfg.a_tilde)
    sqrt_v = _psd_sqrt(cfg.v0)
    g, h = _estimator_map(dm, cov_model, cons)

    estimates = np.empty((dm.n, n_draws))
    for i in range(n_draws):
        phi, eps = _draw_noise(cfg, i, sqrt_a, sqrt_v)
        y = base + x_part @ phi + eps
        estimates[:, i] = g @ y + h

    empirical = np.cov(estimates)
    se = np.sqrt(
        (np.outer(np.diag(analytic), np.diag(analytic)) + analytic**2) / n_draws
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        studentized = np.where(se > 0, np.abs(empirical - analytic) / se, 0.0)
    return MonteCarloReport(
        analytic_cov=analytic,
        empirical_cov=empirical,
        standard_error=se,
        max_studentized=float(np.max(studentized)),
        n_draws=n_draws,
    )


def random_comparison(
    rng: np.random.Generator,
    max_participants: int = 10,
    max_artefacts: int = 6,
    max_covariates: int = 1,
    max_measurements: int = 60,
    d_choices: Sequence[float] = (0.0, 0.3),
) -> tuple[ComparisonData, CovarianceModel, Constraint]:
    """A random linked comparison with block V0 and correlated systematics.

    Linkage is guaranteed by construction: a spanning structure over
    participants and artefacts is built first (each new node attaches to
    an existing node of the other kind), then extra random pairs are
    added.  No rejection sampling.
    """
    ell = int(rng.integers(2, max_participants + 1))
    j = int(rng.integers(1, max_artefacts + 1))
    k = int(rng.integers(0, max_covariates + 1))
    participants = [f"P{i + 1}" for i in range(ell)]
    artefacts = [f"A{i + 1}" for i in range(j)]
    covariates = [f"cov{i + 1}" for i in range(k)]

    # Spanning construction: seed with one (participant, artefact) pair,
    # then attach every remaining node to a random placed node of the
    # other kind.
    edges = {(participants[0], artefacts[0])}
    placed_p, placed_a = [participants[0]], [artefacts[0]]
    pool = [("p", p) for p in participants[1:]] + [("a", a) for a in artefacts[1:]]
    rng.shuffle(pool)
    for kind, name in pool:
        if kind == "p":
            edges.add((name, placed_a[int(rng.integers(len(placed_a)))]))
            placed_p.append(name)
        else:
            edges.add((placed_p[int(rng.integers(len(placed_p)))], name))
            placed_a.append(name)
    extra = int(rng.integers(0, ell * j // 2 + 1))
    for _ in range(extra):
        if len(edges) >= max_measurements:
            break
        edges.add(
            (
                participants[int(rng.integers(ell))],
                artefacts[int(rng.integers(j))],
            )
        )

    # One measurement per edge keeps the spanning structure intact; any
    # remaining budget is spent on extra repeats.
    pattern = []
    budget = max_measurements - len(edges)
    m = 0
    for pid, aid in sorted(edges):
        reps = 1 + min(int(rng.integers(0, 3)), budget)
        budget -= reps - 1
        pattern.append((pid, aid, reps))
        m += reps

    records = []
    for pid, aid, reps in pattern:
        for r in range(1, reps + 1):
            covs = {c: float(rng.uniform(-1, 1)) for c in covariates}
            records.append(MeasurementRecord(pid, aid, r, float(rng.normal(10, 1)), covs))
    data = ComparisonData(records, participants, artefacts, covariates)

    # Per-participant SPD blocks for V0.
    v0 = np.zeros((m, m))
    for pid in participants:
        rows = [i for i, rec in enumerate(records) if rec.participant_id == pid]
        nb = len(rows)
        if nb == 0:
            continue
        q = rng.normal(size=(nb, nb))
        block = q @ q.T / nb + np.diag(0.5 + rng.uniform(0, 1, nb))
        v0[np.ix_(rows, rows)] = block

    if rng.uniform() < 0.3:
        a_tilde = np.diag(rng.uniform(0, 0.1, ell))
    else:
        gmat = rng.normal(size=(ell, ell))
        a_tilde = gmat @ gmat.T * (0.05 / ell)

    if rng.uniform() < 0.15:
        weights = {p: 0.0 for p in participants}
        weights[participants[int(rng.integers(ell))]] = 1.0
    else:
        dirichlet = rng.dirichlet(np.ones(ell))
        weights = {p: float(dirichlet[i]) for i, p in enumerate(participants)}
    d = float(d_choices[int(rng.integers(len(d_choices)))])

    return data, CovarianceModel(v0, a_tilde), Constraint(weights, d)
