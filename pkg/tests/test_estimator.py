import numpy as np
import pytest

from conftest import rel_diff
from kcgls.design import build_design, embed_constraint
from kcgls.errors import DegenerateConstraint, SingularAugmentedSystem, SingularReducedSystem
from kcgls.estimator import (
    build_projector,
    solve_augmented,
    solve_by_projection,
    solve_full,
    solve_reduced,
)
from kcgls.linalg import spd_solve
from kcgls.model import ComparisonData, Constraint, CovarianceModel, MeasurementRecord
from kcgls.simulate import random_comparison


class TestBuildProjector:
    def test_equal_weight_projector(self):
        proj = build_projector(np.array([-1.0, 1.0, 1.0]), np.array([0.0, 0.5, 0.5]))
        expected = np.array([[1.0, 0.5, 0.5], [0.0, 0.5, -0.5], [0.0, -0.5, 0.5]])
        np.testing.assert_allclose(proj.matrix, expected, atol=1e-15)

    def test_reference_weight_projector(self):
        proj = build_projector(np.array([-1.0, 1.0, 1.0]), np.array([0.0, 1.0, 0.0]))
        expected = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, -1.0, 1.0]])
        np.testing.assert_allclose(proj.matrix, expected, atol=1e-15)

    def test_idempotence(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            n = int(rng.integers(2, 12))
            f = rng.normal(size=n)
            w = rng.normal(size=n)
            if abs(w @ f) < 0.1:
                continue
            proj = build_projector(f, w)
            assert np.max(np.abs(proj.matrix @ proj.matrix - proj.matrix)) < 1e-12
            assert np.max(np.abs(proj.matrix @ f)) < 1e-12
            assert np.max(np.abs(w @ proj.matrix)) < 1e-12

    def test_degenerate_raises(self):
        with pytest.raises(DegenerateConstraint):
            build_projector(np.array([1.0, 0.0]), np.array([0.0, 1.0]))


class TestSolveReducedE1:
    def test_estimates(self, e1_design, e1_cov, e1_constraint, e1_data):
        sol = solve_reduced(e1_design, e1_cov, e1_constraint, e1_data.observation_vector())
        np.testing.assert_allclose(sol.b, [10.2, -0.2, 0.2], atol=1e-12)

    def test_covariance(self, e1_design, e1_cov, e1_constraint, e1_data):
        # Frozen from the bordered-KKT oracle (leading block of the KKT inverse).
        sol = solve_reduced(e1_design, e1_cov, e1_constraint, e1_data.observation_vector())
        np.testing.assert_allclose(np.diag(sol.cov), [0.5, 0.5, 0.5], atol=1e-12)
        assert abs(sol.cov[0, 1]) < 1e-12
        np.testing.assert_allclose(sol.cov_adjustment, np.zeros((3, 3)), atol=1e-15)

    def test_offset_constraint(self, e1_design, e1_cov, e1_data):
        # d = 0.2 with equal weights: the offset-shifted solve gives
        # theta = 10.0, effects (0.0, 0.4); w'b = 0.2 holds exactly
        # (verified against the bordered-KKT oracle).
        cons = Constraint({"P1": 0.5, "P2": 0.5}, 0.2)
        sol = solve_reduced(e1_design, e1_cov, cons, e1_data.observation_vector())
        np.testing.assert_allclose(sol.b, [10.0, 0.0, 0.4], atol=1e-12)
        w = embed_constraint(cons, e1_design)
        assert abs(w @ sol.b - 0.2) < 1e-12

    def test_systematic_cov_split(self, e1_design, e1_cov_systematic, e1_constraint, e1_data):
        sol = solve_reduced(
            e1_design, e1_cov_systematic, e1_constraint, e1_data.observation_vector()
        )
        np.testing.assert_allclose(sol.b, [10.2, -0.2, 0.2], atol=1e-12)
        # Participant-block adjustment: D11 = D22 = 0.0125.
        np.testing.assert_allclose(
            sol.cov_adjustment[1:, 1:], [[0.0125, -0.0125], [-0.0125, 0.0125]], atol=1e-15
        )
        np.testing.assert_allclose(sol.cov, sol.cov_statistical + sol.cov_adjustment, atol=1e-15)

    def test_disconnected_raises(self, e1_cov, e1_constraint):
        records = [
            MeasurementRecord("P1", "A1", 1, 10.0),
            MeasurementRecord("P2", "A2", 1, 10.4),
        ]
        data = ComparisonData(records, ["P1", "P2"], ["A1", "A2"])
        dm = build_design(data)
        with pytest.raises(SingularReducedSystem):
            solve_reduced(dm, e1_cov, e1_constraint, data.observation_vector())


class TestSolveAugmented:
    def test_matches_reduced(self, e1_design, e1_cov, e1_constraint, e1_data):
        y = e1_data.observation_vector()
        red = solve_reduced(e1_design, e1_cov, e1_constraint, y)
        aug = solve_augmented(e1_design, e1_cov, e1_constraint, y, c=1.0)
        assert rel_diff(red.b, aug.b) < 1e-10
        assert rel_diff(red.cov, aug.cov) < 1e-10

    def test_c_invariance(self, e1_design, e1_cov, e1_constraint, e1_data):
        y = e1_data.observation_vector()
        small = solve_augmented(e1_design, e1_cov, e1_constraint, y, c=1.0)
        large = solve_augmented(e1_design, e1_cov, e1_constraint, y, c=1e6)
        assert rel_diff(small.b, large.b) < 1e-8
        assert rel_diff(small.cov, large.cov) < 1e-8

    def test_pseudo_observation_route(self, e1_design, e1_cov, e1_constraint, e1_data):
        # Append the constraint as a data row: X gains row c1.w', Y gains 0,
        # V0 gains a c2 corner.  Plain GLS on the augmented system must
        # reproduce the augmented solve with c = c1^2 / c2.
        y = e1_data.observation_vector()
        w = embed_constraint(e1_constraint, e1_design)
        c1, c2 = 2.0, 0.5
        x_aug = np.vstack([e1_design.x, c1 * w])
        y_aug = np.concatenate([y, [0.0]])
        v_aug = np.zeros((3, 3))
        v_aug[:2, :2] = e1_cov.v0
        v_aug[2, 2] = c2
        normal = x_aug.T @ spd_solve(v_aug, x_aug)
        b_pseudo = np.linalg.solve(normal, x_aug.T @ spd_solve(v_aug, y_aug))
        direct = solve_augmented(e1_design, e1_cov, e1_constraint, y, c=c1**2 / c2)
        assert rel_diff(b_pseudo, direct.b) < 1e-10

    def test_zero_c_rejected(self, e1_design, e1_cov, e1_constraint, e1_data):
        with pytest.raises(SingularAugmentedSystem):
            solve_augmented(
                e1_design, e1_cov, e1_constraint, e1_data.observation_vector(), c=0.0
            )

    def test_auto_c_recorded(self, e1_design, e1_cov, e1_constraint, e1_data):
        sol = solve_augmented(e1_design, e1_cov, e1_constraint, e1_data.observation_vector())
        # trace(X'X)/n = 4/3 for the E1 design with V0 = I.
        assert sol.c_used == pytest.approx(4.0 / 3.0)


class TestSolveFull:
    def test_estimates_unchanged_by_systematics(
        self, e1_design, e1_cov_systematic, e1_constraint, e1_data
    ):
        sol = solve_full(e1_design, e1_cov_systematic, e1_constraint, e1_data.observation_vector())
        np.testing.assert_allclose(sol.b, [10.2, -0.2, 0.2], atol=1e-10)

    def test_zero_systematics_collapses_to_augmented(
        self, e1_design, e1_cov, e1_constraint, e1_data
    ):
        y = e1_data.observation_vector()
        full = solve_full(e1_design, e1_cov, e1_constraint, y, c=1.0)
        aug = solve_augmented(e1_design, e1_cov, e1_constraint, y, c=1.0)
        assert rel_diff(full.b, aug.b) < 1e-10
        assert rel_diff(full.cov, aug.cov) < 1e-10
        np.testing.assert_array_equal(full.cov_adjustment, np.zeros((3, 3)))

    def test_total_cov_matches_reduced_random_instance(self):
        rng = np.random.default_rng(314)
        data, cov, cons = random_comparison(rng, max_participants=5, max_artefacts=3)
        dm = build_design(data)
        y = data.observation_vector()
        red = solve_reduced(dm, cov, cons, y)
        full = solve_full(dm, cov, cons, y)
        assert rel_diff(red.cov, full.cov) < 1e-9
        assert rel_diff(red.b, full.b) < 1e-9


class TestSolveByProjection:
    def test_reproject_pinned_solution(self, e1_design, e1_cov, e1_constraint, e1_data):
        y = e1_data.observation_vector()
        pinned = solve_reduced(e1_design, e1_cov, Constraint({"P1": 1.0, "P2": 0.0}), y)
        np.testing.assert_allclose(pinned.b, [10.0, 0.0, 0.4], atol=1e-12)
        sol = solve_by_projection(pinned.b, pinned.cov, e1_constraint, e1_design, y=y)
        np.testing.assert_allclose(sol.b, [10.2, -0.2, 0.2], atol=1e-12)
        ref = solve_reduced(e1_design, e1_cov, e1_constraint, y)
        assert rel_diff(sol.cov, ref.cov) < 1e-12

    def test_projection_fixes_satisfying_solution(self, e1_design, e1_cov, e1_constraint, e1_data):
        y = e1_data.observation_vector()
        sol = solve_reduced(e1_design, e1_cov, e1_constraint, y)
        again = solve_by_projection(sol.b, sol.cov, e1_constraint, e1_design, y=y)
        assert rel_diff(sol.b, again.b) < 1e-14
        assert rel_diff(sol.cov, again.cov) < 1e-14

    def test_residuals_unchanged(self, e1_design, e1_cov, e1_data):
        y = e1_data.observation_vector()
        pinned = solve_reduced(e1_design, e1_cov, Constraint({"P1": 1.0, "P2": 0.0}), y)
        sol = solve_by_projection(
            pinned.b, pinned.cov, Constraint({"P1": 0.5, "P2": 0.5}, 0.0), e1_design, y=y
        )
        np.testing.assert_allclose(sol.residuals, pinned.residuals, atol=1e-12)

    def test_split_preserved_when_adjustment_given(
        self, e1_design, e1_cov_systematic, e1_constraint, e1_data
    ):
        y = e1_data.observation_vector()
        pinned = solve_reduced(e1_design, e1_cov_systematic, Constraint({"P1": 1.0, "P2": 0.0}), y)
        sol = solve_by_projection(
            pinned.b,
            pinned.cov,
            e1_constraint,
            e1_design,
            y=y,
            cov0_adjustment=pinned.cov_adjustment,
        )
        ref = solve_reduced(e1_design, e1_cov_systematic, e1_constraint, y)
        assert rel_diff(sol.cov_adjustment, ref.cov_adjustment) < 1e-12
        assert rel_diff(sol.cov_statistical, ref.cov_statistical) < 1e-12


class TestMethodProperties:
    def all_solutions(self, data, cov, cons):
        dm = build_design(data)
        y = data.observation_vector()
        red = solve_reduced(dm, cov, cons, y)
        aug = solve_augmented(dm, cov, cons, y)
        full = solve_full(dm, cov, cons, y)
        pinned_cons = Constraint(
            {p: (1.0 if i == 0 else 0.0) for i, p in enumerate(data.participants)}, 0.0
        )
        pinned = solve_reduced(dm, cov, pinned_cons, y)
        proj = solve_by_projection(
            pinned.b, pinned.cov, cons, dm, y=y, cov0_adjustment=pinned.cov_adjustment
        )
        return dm, y, [red, aug, full, proj]

    def test_method_equivalence_random_instances(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            data, cov, cons = random_comparison(rng)
            dm, y, sols = self.all_solutions(data, cov, cons)
            for other in sols[1:]:
                assert rel_diff(sols[0].b, other.b) < 1e-9
                assert rel_diff(sols[0].cov, other.cov) < 1e-8

    def test_constraint_satisfied_every_method(self):
        rng = np.random.default_rng(77)
        for _ in range(10):
            data, cov, cons = random_comparison(rng)
            dm, y, sols = self.all_solutions(data, cov, cons)
            w = embed_constraint(cons, dm)
            for sol in sols:
                scale = max(1.0, abs(cons.d), np.max(np.abs(sol.b)))
                assert abs(w @ sol.b - cons.d) < 1e-10 * scale

    def test_estimates_independent_of_systematics(self):
        rng = np.random.default_rng(55)
        data, cov, cons = random_comparison(rng)
        dm = build_design(data)
        y = data.observation_vector()
        base = solve_reduced(dm, cov, cons, y)
        ell = data.n_participants
        g = rng.normal(size=(ell, ell))
        bigger = CovarianceModel(cov.v0, cov.a_tilde + g @ g.T)
        perturbed = solve_reduced(dm, bigger, cons, y)
        assert rel_diff(base.b, perturbed.b) < 1e-12
        assert rel_diff(base.cov_statistical, perturbed.cov_statistical) < 1e-12
        assert not np.allclose(base.cov_adjustment, perturbed.cov_adjustment)

    def test_translation_equivariance_per_artefact(self):
        rng = np.random.default_rng(88)
        data, cov, cons = random_comparison(rng)
        dm = build_design(data)
        y = data.observation_vector()
        base = solve_reduced(dm, cov, cons, y)
        target = data.artefacts[0]
        delta = 3.7
        shifted_y = y + delta * dm.x[:, dm.artefact_columns[target]]
        shifted = solve_reduced(dm, cov, cons, shifted_y)
        expected = base.b.copy()
        expected[dm.artefact_columns[target]] += delta
        assert rel_diff(shifted.b, expected) < 1e-10

    def test_translation_equivariance_global(self):
        rng = np.random.default_rng(99)
        data, cov, cons = random_comparison(rng)
        dm = build_design(data)
        y = data.observation_vector()
        base = solve_reduced(dm, cov, cons, y)
        shifted = solve_reduced(dm, cov, cons, y + 2.5)
        expected = base.b.copy()
        for col in dm.artefact_columns.values():
            expected[col] += 2.5
        assert rel_diff(shifted.b, expected) < 1e-10
