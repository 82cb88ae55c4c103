import numpy as np
import pytest

from kcgls.model import (
    ComparisonData,
    Constraint,
    CovarianceModel,
    MeasurementRecord,
    validate_comparison,
)


def test_e1_instance_is_valid(e1_data, e1_cov, e1_constraint):
    assert validate_comparison(e1_data, e1_cov, e1_constraint) == []


def test_weights_not_summing_to_one(e1_data, e1_cov):
    cons = Constraint({"P1": 0.5, "P2": 0.4})
    violations = validate_comparison(e1_data, e1_cov, cons)
    assert any("sum to 1" in v for v in violations)


def test_indefinite_v0_rejected(e1_data, e1_constraint):
    # Eigenvalues of [[1, 2], [2, 1]] are 3 and -1.
    cov = CovarianceModel(np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros((2, 2)))
    violations = validate_comparison(e1_data, cov, e1_constraint)
    assert any("positive definite" in v for v in violations)


def test_duplicate_record_key_rejected(e1_cov, e1_constraint):
    records = [
        MeasurementRecord("P1", "A1", 1, 10.0),
        MeasurementRecord("P1", "A1", 1, 10.1),
    ]
    data = ComparisonData(records, ["P1", "P2"], ["A1"])
    violations = validate_comparison(data, e1_cov, e1_constraint)
    assert any("unique" in v for v in violations)


def test_unknown_participant_and_artefact_rejected(e1_cov, e1_constraint):
    records = [
        MeasurementRecord("P9", "A9", 1, 10.0),
        MeasurementRecord("P2", "A1", 1, 10.4),
    ]
    data = ComparisonData(records, ["P1", "P2"], ["A1"])
    violations = validate_comparison(data, e1_cov, e1_constraint)
    assert any("unknown participant" in v for v in violations)
    assert any("unknown artefact" in v for v in violations)


def test_dimension_mismatches_reported(e1_data, e1_constraint):
    cov = CovarianceModel(np.eye(3), np.zeros((4, 4)))
    violations = validate_comparison(e1_data, cov, e1_constraint)
    assert any("V0 must be 2x2" in v for v in violations)
    assert any("a_tilde must be 2x2" in v for v in violations)


def test_negative_weight_rejected(e1_data, e1_cov):
    cons = Constraint({"P1": 1.5, "P2": -0.5})
    violations = validate_comparison(e1_data, e1_cov, cons)
    assert any("non-negative" in v for v in violations)


def test_psd_tolerance_accepts_rounded_a_tilde(e1_data, e1_cov, e1_constraint):
    # A tiny negative eigenvalue from user rounding must pass.
    a = np.array([[0.01, 0.0099999999999], [0.0099999999999, 0.01]])
    a[0, 1] = a[1, 0] = 0.01 + 1e-16
    cov = CovarianceModel(np.eye(2), a)
    assert validate_comparison(e1_data, cov, e1_constraint) == []


def test_validation_is_idempotent(e1_data, e1_cov):
    cons = Constraint({"P1": 0.5, "P2": 0.4})
    first = validate_comparison(e1_data, e1_cov, cons)
    second = validate_comparison(e1_data, e1_cov, cons)
    assert first == second


def test_a_embedded_round_trips():
    rng = np.random.default_rng(7)
    g = rng.normal(size=(3, 3))
    a_tilde = g @ g.T
    cov = CovarianceModel(np.eye(5), a_tilde)
    embedded = cov.a_embedded(n_artefacts=2, n_covariates=1)
    assert embedded.shape == (6, 6)
    np.testing.assert_array_equal(embedded[2:5, 2:5], a_tilde)
    block = embedded.copy()
    block[2:5, 2:5] = 0.0
    assert np.all(block == 0.0)


@pytest.mark.parametrize("bad_repeat", [0, -1])
def test_repeat_index_must_be_positive(e1_cov, e1_constraint, bad_repeat):
    records = [
        MeasurementRecord("P1", "A1", bad_repeat, 10.0),
        MeasurementRecord("P2", "A1", 1, 10.4),
    ]
    data = ComparisonData(records, ["P1", "P2"], ["A1"])
    violations = validate_comparison(data, e1_cov, e1_constraint)
    assert any("repeat index" in v for v in violations)


def test_unrostered_covariate_rejected(e1_cov, e1_constraint):
    records = [
        MeasurementRecord("P1", "A1", 1, 10.0, {"temp": 0.3}),
        MeasurementRecord("P2", "A1", 1, 10.4),
    ]
    data = ComparisonData(records, ["P1", "P2"], ["A1"])
    violations = validate_comparison(data, e1_cov, e1_constraint)
    assert any("unrostered covariate" in v for v in violations)
