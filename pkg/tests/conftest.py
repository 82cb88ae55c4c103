import numpy as np
import pytest

from kcgls.design import build_design
from kcgls.model import ComparisonData, Constraint, CovarianceModel, MeasurementRecord


@pytest.fixture
def e1_data():
    """Two participants, one artefact, one measurement each: Y = (10.0, 10.4)."""
    records = [
        MeasurementRecord("P1", "A1", 1, 10.0),
        MeasurementRecord("P2", "A1", 1, 10.4),
    ]
    return ComparisonData(records, ["P1", "P2"], ["A1"])


@pytest.fixture
def e1_cov():
    return CovarianceModel(np.eye(2), np.zeros((2, 2)))


@pytest.fixture
def e1_cov_systematic():
    return CovarianceModel(np.eye(2), np.diag([0.01, 0.04]))


@pytest.fixture
def e1_constraint():
    return Constraint({"P1": 0.5, "P2": 0.5}, 0.0)


@pytest.fixture
def e1_design(e1_data):
    return build_design(e1_data)


def rel_diff(a, b):
    """Max absolute deviation relative to the larger max magnitude."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b))) / scale
