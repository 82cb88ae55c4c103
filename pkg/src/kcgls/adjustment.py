"""The systematic-effect covariance adjustment F A F' and its block form.

For the comparison layout (artefact block, participant block, optional
covariate block) the adjustment has closed-form blocks

    B = (w~' A~ w~) . 1_JJ          (artefact block, constant)
    C = 1_J w~' A~ (I - w~ 1_L')    (artefact x participant)
    D = (I - 1_L w~') A~ (I - w~ 1_L')   (participant block)

with zero rows/columns for covariate coefficients.  For diagonal A~ the
diagonal of D reduces to the classic per-participant variance inflation
(1 - w_l)^2 A_ll + sum_{g != l} w_g^2 A_gg.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import ProjectorF
from .model import EPS_PD


@dataclass(frozen=True)
class AdjustmentBlocks:
    """Block decomposition of the covariance adjustment.

    ``scalar_b`` is the common floor w~' A~ w~ filling the artefact
    block; ``d_block`` is the participant-effect adjustment.
    """

    b_block: np.ndarray
    c_block: np.ndarray
    d_block: np.ndarray
    scalar_b: float

    def assembled(self) -> np.ndarray:
        """The full (J+L) x (J+L) adjustment matrix [[B, C], [C', D]]."""
        return np.block([[self.b_block, self.c_block], [self.c_block.T, self.d_block]])


def covariance_adjustment(a_embedded: np.ndarray, proj: ProjectorF) -> np.ndarray:
    """Compute F A F' directly from the embedded covariance and projector.

    The result is symmetrized and checked to be PSD (it is a congruence
    of a PSD matrix, so any violation beyond rounding signals corrupted
    inputs).
    """
    a_embedded = np.asarray(a_embedded, dtype=float)
    out = proj.matrix @ a_embedded @ proj.matrix.T
    out = 0.5 * (out + out.T)
    eig = np.linalg.eigvalsh(out)
    if eig[0] < -EPS_PD * max(1.0, float(eig[-1])):
        raise ValueError(f"adjustment is not PSD (min eigenvalue {eig[0]})")
    return out


def theorem2_blocks(a_tilde: np.ndarray, w_tilde: np.ndarray, j_count: int) -> AdjustmentBlocks:
    """Closed-form blocks of the adjustment for the comparison layout."""
    a_tilde = np.asarray(a_tilde, dtype=float)
    w_tilde = np.asarray(w_tilde, dtype=float)
    ell = len(w_tilde)
    aw = a_tilde @ w_tilde
    scalar_b = float(w_tilde @ aw)
    b_block = scalar_b * np.ones((j_count, j_count))
    # Row vector w~' A~ (I - w~ 1'), identical in every row of C.
    c_row = aw - scalar_b * np.ones(ell)
    c_block = np.tile(c_row, (j_count, 1))
    centering = np.eye(ell) - np.outer(np.ones(ell), w_tilde)
    d_block = centering @ a_tilde @ centering.T
    return AdjustmentBlocks(
        b_block=b_block, c_block=c_block, d_block=d_block, scalar_b=scalar_b
    )


def d_element(a_tilde: np.ndarray, w_tilde: np.ndarray, lam: int, mu: int) -> float:
    """One element of the participant-block adjustment, without assembling it.

    D[l, m] = A[l, m] - sum_x A[l, x] w[x] - sum_g w[g] A[g, m]
              + sum_g sum_x w[g] A[g, x] w[x]
    """
    a_tilde = np.asarray(a_tilde, dtype=float)
    w_tilde = np.asarray(w_tilde, dtype=float)
    return float(
        a_tilde[lam, mu]
        - a_tilde[lam] @ w_tilde
        - w_tilde @ a_tilde[:, mu]
        + w_tilde @ a_tilde @ w_tilde
    )


def white_diagonal_variance(a_diag: np.ndarray, w_tilde: np.ndarray, lam: int) -> float:
    """Participant-effect variance inflation for uncorrelated random effects.

    For diagonal A~: (1 - w[l])^2 A[l, l] + sum_{g != l} w[g]^2 A[g, g].
    """
    a_diag = np.asarray(a_diag, dtype=float)
    w_tilde = np.asarray(w_tilde, dtype=float)
    others = w_tilde**2 * a_diag
    own = (1.0 - w_tilde[lam]) ** 2 * a_diag[lam]
    return float(own + others.sum() - others[lam])
