"""Small dense symmetric linear algebra.

Symmetric matrices are plain 2-D ``numpy`` arrays; every matrix returned from
this module is exactly symmetric. Determinants are always carried as natural
logarithms so that thousands of multiplicative downdates cannot overflow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import DegenerateCentering, NotPositiveDefinite, RankCollapse

PIVOT_FLOOR = 1e-12


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _cholesky(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    try:
        chol = la.cholesky(a, lower=True, check_finite=True)
    except (la.LinAlgError, ValueError) as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    pivots = np.diag(chol) ** 2
    if np.any(pivots <= PIVOT_FLOOR):
        raise NotPositiveDefinite(
            f"factorization pivot {pivots.min():.3e} <= {PIVOT_FLOOR:g}"
        )
    return chol


def log_det_spd(a: np.ndarray) -> float:
    """Natural log of the determinant of a symmetric positive definite matrix."""
    chol = _cholesky(a)
    return float(2.0 * np.log(np.diag(chol)).sum())


def inverse_spd(a: np.ndarray) -> np.ndarray:
    chol = _cholesky(a)
    inv = la.cho_solve((chol, True), np.eye(chol.shape[0]))
    return symmetrize(inv)


@dataclass(frozen=True)
class SpdState:
    """Log-determinant and inverse of an SPD matrix, updated in tandem."""

    log_det: float
    inverse: np.ndarray

    @classmethod
    def from_matrix(cls, a: np.ndarray) -> "SpdState":
        chol = _cholesky(a)
        inv = la.cho_solve((chol, True), np.eye(chol.shape[0]))
        return cls(float(2.0 * np.log(np.diag(chol)).sum()), symmetrize(inv))

    @property
    def dim(self) -> int:
        return self.inverse.shape[0]


def _quad(state: SpdState, v: np.ndarray) -> tuple[np.ndarray, float]:
    v = np.asarray(v, dtype=float)
    if v.shape != (state.dim,):
        raise ValueError(f"vector of length {state.dim} expected, got shape {v.shape}")
    u = state.inverse @ v
    q = float(v @ u)
    if q >= 1.0 - PIVOT_FLOOR:
        raise RankCollapse(f"v' A^-1 v = {q:.17g}; removing v makes A - vv' singular")
    return u, q


def downdate_log_det(state: SpdState, v: np.ndarray) -> float:
    """ln det(A - v v') by the matrix determinant lemma."""
    _, q = _quad(state, v)
    return state.log_det + float(np.log1p(-q))


def downdate_inverse(state: SpdState, v: np.ndarray) -> np.ndarray:
    """(A - v v')^-1 by Sherman-Morrison."""
    u, q = _quad(state, v)
    return symmetrize(state.inverse + np.outer(u, u) / (1.0 - q))


def downdate(state: SpdState, v: np.ndarray) -> SpdState:
    u, q = _quad(state, v)
    return SpdState(
        state.log_det + float(np.log1p(-q)),
        symmetrize(state.inverse + np.outer(u, u) / (1.0 - q)),
    )


def centered_scatter_log_det(state: SpdState, mean: np.ndarray, count: int) -> float:
    """ln det(X'X / count - mean mean') given the SPD state of X'X.

    Uses det(B - c c') = det(B) (1 - c' B^-1 c) with B = X'X / count and
    c = mean, so no k x k factorization is needed.
    """
    mean = np.asarray(mean, dtype=float)
    dim = state.dim
    if count < dim + 1:
        raise DegenerateCentering(f"count {count} < dim + 1 = {dim + 1}")
    r = count * float(mean @ state.inverse @ mean)
    if r >= 1.0 - PIVOT_FLOOR:
        raise DegenerateCentering(f"count * m' A^-1 m = {r:.17g} >= 1")
    return -dim * np.log(count) + state.log_det + float(np.log1p(-r))


def centered_scatter(values: np.ndarray) -> np.ndarray:
    """Sample covariance with divisor p: X'X/p - mean mean'."""
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=0)
    centered = values - mean
    return symmetrize(centered.T @ centered / values.shape[0])
