"""Regression design matrix, Fisher information and analytic MSEs.

Parameters are always ordered ``delta, alpha, beta_1..beta_k, gamma_1..gamma_k``
for the model

    y = delta + alpha z + sum_j beta_j z x_j + sum_j gamma_j x_j + eps,

with z = -1 for control rows and z = +1 for treatment rows.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import CovariateTable
from .errors import (
    DegenerateSelection,
    NotPositiveDefinite,
    SampleTooSmall,
    SingularInformation,
    SingularScatter,
    UnstandardizedTable,
)
from .linalg import centered_scatter, inverse_spd, log_det_spd, symmetrize
from .selection import Selection

DEFAULT_SIGMA = 0.3


@dataclass(frozen=True)
class Allocation:
    """Partition of a selection into equal control and treatment halves."""

    control_ids: tuple[str, ...]
    treatment_ids: tuple[str, ...]
    selection_ids: tuple[str, ...] | None = None
    criterion: float | None = None
    restart: int | None = None
    exchanges: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "control_ids", tuple(map(str, self.control_ids)))
        object.__setattr__(self, "treatment_ids", tuple(map(str, self.treatment_ids)))
        if len(self.control_ids) != len(self.treatment_ids):
            raise ValueError(
                f"groups differ in size: {len(self.control_ids)} control vs "
                f"{len(self.treatment_ids)} treatment"
            )
        both = set(self.control_ids) | set(self.treatment_ids)
        if len(both) != 2 * len(self.control_ids):
            raise ValueError("control and treatment ids must be distinct")
        if self.selection_ids is not None and both != set(self.selection_ids):
            raise ValueError("allocation does not partition its selection")

    @property
    def n(self) -> int:
        return len(self.control_ids)

    def swapped(self) -> "Allocation":
        return Allocation(self.treatment_ids, self.control_ids, self.selection_ids)

    def groups(self, order: Sequence[str] | None = None) -> list[tuple[str, str]]:
        """(id, "control"/"treatment") pairs, in ``order`` if given."""
        label = {i: "control" for i in self.control_ids}
        label.update({i: "treatment" for i in self.treatment_ids})
        ids = order if order is not None else (*self.control_ids, *self.treatment_ids)
        return [(i, label[i]) for i in ids]

    def to_sidecar(self) -> dict:
        return {
            "n": self.n,
            "criterion": self.criterion,
            "restart": self.restart,
            "exchanges": self.exchanges,
        }


def _group_values(allocation: Allocation, table: CovariateTable) -> tuple[np.ndarray, np.ndarray]:
    if not table.standardized:
        raise UnstandardizedTable("standardize the covariate table before building a design")
    return table.rows(allocation.control_ids), table.rows(allocation.treatment_ids)


def build_design_matrix(allocation: Allocation, table: CovariateTable) -> np.ndarray:
    """2n x (2k+2) matrix; control rows [1, -1, -x, x] first, then treatment rows [1, 1, x, x]."""
    xm, xp = _group_values(allocation, table)
    n = allocation.n
    ones = np.ones((n, 1))
    control = np.hstack([ones, -ones, -xm, xm])
    treatment = np.hstack([ones, ones, xp, xp])
    return np.vstack([control, treatment])


@dataclass(frozen=True)
class FisherInfo:
    matrix: np.ndarray
    inverse: np.ndarray
    sigma: float
    n: int
    k: int


def fisher_blocks(xm: np.ndarray, xp: np.ndarray) -> np.ndarray:
    """M'M / n assembled from group means and non-centered group scatters."""
    n, k = xm.shape
    mean_m, mean_p = xm.mean(axis=0), xp.mean(axis=0)
    s_m, s_p = xm.T @ xm / n, xp.T @ xp / n
    diff, total = mean_p - mean_m, mean_p + mean_m
    dim = 2 * k + 2
    g = np.zeros((dim, dim))
    b, c = slice(2, 2 + k), slice(2 + k, dim)
    g[0, 0] = g[1, 1] = 2.0
    g[0, b] = g[b, 0] = diff
    g[0, c] = g[c, 0] = total
    g[1, b] = g[b, 1] = total
    g[1, c] = g[c, 1] = diff
    g[b, b] = g[c, c] = symmetrize(s_p + s_m)
    g[b, c] = symmetrize(s_p - s_m)
    g[c, b] = g[b, c]
    return g


def fisher_from_groups(xm: np.ndarray, xp: np.ndarray, sigma: float) -> FisherInfo:
    n, k = xm.shape
    if xp.shape != xm.shape:
        raise ValueError("control and treatment groups must have equal shapes")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if 2 * n < 2 * k + 2:
        raise SampleTooSmall(f"2n={2 * n} rows cannot identify {2 * k + 2} parameters")
    g = fisher_blocks(xm, xp)
    try:
        g_inv = inverse_spd(g)
    except NotPositiveDefinite as exc:
        raise SingularInformation(str(exc)) from None
    scale = n / sigma**2
    return FisherInfo(g * scale, g_inv / scale, float(sigma), n, k)


def fisher_information(
    allocation: Allocation, table: CovariateTable, sigma: float = DEFAULT_SIGMA
) -> FisherInfo:
    xm, xp = _group_values(allocation, table)
    return fisher_from_groups(xm, xp, sigma)


@dataclass(frozen=True)
class MseReport:
    delta: float
    alpha: float
    beta: tuple[float, ...]
    gamma: tuple[float, ...]
    sigma: float
    n: int
    k: int

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "alpha": self.alpha,
            "beta": list(self.beta),
            "gamma": list(self.gamma),
            "sigma": self.sigma,
            "n": self.n,
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MseReport":
        return cls(
            float(d["delta"]), float(d["alpha"]), tuple(map(float, d["beta"])),
            tuple(map(float, d["gamma"])), float(d["sigma"]), int(d["n"]), int(d["k"]),
        )

    def as_vector(self) -> np.ndarray:
        return np.array([self.delta, self.alpha, *self.beta, *self.gamma])

    @classmethod
    def from_vector(cls, v: np.ndarray, sigma: float, n: int, k: int) -> "MseReport":
        v = [float(x) for x in v]
        return cls(v[0], v[1], tuple(v[2 : 2 + k]), tuple(v[2 + k :]), sigma, n, k)


def parameter_mses(info: FisherInfo) -> MseReport:
    return MseReport.from_vector(np.diag(info.inverse), info.sigma, info.n, info.k)


def cov_alpha_beta_from_moments(
    mean: np.ndarray, scatter: np.ndarray, sigma: float, sample_size: int
) -> np.ndarray:
    """Approximate Cov(alpha_hat, beta_hat) of a perfectly balanced design."""
    mean = np.asarray(mean, dtype=float)
    try:
        s_inv = inverse_spd(np.atleast_2d(scatter))
    except NotPositiveDefinite as exc:
        raise SingularScatter(str(exc)) from None
    w = s_inv @ mean
    k = mean.shape[0]
    out = np.empty((k + 1, k + 1))
    out[0, 0] = 1.0 + mean @ w
    out[0, 1:] = out[1:, 0] = -w
    out[1:, 1:] = s_inv
    return symmetrize(out * (sigma**2 / sample_size))


def cov_alpha_beta(selection: Selection, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    values = selection.values
    return cov_alpha_beta_from_moments(
        values.mean(axis=0), centered_scatter(values), sigma, selection.size
    )


def d_criterion(selection: Selection) -> float:
    """ln det of the full-sample covariance S = X'X/(2n) - mean mean'."""
    if selection.size < selection.k + 1:
        raise DegenerateSelection(f"{selection.size} rows cannot span k={selection.k} covariates")
    try:
        return log_det_spd(centered_scatter(selection.values))
    except NotPositiveDefinite as exc:
        raise DegenerateSelection(str(exc)) from None
