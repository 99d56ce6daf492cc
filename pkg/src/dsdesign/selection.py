"""Stage 1: backward-stepwise greedy selection maximizing ln det S.

Starting from every row, the row whose removal leaves the largest centered
scatter determinant is dropped until ``target_size`` rows remain. Each step
scores all p candidates in O(p k^2) through rank-one downdates of (X'X)^-1.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import CovariateTable
from .errors import (
    AllCandidatesCollapseRank,
    InvalidConfig,
    NotPositiveDefinite,
    SingularInitialScatter,
    TargetTooLarge,
)
from .linalg import PIVOT_FLOOR, SpdState, centered_scatter, downdate, log_det_spd

logger = logging.getLogger(__name__)

# Scores closer than this count as tied; ties go to the smallest row id.
TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Selection:
    """Rows chosen for the trial plus their scatter statistics."""

    ids: tuple[str, ...]
    values: np.ndarray
    scatter_log_det: float
    trace: tuple[tuple[str, float], ...] | None = None

    @property
    def size(self) -> int:
        return len(self.ids)

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_table(cls, table: CovariateTable, ids: Sequence[str]) -> "Selection":
        ids = tuple(str(i) for i in ids)
        values = table.rows(ids)
        values.setflags(write=False)
        return cls(ids, values, scatter_log_det_of(values))

    def to_sidecar(self) -> dict:
        out = {"size": self.size, "scatter_log_det": self.scatter_log_det}
        if self.trace is not None:
            out["trace"] = [{"removed": rid, "scatter_log_det": v} for rid, v in self.trace]
        return out


def scatter_log_det_of(values: np.ndarray) -> float:
    """ln det of the centered scatter, -inf when it is singular."""
    if values.shape[0] < values.shape[1] + 1:
        return float("-inf")
    try:
        return log_det_spd(centered_scatter(values))
    except NotPositiveDefinite:
        return float("-inf")


@dataclass(frozen=True)
class SelectorConfig:
    target_size: int
    refresh_interval: int = 128
    pivot_floor: float = PIVOT_FLOOR

    def __post_init__(self):
        if self.target_size < 2 or self.target_size % 2:
            raise InvalidConfig(f"target_size must be an even integer >= 2, got {self.target_size}")
        if self.refresh_interval < 1:
            raise InvalidConfig("refresh_interval must be >= 1")
        if not self.pivot_floor > 0:
            raise InvalidConfig("pivot_floor must be positive")


@dataclass
class SelectorState:
    ids: list[str]
    values: np.ndarray
    xtx_state: SpdState
    mean: np.ndarray
    steps_since_refresh: int = 0
    pivot_floor: float = PIVOT_FLOOR
    trace: list[tuple[str, float]] = field(default_factory=list)

    @property
    def p(self) -> int:
        return len(self.ids)

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def centered_log_det(self) -> float:
        p = self.p
        r = p * float(self.mean @ self.xtx_state.inverse @ self.mean)
        if r >= 1.0 - self.pivot_floor:
            return float("-inf")
        return -self.k * np.log(p) + self.xtx_state.log_det + float(np.log1p(-r))

    def refresh(self) -> None:
        """Recompute X'X, its inverse and the mean from the active rows."""
        self.xtx_state = _xtx_state(self.values)
        self.mean = self.values.mean(axis=0)
        self.steps_since_refresh = 0


def _xtx_state(values: np.ndarray) -> SpdState:
    return SpdState.from_matrix(values.T @ values)


def init_state(table: CovariateTable, pivot_floor: float = PIVOT_FLOOR) -> SelectorState:
    values = np.array(table.values, dtype=float)
    if table.n_rows <= table.k:
        raise SingularInitialScatter(f"N={table.n_rows} rows cannot span k={table.k} covariates")
    try:
        xtx = _xtx_state(values)
    except NotPositiveDefinite as exc:
        raise SingularInitialScatter(str(exc)) from None
    return SelectorState(list(table.row_ids), values, xtx, values.mean(axis=0), pivot_floor=pivot_floor)


def _score_array(state: SelectorState) -> np.ndarray:
    """Centered ln det after removing each active row (vectorized recursions).

    For candidate x with u = A^-1 x and q = x'u:
      ln|A - xx'| = ln|A| + ln(1 - q)
      m' = (p m - x) / (p - 1)
      m'(A - xx')^-1 m' = m'A^-1 m' + (u'm')^2 / (1 - q)
      score = -k ln(p-1) + ln|A - xx'| + ln(1 - (p-1) m'(A - xx')^-1 m')
    """
    X = state.values
    p, k = X.shape
    inv = state.xtx_state.inverse
    U = X @ inv
    q = np.einsum("ij,ij->i", U, X)
    M = (p * state.mean - X) / (p - 1)
    MA = (p * (inv @ state.mean) - U) / (p - 1)
    mam = np.einsum("ij,ij->i", MA, M)
    um = np.einsum("ij,ij->i", U, M)
    floor = state.pivot_floor
    ok = q < 1.0 - floor
    one_minus_q = np.where(ok, 1.0 - q, 1.0)
    r = (p - 1) * (mam + um**2 / one_minus_q)
    ok &= r < 1.0 - floor
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = (
            -k * np.log(p - 1)
            + state.xtx_state.log_det
            + np.log(one_minus_q)
            + np.log1p(-np.where(ok, r, 0.0))
        )
    scores[~ok] = -np.inf
    return scores


def removal_scores(state: SelectorState) -> list[tuple[str, float]]:
    if state.p < state.k + 2:
        raise InvalidConfig(f"p={state.p} rows leave no removable candidate for k={state.k}")
    return list(zip(state.ids, _score_array(state).tolist()))


def pick_best(ids: Sequence[str], scores: np.ndarray) -> int:
    """Position of the maximal score; near-ties go to the smallest id."""
    best = float(np.max(scores))
    if best == -np.inf:
        raise AllCandidatesCollapseRank("every candidate removal makes the scatter singular")
    tied = np.flatnonzero(scores >= best - TIE_TOLERANCE)
    return int(min(tied, key=lambda i: ids[i]))


def remove_worst(state: SelectorState, refresh_interval: int = 128) -> SelectorState:
    """Drop the row whose removal least reduces ln det S; mutates and returns ``state``."""
    if state.p < state.k + 2:
        raise InvalidConfig(f"p={state.p} rows leave no removable candidate for k={state.k}")
    scores = _score_array(state)
    pos = pick_best(state.ids, scores)
    x = state.values[pos].copy()
    p = state.p
    state.xtx_state = downdate(state.xtx_state, x)
    state.mean = (p * state.mean - x) / (p - 1)
    rid = state.ids.pop(pos)
    state.values = np.delete(state.values, pos, axis=0)
    state.steps_since_refresh += 1
    if state.steps_since_refresh >= refresh_interval:
        state.refresh()
    state.trace.append((rid, float(scores[pos])))
    return state


def select_sample(
    table: CovariateTable, config: SelectorConfig, keep_trace: bool = False
) -> Selection:
    """Greedy backward elimination down to ``config.target_size`` rows.

    The returned ids keep the table's row order.
    """
    target = config.target_size
    if target > table.n_rows:
        raise TargetTooLarge(f"target size {target} exceeds table size {table.n_rows}")
    if target < table.k + 1:
        raise InvalidConfig(f"target size {target} < k + 1 = {table.k + 1}: scatter would be singular")
    if target == table.n_rows:
        return Selection.from_table(table, table.row_ids)

    state = init_state(table, config.pivot_floor)
    while state.p > target:
        remove_worst(state, config.refresh_interval)
        if state.p % 1000 == 0:
            logger.debug("stage 1: %d rows remain", state.p)

    keep = set(state.ids)
    ids = tuple(r for r in table.row_ids if r in keep)
    sel = Selection.from_table(table, ids)
    trace = tuple(state.trace) if keep_trace else None
    return Selection(sel.ids, sel.values, sel.scatter_log_det, trace)
