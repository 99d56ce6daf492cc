"""Stage 2: split a selection into balanced control/treatment halves.

Random balanced split, then best-improvement pairwise exchange on

    ||mean_plus - mean_minus||^2 + ||S_plus - S_minus||_F^2

(non-centered group scatters) until no swap lowers it by more than
``improvement_floor``. Several seeded restarts; the lowest final criterion wins.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import Allocation
from .errors import InvalidConfig, OddSelectionSize
from .linalg import symmetrize
from .selection import Selection


@dataclass(frozen=True)
class AllocatorConfig:
    restarts: int = 10
    max_exchanges: int = 10_000
    improvement_floor: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1 or self.max_exchanges < 1:
            raise InvalidConfig("restarts and max_exchanges must be positive")
        if not self.improvement_floor > 0:
            raise InvalidConfig("improvement_floor must be positive")
        if self.seed < 0:
            raise InvalidConfig("seed must be non-negative")


@dataclass
class BalanceState:
    control_ids: list[str]
    treatment_ids: list[str]
    x_minus: np.ndarray
    x_plus: np.ndarray
    mean_minus: np.ndarray
    mean_plus: np.ndarray
    s_minus: np.ndarray
    s_plus: np.ndarray
    criterion: float
    selection_ids: tuple[str, ...] | None = None

    @property
    def n(self) -> int:
        return len(self.control_ids)

    @classmethod
    def from_groups(
        cls,
        control_ids, treatment_ids, x_minus, x_plus, selection_ids=None,
    ) -> "BalanceState":
        x_minus = np.array(x_minus, dtype=float)
        x_plus = np.array(x_plus, dtype=float)
        n = x_minus.shape[0]
        state = cls(
            list(control_ids), list(treatment_ids), x_minus, x_plus,
            x_minus.mean(axis=0), x_plus.mean(axis=0),
            symmetrize(x_minus.T @ x_minus / n), symmetrize(x_plus.T @ x_plus / n),
            0.0, selection_ids,
        )
        state.criterion = balance_criterion(state)
        return state

    def allocation(self, **diagnostics) -> Allocation:
        return Allocation(
            tuple(self.control_ids), tuple(self.treatment_ids), self.selection_ids, **diagnostics
        )


def balance_criterion(state: BalanceState) -> float:
    gap = state.mean_plus - state.mean_minus
    sgap = state.s_plus - state.s_minus
    return float(gap @ gap + np.sum(sgap * sgap))


def _check_even(size: int) -> int:
    if size % 2:
        raise OddSelectionSize(f"selection has odd size {size}")
    if size < 2:
        raise OddSelectionSize("selection must hold at least two rows")
    return size // 2


def restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, restart]))


def initial_split(selection: Selection, seed: int | np.random.Generator) -> BalanceState:
    """Uniformly random balanced partition of ``selection``."""
    n = _check_even(selection.size)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perm = rng.permutation(selection.size)
    ctl, trt = np.sort(perm[:n]), np.sort(perm[n:])
    ids = selection.ids
    return BalanceState.from_groups(
        [ids[i] for i in ctl], [ids[i] for i in trt],
        selection.values[ctl], selection.values[trt], selection.ids,
    )


def exchange_criteria(state: BalanceState) -> np.ndarray:
    """n x n matrix of criteria after swapping control row i with treatment row j.

    With u = x_i - x_j the mean gap moves by 2u/n and the scatter gap by
    2(x_i x_i' - x_j x_j')/n; expanding both squared norms leaves the cross
    product x_i'x_j as the only term coupling i and j.
    """
    n = state.n
    xm, xp = state.x_minus, state.x_plus
    gap = state.mean_plus - state.mean_minus
    sgap = state.s_plus - state.s_minus
    nm, npl = np.einsum("ij,ij->i", xm, xm), np.einsum("ij,ij->i", xp, xp)
    dm = np.einsum("ij,jk,ik->i", xm, sgap, xm)
    dp = np.einsum("ij,jk,ik->i", xp, sgap, xp)
    cross = xm @ xp.T
    row = 4.0 / n * (xm @ gap + dm) + 4.0 / n**2 * (nm + nm**2)
    col = -4.0 / n * (xp @ gap + dp) + 4.0 / n**2 * (npl + npl**2)
    return state.criterion + row[:, None] + col[None, :] - 8.0 / n**2 * (cross + cross**2)


def best_exchange(
    state: BalanceState, improvement_floor: float = 1e-12
) -> tuple[str, str, float] | None:
    """Best improving (control_id, treatment_id, new_criterion), or None at a local minimum."""
    pair = _best_pair(state, improvement_floor)
    if pair is None:
        return None
    i, j, value = pair
    return state.control_ids[i], state.treatment_ids[j], value


def _best_pair(state: BalanceState, improvement_floor: float) -> tuple[int, int, float] | None:
    crit = exchange_criteria(state)
    flat = int(np.argmin(crit))
    i, j = divmod(flat, state.n)
    value = float(crit[i, j])
    if value < state.criterion - improvement_floor:
        return i, j, value
    return None


def apply_exchange(state: BalanceState, i: int, j: int) -> BalanceState:
    """Swap control row ``i`` with treatment row ``j`` in place."""
    n = state.n
    xi, xj = state.x_minus[i].copy(), state.x_plus[j].copy()
    state.x_minus[i], state.x_plus[j] = xj, xi
    state.control_ids[i], state.treatment_ids[j] = state.treatment_ids[j], state.control_ids[i]
    state.mean_minus = state.mean_minus + (xj - xi) / n
    state.mean_plus = state.mean_plus + (xi - xj) / n
    outer = (np.outer(xi, xi) - np.outer(xj, xj)) / n
    state.s_plus = symmetrize(state.s_plus + outer)
    state.s_minus = symmetrize(state.s_minus - outer)
    state.criterion = balance_criterion(state)
    return state


def local_search(state: BalanceState, config: AllocatorConfig) -> tuple[BalanceState, int]:
    exchanges = 0
    while exchanges < config.max_exchanges:
        pair = _best_pair(state, config.improvement_floor)
        if pair is None:
            break
        apply_exchange(state, pair[0], pair[1])
        exchanges += 1
    return state, exchanges


def allocate_restarts(selection: Selection, config: AllocatorConfig) -> list[Allocation]:
    """One locally optimal allocation per restart, in restart order."""
    _check_even(selection.size)
    results = []
    for r in range(config.restarts):
        state = initial_split(selection, restart_rng(config.seed, r))
        state, exchanges = local_search(state, config)
        results.append(state.allocation(criterion=state.criterion, restart=r, exchanges=exchanges))
    return results


def allocate(selection: Selection, config: AllocatorConfig = AllocatorConfig()) -> Allocation:
    results = allocate_restarts(selection, config)
    # min() keeps the first of equal criteria, i.e. the lowest restart index
    return min(results, key=lambda a: a.criterion)
