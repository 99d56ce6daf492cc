"""Monte Carlo comparison of the two-stage design against random sampling.

MSEs are analytic (diag of the inverse Fisher information); no responses are
simulated. Each replicate draws from its own generator seeded by
``(seed, replicate)``, so results do not depend on execution order.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .allocation import AllocatorConfig, allocate, allocate_restarts
from .dataset import CovariateTable
from .design import (
    DEFAULT_SIGMA,
    MseReport,
    fisher_from_groups,
    fisher_information,
    parameter_mses,
)
from .errors import InvalidConfig, SampleTooLarge, SingularInformation, UnstandardizedTable
from .selection import SelectorConfig, select_sample

logger = logging.getLogger(__name__)

MAX_REDRAWS = 1000


@dataclass(frozen=True)
class BaselineResult:
    report: MseReport
    discarded: int


def _replicate(values: np.ndarray, sample_size: int, sigma: float, seed: int, rep: int):
    rng = np.random.default_rng(np.random.SeedSequence([seed, rep]))
    n = sample_size // 2
    for discarded in range(MAX_REDRAWS):
        rows = rng.choice(values.shape[0], size=sample_size, replace=False)
        try:
            info = fisher_from_groups(values[rows[:n]], values[rows[n:]], sigma)
        except SingularInformation:
            continue
        return np.diag(info.inverse), discarded
    raise SingularInformation(f"replicate {rep}: {MAX_REDRAWS} consecutive singular draws")


def random_baseline_detail(
    table: CovariateTable,
    sample_size: int,
    replicates: int,
    sigma: float = DEFAULT_SIGMA,
    seed: int = 0,
    workers: int = 1,
) -> BaselineResult:
    if not table.standardized:
        raise UnstandardizedTable("standardize the covariate table first")
    if sample_size > table.n_rows:
        raise SampleTooLarge(f"sample size {sample_size} exceeds table size {table.n_rows}")
    if sample_size < 2 or sample_size % 2:
        raise InvalidConfig(f"sample size must be even and >= 2, got {sample_size}")
    if replicates < 1:
        raise InvalidConfig("replicates must be >= 1")
    values = table.values

    def run(rep):
        return _replicate(values, sample_size, sigma, seed, rep)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(replicates)))
    else:
        results = [run(rep) for rep in range(replicates)]
    diag = np.mean([d for d, _ in results], axis=0)
    discarded = sum(c for _, c in results)
    if discarded:
        logger.info("random baseline: redrew %d singular replicates", discarded)
    report = MseReport.from_vector(diag, float(sigma), sample_size // 2, table.k)
    return BaselineResult(report, discarded)


def random_baseline(
    table: CovariateTable,
    sample_size: int,
    replicates: int,
    sigma: float = DEFAULT_SIGMA,
    seed: int = 0,
    workers: int = 1,
) -> MseReport:
    """Average analytic MSEs of random size-2n samples split at random."""
    return random_baseline_detail(table, sample_size, replicates, sigma, seed, workers).report


@dataclass(frozen=True)
class ComparisonReport:
    random_mse: MseReport
    dsd_mse: MseReport
    replicates: int
    sigma: float
    beta_ratio: tuple[float, ...]
    discarded: int = 0
    scatter_log_det: float | None = None
    criterion: float | None = None

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "replicates": self.replicates,
            "discarded_replicates": self.discarded,
            "random": self.random_mse.to_dict(),
            "dsd": self.dsd_mse.to_dict(),
            "beta_ratio": list(self.beta_ratio),
            "dsd_scatter_log_det": self.scatter_log_det,
            "dsd_balance_criterion": self.criterion,
        }

    def to_text(self) -> str:
        k = len(self.beta_ratio)
        header = ["", "alpha", *(f"beta_{j + 1}" for j in range(k))]
        rows = [
            ["random sampling", self.random_mse.alpha, *self.random_mse.beta],
            ["DSD", self.dsd_mse.alpha, *self.dsd_mse.beta],
            ["DSD / random", self.dsd_mse.alpha / self.random_mse.alpha, *self.beta_ratio],
        ]
        cells = [header] + [
            [r[0]] + [f"{v:.2E}" if i < 2 else f"{v:.3f}" for v in r[1:]]
            for i, r in enumerate(rows)
        ]
        widths = [max(len(row[c]) for row in cells) for c in range(len(header))]
        lines = [
            "  ".join(cell.ljust(w) if c == 0 else cell.rjust(w) for c, (cell, w) in enumerate(zip(row, widths)))
            for row in cells
        ]
        lines.append(f"sigma={self.sigma:g}  2n={2 * self.dsd_mse.n}  replicates={self.replicates}")
        return "\n".join(lines) + "\n"


def _mean_report(reports: list[MseReport]) -> MseReport:
    first = reports[0]
    diag = np.mean([r.as_vector() for r in reports], axis=0)
    return MseReport.from_vector(diag, first.sigma, first.n, first.k)


def compare(
    table: CovariateTable,
    sample_size: int,
    sigma: float = DEFAULT_SIGMA,
    replicates: int = 10_000,
    selector_cfg: SelectorConfig | None = None,
    allocator_cfg: AllocatorConfig | None = None,
    seed: int = 0,
    workers: int = 1,
    average_restarts: bool = False,
) -> ComparisonReport:
    """Run the two-stage design once and the random baseline over ``replicates``."""
    selector_cfg = selector_cfg or SelectorConfig(sample_size)
    if selector_cfg.target_size != sample_size:
        raise InvalidConfig("selector target size must equal sample_size")
    allocator_cfg = allocator_cfg or AllocatorConfig(seed=seed)
    if not table.standardized:
        raise UnstandardizedTable("standardize the covariate table first")
    if sample_size > table.n_rows:
        raise SampleTooLarge(f"sample size {sample_size} exceeds table size {table.n_rows}")

    selection = select_sample(table, selector_cfg)
    if average_restarts:
        allocations = allocate_restarts(selection, allocator_cfg)
        dsd = _mean_report(
            [parameter_mses(fisher_information(a, table, sigma)) for a in allocations]
        )
        criterion = min(a.criterion for a in allocations)
    else:
        allocation = allocate(selection, allocator_cfg)
        dsd = parameter_mses(fisher_information(allocation, table, sigma))
        criterion = allocation.criterion

    baseline = random_baseline_detail(table, sample_size, replicates, sigma, seed, workers)
    rnd = baseline.report
    ratio = tuple(d / r for d, r in zip(dsd.beta, rnd.beta))
    return ComparisonReport(
        rnd, dsd, replicates, float(sigma), ratio, baseline.discarded,
        selection.scatter_log_det, criterion,
    )
