"""Covariate tables: CSV ingestion, standardization, synthetic populations."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from os import PathLike
from typing import BinaryIO, Sequence

import numpy as np

from .errors import (
    ConstantColumn,
    DuplicateRowId,
    EmptyInput,
    NoCovariateColumns,
    NonPositiveDefiniteCorrelation,
    NotPositiveDefinite,
    UnknownId,
)
from .linalg import _cholesky

logger = logging.getLogger(__name__)

SD_FLOOR = 1e-12

# Marginal moments of the four covariates in the paper's EMR testbed.
PAPER_COVARIATES = ("age", "bmi", "bp_diastolic", "tri")
PAPER_MEANS = (58.0, 30.19, 77.6, 117.23)
PAPER_STD_DEVS = (13.5, 7.45, 11.76, 71.43)
PAPER_N_ROWS = 11080


@dataclass(frozen=True)
class StandardizationParams:
    names: tuple[str, ...]
    means: np.ndarray
    std_devs: np.ndarray

    def __post_init__(self):
        if np.any(self.std_devs <= SD_FLOOR):
            raise ValueError("standard deviations must exceed 1e-12")

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "means": [float(v) for v in self.means],
            "std_devs": [float(v) for v in self.std_devs],
        }


@dataclass(frozen=True, eq=False)
class CovariateTable:
    """N x k covariate records keyed by unique row identifiers."""

    row_ids: tuple[str, ...]
    names: tuple[str, ...]
    values: np.ndarray
    standardized: bool = False
    params: StandardizationParams | None = None
    excluded_count: int = field(default=0, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("values must be a 2-D array")
        object.__setattr__(self, "row_ids", tuple(str(r) for r in self.row_ids))
        object.__setattr__(self, "names", tuple(self.names))
        if values.shape[0] == 0:
            raise EmptyInput("table has no rows")
        if values.shape[1] == 0 or not self.names:
            raise NoCovariateColumns("table has no covariate columns")
        if values.shape != (len(self.row_ids), len(self.names)):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"{len(self.row_ids)} ids x {len(self.names)} names"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite; exclude incomplete rows first")
        if len(set(self.row_ids)) != len(self.row_ids):
            seen = set()
            dup = next(r for r in self.row_ids if r in seen or seen.add(r))
            raise DuplicateRowId(f"duplicate row id {dup!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @cached_property
    def index(self) -> dict[str, int]:
        return {rid: i for i, rid in enumerate(self.row_ids)}

    def positions(self, ids: Sequence[str]) -> np.ndarray:
        index = self.index
        try:
            return np.array([index[str(r)] for r in ids], dtype=np.intp)
        except KeyError as exc:
            raise UnknownId(f"row id {exc.args[0]!r} not in table") from None

    def rows(self, ids: Sequence[str]) -> np.ndarray:
        return self.values[self.positions(ids)]

    def subset(self, ids: Sequence[str]) -> "CovariateTable":
        return replace(self, row_ids=tuple(ids), values=self.rows(ids), excluded_count=0)


def _parse_cell(cell: str) -> float | None:
    cell = cell.strip()
    if not cell:
        return None
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def load_csv(source: str | PathLike | BinaryIO) -> CovariateTable:
    """Read a covariate table from UTF-8 CSV.

    The first column holds row identifiers, the remaining columns numeric
    covariates. Rows with an empty, unparseable or non-finite covariate cell
    (or the wrong number of cells) are dropped; the count is kept in
    ``excluded_count``.
    """
    if hasattr(source, "read"):
        raw = source.read()
    else:
        with open(source, "rb") as fh:
            raw = fh.read()
    text = raw.decode("utf-8-sig") if isinstance(raw, bytes) else raw
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None or not any(h.strip() for h in header):
        raise EmptyInput("CSV has no header row")
    names = [h.strip() for h in header[1:]]
    if not names:
        raise NoCovariateColumns("CSV header has no covariate columns")

    ids: list[str] = []
    rows: list[list[float]] = []
    excluded = 0
    seen: set[str] = set()
    for line in reader:
        if not line or (len(line) == 1 and not line[0].strip()):
            continue
        rid = line[0].strip()
        if rid in seen:
            raise DuplicateRowId(f"duplicate row id {rid!r}")
        seen.add(rid)
        cells = [_parse_cell(c) for c in line[1:]]
        if not rid or len(cells) != len(names) or any(c is None for c in cells):
            excluded += 1
            continue
        ids.append(rid)
        rows.append(cells)
    if not rows:
        raise EmptyInput(f"CSV has no complete data rows ({excluded} excluded)")
    if excluded:
        logger.info("excluded %d incomplete rows", excluded)
    return CovariateTable(tuple(ids), tuple(names), np.array(rows), excluded_count=excluded)


def write_csv(table: CovariateTable, dest: BinaryIO) -> None:
    """Write ``table`` with values at 17 significant digits (exact round trip)."""
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", *table.names])
    for rid, row in zip(table.row_ids, table.values):
        writer.writerow([rid, *(f"{v:.17g}" for v in row)])
    dest.write(buf.getvalue().encode("utf-8"))


def standardize(table: CovariateTable) -> tuple[CovariateTable, StandardizationParams]:
    """Center each column and scale it to unit sample standard deviation."""
    values = table.values
    means = values.mean(axis=0)
    if table.n_rows < 2:
        raise ConstantColumn(f"column {table.names[0]!r} is constant (single row)")
    sds = values.std(axis=0, ddof=1)
    for name, sd in zip(table.names, sds):
        if not sd > SD_FLOOR:
            raise ConstantColumn(f"column {name!r} has standard deviation {sd:.3e}")
    scaled = (values - means) / sds
    # second centering pass removes the O(eps * |mean|) residue of the first
    scaled -= scaled.mean(axis=0)
    params = StandardizationParams(table.names, means, sds)
    out = replace(table, values=scaled, standardized=True, params=params)
    return out, params


@dataclass(frozen=True)
class SynthSpec:
    n_rows: int
    means: tuple[float, ...]
    std_devs: tuple[float, ...]
    correlation: np.ndarray | None = None
    seed: int = 0
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n_rows < 1:
            raise ValueError("n_rows must be positive")
        if len(self.means) != len(self.std_devs) or not self.means:
            raise ValueError("means and std_devs must be non-empty and equal length")
        if any(not s > 0 for s in self.std_devs):
            raise ValueError("std_devs must be positive")
        if self.names is not None and len(self.names) != len(self.means):
            raise ValueError("names must match the number of covariates")

    @classmethod
    def paper(cls, seed: int = 0, n_rows: int = PAPER_N_ROWS) -> "SynthSpec":
        return cls(n_rows, PAPER_MEANS, PAPER_STD_DEVS, None, seed, PAPER_COVARIATES)


def synthesize(spec: SynthSpec) -> CovariateTable:
    """Draw ``spec.n_rows`` iid multivariate normal rows."""
    k = len(spec.means)
    corr = np.eye(k) if spec.correlation is None else np.asarray(spec.correlation, float)
    if (
        corr.shape != (k, k)
        or not np.allclose(np.diag(corr), 1.0, rtol=0, atol=1e-12)
        or not np.array_equal(corr, corr.T)
    ):
        raise NonPositiveDefiniteCorrelation("correlation must be symmetric with unit diagonal")
    try:
        chol = _cholesky(corr)
    except NotPositiveDefinite as exc:
        raise NonPositiveDefiniteCorrelation(str(exc)) from None
    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal((spec.n_rows, k))
    values = np.asarray(spec.means) + (z @ chol.T) * np.asarray(spec.std_devs)
    width = len(str(spec.n_rows))
    ids = tuple(f"r{i:0{width}d}" for i in range(1, spec.n_rows + 1))
    names = spec.names or tuple(f"x{j + 1}" for j in range(k))
    return CovariateTable(ids, names, values)
