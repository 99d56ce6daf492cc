import numpy as np
import pytest

from dsdesign.dataset import CovariateTable, standardize


def make_table(values, standardized=False, prefix="r"):
    values = np.asarray(values, float)
    if values.ndim == 1:
        values = values[:, None]
    width = len(str(values.shape[0]))
    ids = tuple(f"{prefix}{i:0{width}d}" for i in range(values.shape[0]))
    names = tuple(f"x{j + 1}" for j in range(values.shape[1]))
    table = CovariateTable(ids, names, values)
    if standardized:
        table, _ = standardize(table)
    return table


def as_standardized(values):
    """Wrap values already on the standardized scale without rescaling them."""
    table = make_table(values)
    return CovariateTable(table.row_ids, table.names, table.values, standardized=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
