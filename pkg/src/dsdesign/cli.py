"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 data or numeric error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import dataset
from .allocation import AllocatorConfig, allocate
from .dataset import SynthSpec, load_csv, standardize, synthesize, write_csv
from .design import DEFAULT_SIGMA, Allocation, fisher_information, parameter_mses
from .errors import DesignError
from .evaluation import compare
from .selection import Selection, SelectorConfig, select_sample


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be a non-negative integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dsdesign", description="D-optimal selection and allocation of trial cohorts from covariate tables.")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic covariate CSV")
    p.add_argument("--output", required=True)
    p.add_argument("--rows", type=_positive_int, default=dataset.PAPER_N_ROWS)
    p.add_argument("--means", type=_floats, default=dataset.PAPER_MEANS)
    p.add_argument("--std-devs", type=_floats, default=dataset.PAPER_STD_DEVS)
    p.add_argument("--names", default=",".join(dataset.PAPER_COVARIATES))
    p.add_argument("--correlation", help="CSV file holding a k x k correlation matrix (no header)")
    p.add_argument("--seed", type=_seed, default=0)

    p = sub.add_parser("standardize", help="standardize a covariate CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--params", help="standardization params JSON (default: <output stem>.params.json)")

    p = sub.add_parser("select", help="stage 1: greedy D-optimal selection")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--sample-size", type=_positive_int, required=True)
    p.add_argument("--refresh-interval", type=_positive_int, default=128)
    p.add_argument("--trace", action="store_true", help="include the removal trace in the JSON sidecar")

    p = sub.add_parser("allocate", help="stage 2: balanced treatment/control split")
    p.add_argument("--input", required=True, help="covariate table CSV")
    p.add_argument("--selection", required=True, help="selection CSV from `select`")
    p.add_argument("--output", required=True)
    p.add_argument("--restarts", type=_positive_int, default=10)
    p.add_argument("--max-exchanges", type=_positive_int, default=10_000)
    p.add_argument("--seed", type=_seed, default=0)

    p = sub.add_parser("evaluate", help="analytic parameter MSEs of an allocation")
    p.add_argument("--input", required=True, help="covariate table CSV")
    p.add_argument("--allocation", required=True, help="allocation CSV from `allocate`")
    p.add_argument("--output", help="MSE report JSON (default: stdout)")
    p.add_argument("--sigma", type=_positive_float, default=DEFAULT_SIGMA)

    p = sub.add_parser("compare", help="two-stage design vs random sampling")
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="report path (default: stdout)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--sample-size", type=_positive_int, required=True)
    p.add_argument("--sigma", type=_positive_float, default=DEFAULT_SIGMA)
    p.add_argument("--replicates", type=_positive_int, default=10_000)
    p.add_argument("--restarts", type=_positive_int, default=10)
    p.add_argument("--refresh-interval", type=_positive_int, default=128)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    p.add_argument("--average-restarts", action="store_true",
                   help="average DSD MSEs over every allocator restart")
    return parser


def atomic_write(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2) + "\n").encode("utf-8")


def _csv_bytes(rows) -> bytes:
    buf = io.StringIO(newline="")
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue().encode("utf-8")


def sidecar_path(output: str | Path) -> Path:
    return Path(output).with_suffix(".json")


def _emit(output: str | None, data: bytes) -> None:
    if output:
        atomic_write(output, data)
    else:
        sys.stdout.write(data.decode("utf-8"))


def _read_columns(path: str, expected: tuple[str, ...]) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or tuple(c.strip() for c in rows[0][: len(expected)]) != expected:
        raise dataset.EmptyInput(f"{path}: expected header {','.join(expected)}")
    return [[c.strip() for c in r] for r in rows[1:]]


def _load_standardized(path: str):
    table, _ = standardize(load_csv(path))
    return table


def read_selection(path: str, table) -> Selection:
    ids = [r[0] for r in _read_columns(path, ("id",))]
    return Selection.from_table(table, ids)


def read_allocation(path: str) -> Allocation:
    groups = {"control": [], "treatment": []}
    for row in _read_columns(path, ("id", "group")):
        if len(row) < 2 or row[1] not in groups:
            raise dataset.EmptyInput(f"{path}: group must be 'control' or 'treatment'")
        groups[row[1]].append(row[0])
    return Allocation(tuple(groups["control"]), tuple(groups["treatment"]))


def _cmd_synth(args) -> None:
    names = tuple(n.strip() for n in args.names.split(","))
    corr = None
    if args.correlation:
        corr = np.loadtxt(args.correlation, delimiter=",", ndmin=2)
    if len(names) != len(args.means):
        names = tuple(f"x{j + 1}" for j in range(len(args.means)))
    spec = SynthSpec(args.rows, args.means, args.std_devs, corr, args.seed, names)
    buf = io.BytesIO()
    write_csv(synthesize(spec), buf)
    atomic_write(args.output, buf.getvalue())


def _cmd_standardize(args) -> None:
    table, params = standardize(load_csv(args.input))
    buf = io.BytesIO()
    write_csv(table, buf)
    atomic_write(args.output, buf.getvalue())
    params_path = args.params or Path(args.output).with_suffix(".params.json")
    atomic_write(params_path, _json_bytes({**params.to_dict(), "excluded_rows": table.excluded_count}))


def _cmd_select(args) -> None:
    table = _load_standardized(args.input)
    config = SelectorConfig(args.sample_size, refresh_interval=args.refresh_interval)
    sel = select_sample(table, config, keep_trace=args.trace)
    rows = [("id", "order_selected"), *((rid, i) for i, rid in enumerate(sel.ids, start=1))]
    atomic_write(args.output, _csv_bytes(rows))
    atomic_write(sidecar_path(args.output), _json_bytes(sel.to_sidecar()))


def _cmd_allocate(args) -> None:
    table = _load_standardized(args.input)
    sel = read_selection(args.selection, table)
    config = AllocatorConfig(args.restarts, args.max_exchanges, seed=args.seed)
    alloc = allocate(sel, config)
    rows = [("id", "group"), *alloc.groups(sel.ids)]
    atomic_write(args.output, _csv_bytes(rows))
    atomic_write(sidecar_path(args.output), _json_bytes(alloc.to_sidecar()))


def _cmd_evaluate(args) -> None:
    table = _load_standardized(args.input)
    alloc = read_allocation(args.allocation)
    report = parameter_mses(fisher_information(alloc, table, args.sigma))
    _emit(args.output, _json_bytes(report.to_dict()))


def _cmd_compare(args) -> None:
    table = _load_standardized(args.input)
    report = compare(
        table,
        args.sample_size,
        sigma=args.sigma,
        replicates=args.replicates,
        selector_cfg=SelectorConfig(args.sample_size, refresh_interval=args.refresh_interval),
        allocator_cfg=AllocatorConfig(restarts=args.restarts, seed=args.seed),
        seed=args.seed,
        workers=args.threads,
        average_restarts=args.average_restarts,
    )
    if args.format == "json":
        data = _json_bytes(report.to_dict())
    else:
        data = report.to_text().encode("utf-8")
    _emit(args.output, data)


COMMANDS = {
    "synth": _cmd_synth,
    "standardize": _cmd_standardize,
    "select": _cmd_select,
    "allocate": _cmd_allocate,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except DesignError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())
