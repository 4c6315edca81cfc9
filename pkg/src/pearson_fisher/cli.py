"""Command-line entry point.

Exit codes: 0 ok, 1 usage error, 2 data error (bad or unreadable input),
3 numeric failure.  JSON reports share a fixed key order: ``schema_version``,
``tool``, ``version``, ``command``, ``config``, then ``result``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import estimation as est
from . import goodness_of_fit as gof
from . import montecarlo as mc
from .distributions import (
    GammaParams,
    GroupedGammaModel,
    LinearProbeModel,
    NormalParams,
    binomial_difference_identity_residual,
)
from .special import DomainError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SCHEMA_VERSION = 1
DEFAULT_SHAPES = (0.05, 0.1, 0.15, 0.2, 0.25, 0.5, 0.75, 1, 1.5, 2, 3, 5, 7.5, 10, 20, 50)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class CommandSpec:
    subcommand: str
    options: dict = field(default_factory=dict)
    output: Optional[str] = None

    def __getattr__(self, name):
        try:
            return self.__dict__["options"][name]
        except KeyError:
            raise AttributeError(name) from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pearson-fisher", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def with_output(p):
        p.add_argument("--output", "-o", help="write the report here instead of stdout")
        return p

    p = with_output(sub.add_parser("identity", help="exact binomial difference-equation sweep"))
    p.add_argument("kind", choices=["binomial"])
    p.add_argument("--n-max", type=int, default=60)

    p = with_output(sub.add_parser("fit", help="fit a one-column sample"))
    p.add_argument("--input", required=True)
    p.add_argument("--family", choices=["normal", "gamma"], default="gamma")
    p.add_argument("--method", choices=["moments", "mle"], default="moments")

    p = with_output(sub.add_parser("probable-error", help="Pearson-Filon vs corrected probable errors"))
    p.add_argument("--family", choices=["normal", "gamma"], default="gamma")
    p.add_argument("--method", choices=["moments", "mle"], default="moments")
    p.add_argument("--input", help="fit this sample and report at the estimate")
    p.add_argument("--shape", type=float)
    p.add_argument("--rate", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--n", type=int, help="sample size when parameters are given directly")

    p = with_output(sub.add_parser("test", help="chi-square test of independence for a table CSV"))
    p.add_argument("--input", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--policy", choices=[x.value for x in gof.DfPolicy])
    g.add_argument("--both", action="store_true")

    p = with_output(sub.add_parser("decompose", help="split chi2 - chi2_s for observed,theoretical,estimated columns"))
    p.add_argument("--input", required=True)

    p = with_output(sub.add_parser("efficiency", help="gamma shape efficiency curve as CSV"))
    p.add_argument("--shapes", type=_float_list, default=list(DEFAULT_SHAPES))

    p = with_output(sub.add_parser("simulate", help="seeded Monte Carlo experiments"))
    p.add_argument("name", choices=["table-null", "fisher1924", "gamma-pe", "remainder"])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--c", type=int, default=2)
    p.add_argument("--n", type=int, help="total count N (tables, cells) or sample size n (gamma-pe)")
    p.add_argument("--n-grid", type=_int_list, default=[100, 1000, 10000, 100000])
    p.add_argument("--model", choices=["linear-probe", "grouped-gamma"], default="linear-probe")
    p.add_argument("--theta0", type=float)
    p.add_argument("--estimator", choices=["grouped_mle", "min_chi_square"], default="grouped_mle")
    p.add_argument("--shape", type=float, default=2.0)
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--samples", action="store_true", help="embed per-replicate samples in the JSON")
    p.add_argument("--csv", help="also write per-replicate statistics to this CSV file")
    return parser


def parse_args(argv: Sequence[str]) -> CommandSpec:
    ns = build_parser().parse_args(list(argv))
    opts = {k: v for k, v in vars(ns).items() if k not in ("subcommand", "output")}
    cmd = CommandSpec(ns.subcommand, opts, ns.output)
    _validate(cmd)
    return cmd


def _validate(cmd: CommandSpec) -> None:
    o = cmd.options
    if cmd.subcommand == "identity" and o["n_max"] < 1:
        raise UsageError("--n-max must be at least 1")
    if cmd.subcommand == "probable-error":
        direct = {"gamma": ("shape", "rate"), "normal": ("mu", "sigma")}[o["family"]]
        given = [k for k in ("shape", "rate", "mu", "sigma", "n") if o[k] is not None]
        if o["input"] is not None:
            if given:
                raise UsageError(f"--input conflicts with --{given[0]}")
        else:
            missing = [k for k in (*direct, "n") if o[k] is None]
            if missing:
                raise UsageError(f"missing required flag --{missing[0]} (or give --input)")
            foreign = [k for k in given if k not in (*direct, "n")]
            if foreign:
                raise UsageError(f"--{foreign[0]} does not apply to the {o['family']} family")
    if cmd.subcommand == "test" and o["policy"] is None and not o["both"]:
        o["policy"] = gof.DfPolicy.FISHER.value
    if cmd.subcommand == "simulate":
        if o["reps"] < 1:
            raise UsageError("--reps must be at least 1")
        if o["seed"] < 0 or o["seed"] >= 2**64:
            raise UsageError("--seed must be a 64-bit unsigned integer")


# ---------------------------------------------------------------------------
# Input parsing
# ---------------------------------------------------------------------------


def _read_lines(path: str) -> list[tuple[int, str]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s and not s.startswith("#"):
            out.append((lineno, s))
    return out


def read_sample(path: str) -> np.ndarray:
    """One real per line; blank lines and ``#`` comments are ignored."""
    values = []
    for lineno, s in _read_lines(path):
        try:
            v = float(s)
        except ValueError:
            raise DataError(f"{path}: row {lineno}, column 1: not a number: {s!r}") from None
        if not math.isfinite(v):
            raise DataError(f"{path}: row {lineno}, column 1: non-finite value")
        values.append(v)
    if not values:
        raise DataError(f"{path}: no data")
    return np.array(values)


def read_rows(path: str, *, integer: bool, width: Optional[int] = None) -> np.ndarray:
    rows = []
    for lineno, s in _read_lines(path):
        cells = next(csv.reader([s]))
        if width is not None and len(cells) != width:
            raise DataError(f"{path}: row {lineno}: expected {width} columns, found {len(cells)}")
        if rows and len(cells) != len(rows[0]):
            raise DataError(f"{path}: row {lineno}: ragged row ({len(cells)} columns, expected {len(rows[0])})")
        row = []
        for col, cell in enumerate(cells, start=1):
            cell = cell.strip()
            try:
                row.append(int(cell) if integer else float(cell))
            except ValueError:
                kind = "an integer" if integer else "a number"
                raise DataError(f"{path}: row {lineno}, column {col}: not {kind}: {cell!r}") from None
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data")
    return np.array(rows)


def read_table(path: str) -> gof.ContingencyTable:
    arr = read_rows(path, integer=True)
    try:
        return gof.ContingencyTable(arr)
    except DomainError as exc:
        raise DataError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def _report(cmd: CommandSpec, result) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool": "pearson-fisher",
        "version": __version__,
        "command": cmd.subcommand,
        "config": mc._jsonable(cmd.options),
        "result": result,
    }
    return json.dumps(doc, indent=2) + "\n"


def _emit(cmd: CommandSpec, text: str) -> None:
    if cmd.output:
        Path(cmd.output).write_text(text)
    else:
        sys.stdout.write(text)


def _fit(family: str, method: str, x: np.ndarray) -> est.FitResult:
    if family == "normal":
        return est.fit_normal(x)
    return est.fit_gamma_mle(x) if method == "mle" else est.fit_gamma_moments(x)


def _method_name(method: str) -> str:
    return "maximum_likelihood" if method == "mle" else "moments"


def _run_identity(cmd):
    cases = nonzero = 0
    failures = []
    for n in range(1, cmd.n_max + 1):
        for k in range(n):
            cases += 1
            r = binomial_difference_identity_residual(n, k)
            if r != 0:
                nonzero += 1
                failures.append({"n": n, "k": k, "residual": str(r)})
    result = {"cases": cases, "nonzero": nonzero, "all_zero": nonzero == 0, "failures": failures}
    _emit(cmd, _report(cmd, result))
    return EXIT_OK if nonzero == 0 else EXIT_NUMERIC


def _run_fit(cmd):
    fit = _fit(cmd.family, cmd.method, read_sample(cmd.input))
    _emit(cmd, _report(cmd, fit.to_dict()))
    return EXIT_OK


def _run_probable_error(cmd):
    method = _method_name(cmd.method)
    if cmd.input is not None:
        fit = _fit(cmd.family, cmd.method, read_sample(cmd.input))
        params, n = fit.params, fit.sample_size
    else:
        params = GammaParams(cmd.shape, cmd.rate) if cmd.family == "gamma" else NormalParams(cmd.mu, cmd.sigma)
        n = cmd.n
    report = est.asymptotic_report(params, n, method)
    result = {"params": dict(zip(params.names, map(float, params.to_vector()))), **report.to_dict()}
    _emit(cmd, _report(cmd, result))
    return EXIT_OK


def _run_test(cmd):
    table = read_table(cmd.input)
    policies = list(gof.DfPolicy) if cmd.both else [gof.DfPolicy(cmd.policy)]
    reports = [gof.test_independence(table, p) for p in policies]
    result = {
        "table": table.counts.tolist(),
        "expected": gof.expected_counts_independence(table).tolist(),
        "statistic": reports[0].statistic,
        "tests": [r.to_dict() for r in reports],
    }
    _emit(cmd, _report(cmd, result))
    return EXIT_OK


def _run_decompose(cmd):
    arr = read_rows(cmd.input, integer=False, width=3)
    try:
        cells = gof.CellData(arr[:, 0], arr[:, 1], arr[:, 2])
    except DomainError as exc:
        raise DataError(f"{cmd.input}: {exc}") from None
    _emit(cmd, _report(cmd, gof.decompose_difference(cells).to_dict()))
    return EXIT_OK


def _run_efficiency(cmd):
    rows = est.shape_efficiency_curve(cmd.shapes)
    lines = ["shape,efficiency,pe_ratio"] + [f"{k!r},{e!r},{r!r}" for k, e, r in rows]
    _emit(cmd, "\n".join(lines) + "\n")
    return EXIT_OK


def _cell_model(cmd):
    if cmd.model == "grouped-gamma":
        return GroupedGammaModel(rate=cmd.rate), 2.0 if cmd.theta0 is None else cmd.theta0
    return LinearProbeModel(), 0.2 if cmd.theta0 is None else cmd.theta0


def _run_simulate(cmd):
    name = cmd.name
    if name == "table-null":
        N = 400 if cmd.n is None else cmd.n
        res = mc.run_table_null_experiment(cmd.r, cmd.c, N, cmd.reps, cmd.seed)
    elif name == "fisher1924":
        model, theta0 = _cell_model(cmd)
        N = 10000 if cmd.n is None else cmd.n
        res = mc.run_fisher1924_experiment(model, theta0, N, cmd.reps, cmd.seed, cmd.estimator)
    elif name == "gamma-pe":
        n = 5000 if cmd.n is None else cmd.n
        res = mc.run_gamma_pe_experiment(cmd.shape, cmd.rate, n, cmd.reps, cmd.seed)
    else:
        model, theta0 = _cell_model(cmd)
        res = mc.run_remainder_scaling_experiment(model, theta0, cmd.n_grid, cmd.reps, cmd.seed, cmd.estimator)
    if cmd.csv:
        Path(cmd.csv).write_text(res.to_csv())
    _emit(cmd, _report(cmd, res.to_dict(include_samples=cmd.samples)))
    return EXIT_OK


_DISPATCH = {
    "identity": _run_identity,
    "fit": _run_fit,
    "probable-error": _run_probable_error,
    "test": _run_test,
    "decompose": _run_decompose,
    "efficiency": _run_efficiency,
    "simulate": _run_simulate,
}


def run(cmd: CommandSpec) -> int:
    """Execute a parsed command and return its exit status."""
    try:
        return _DISPATCH[cmd.subcommand](cmd)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DomainError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (est.EstimationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cmd = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(cmd)


if __name__ == "__main__":
    sys.exit(main())
