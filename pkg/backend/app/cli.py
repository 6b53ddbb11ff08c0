"""Command-line entry point: ``betacov {test,simulate,table,params,verify,serve}``.

Exit codes: 0 accept / success, 2 reject, 1 usage or data error, 3 oracle
verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import BetaCovError, VerificationFailure
from app.core.logging_config import configure_logging, get_logger
from app.core.types import STATISTICS, ContourConfig, IngestSpec, KurtosisSpec, Scenario, SimConfig
from app.services import mc_harness, oracle, result_store
from app.services.null_law import mean_variance, regime, spectral_params
from app.services.pipeline import TwoSampleTestService

logger = get_logger("betacov.cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECT = 2


class _Parser(argparse.ArgumentParser):
    # Usage errors exit 1; 2 is reserved for a rejected hypothesis
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _stat_list(text: str) -> tuple[str, ...]:
    names = tuple(v.strip() for v in text.split(",") if v.strip())
    unknown = [n for n in names if n not in STATISTICS]
    if unknown or not names:
        raise argparse.ArgumentTypeError(f"statistics must be drawn from {','.join(STATISTICS)}")
    return names


def _emit(text: str, out: str | None) -> None:
    if out:
        result_store.ensure_parent(out)
        with open(out, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def _kurtosis_from_args(args: argparse.Namespace, parser: argparse.ArgumentParser) -> KurtosisSpec | None:
    if args.delta1 is None and args.delta2 is None:
        return None
    if args.delta1 is None or args.delta2 is None:
        parser.error("--delta1 and --delta2 must be given together")
    return KurtosisSpec(args.delta1, args.delta2)


def cmd_test(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    ingest = IngestSpec(
        delimiter=args.delimiter,
        header=args.header,
        transpose=args.transpose,
        centering=args.centering,
    )
    report = TwoSampleTestService().run_files(
        args.sample1,
        args.sample2,
        ingest,
        kurtosis=_kurtosis_from_args(args, parser),
        level=args.level,
        sidedness=args.sidedness,
        calibration=args.calibration,
        statistics=args.stats,
        reps=args.reps,
        seed=args.seed,
        workers=args.threads,
    )
    _emit(result_store.to_json(report) + "\n", args.out)
    decision = report.decision
    if report.empirical_decisions is not None:
        decision = report.empirical_decisions.get("K") or decision
    return EXIT_REJECT if decision == "reject" else EXIT_OK


def cmd_simulate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    scenario = Scenario(case_id=args.case, n1=args.n1, n2=args.n2, p=args.p, a=args.a)
    cfg = SimConfig(
        scenario=scenario,
        reps=args.reps,
        seed=args.seed,
        level=args.level,
        statistics=args.stats,
        calibration=args.calibration,
    )
    cell = mc_harness.run_cell(cfg, workers=args.threads)
    _emit(result_store.to_json(cell) + "\n", args.out)
    return EXIT_OK


def cmd_table(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    grid = mc_harness.size_grid("full" if args.full else args.grid)
    table = mc_harness.run_table(
        args.case,
        grid,
        args.a_grid,
        args.reps,
        args.seed,
        level=args.level,
        workers=args.threads,
    )
    if args.out:
        result_store.write_power_table(table, args.out, power_curve=args.power_curve)
    else:
        _emit(result_store.power_table_csv(table, power_curve=args.power_curve), None)
    if args.json:
        result_store.write_json(table, args.json)
    failed = [c for c in table.cells if c.error]
    if failed:
        logger.warning(f"table_partial failed_cells={len(failed)} of {len(table.cells)}")
    return EXIT_OK


def cmd_params(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    sp = spectral_params(args.n1, args.n2, args.p)
    law = mean_variance(sp, KurtosisSpec(args.delta1, args.delta2))
    payload = {
        "regime": regime(sp),
        "y1": sp.y1,
        "y2": sp.y2,
        "alpha_n": sp.alpha_n,
        "h": sp.h,
        "x_l": sp.x_l,
        "x_r": sp.x_r,
        "ell1": law.ell1,
        "ell2": law.ell2,
        "mu": law.mu,
        "sigma2": law.sigma2,
        "warnings": list(sp.warnings),
    }
    for w in sp.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    grid = oracle.load_grid(args.grid_file) if args.grid_file else None
    base = oracle.contour_config_from_settings()
    cc = ContourConfig(
        r=base.r,
        r2=base.r2,
        nodes=args.nodes or base.nodes,
        extrapolation=args.extrapolation or base.extrapolation,
    )
    reports = oracle.run_oracle_grid(grid, tol=args.tol, cc=cc)
    _emit(json.dumps([r.model_dump() for r in reports], indent=2) + "\n", args.out)
    failed = [r for r in reports if not r.passed]
    print(f"verify: {len(reports) - len(failed)}/{len(reports)} checks passed", file=sys.stderr)
    if failed:
        raise VerificationFailure(f"{len(failed)} oracle checks exceeded tolerance")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port, log_config=None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="betacov", description="Beta-matrix trace test for equality of two covariance matrices")
    parser.add_argument("--log-level", default=None, help="override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test two samples given as CSV files")
    t.add_argument("sample1")
    t.add_argument("sample2")
    t.add_argument("--delimiter", default=",")
    t.add_argument("--no-header", dest="header", action="store_false", help="first row is data")
    t.add_argument("--transpose", action="store_true", help="rows are variables, columns observations")
    t.add_argument("--centering", choices=["sample-mean", "known-zero-mean"], default="sample-mean")
    t.add_argument("--delta1", type=float, default=None, help="excess kurtosis of sample 1 (estimated if omitted)")
    t.add_argument("--delta2", type=float, default=None, help="excess kurtosis of sample 2 (estimated if omitted)")
    t.add_argument("--level", type=float, default=settings.level)
    t.add_argument("--sidedness", choices=["two-sided", "upper"], default=settings.sidedness)
    t.add_argument("--calibration", choices=["asymptotic", "empirical-quantile"], default="asymptotic")
    t.add_argument("--stats", type=_stat_list, default=STATISTICS, help="statistics to report; K is always included")
    t.add_argument("--reps", type=int, default=settings.reps, help="null replicates for empirical calibration")
    t.add_argument("--seed", type=int, default=settings.seed)
    t.add_argument("--threads", type=int, default=None)
    t.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="rejection rates for one Monte-Carlo cell")
    s.add_argument("--case", type=int, required=True, choices=[1, 2, 3, 4])
    s.add_argument("--n1", type=int, required=True)
    s.add_argument("--n2", type=int, required=True)
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--a", type=float, default=0.0)
    s.add_argument("--reps", type=int, default=settings.reps)
    s.add_argument("--seed", type=int, default=settings.seed)
    s.add_argument("--level", type=float, default=settings.level)
    s.add_argument("--stats", type=_stat_list, default=STATISTICS)
    s.add_argument("--calibration", choices=["asymptotic", "empirical-quantile"], default="empirical-quantile")
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_simulate)

    tb = sub.add_parser("table", help="power table for one simulation case")
    tb.add_argument("--case", type=int, required=True, choices=[1, 2, 3, 4])
    tb.add_argument("--grid", choices=["smallest", "desk"], default="smallest")
    tb.add_argument("--full", action="store_true", help="all four size triples per regime (slow)")
    tb.add_argument("--a-grid", type=_float_list, default=list(mc_harness.DEFAULT_A_GRID))
    tb.add_argument("--reps", type=int, default=settings.reps)
    tb.add_argument("--seed", type=int, default=settings.seed)
    tb.add_argument("--level", type=float, default=settings.level)
    tb.add_argument("--threads", type=int, default=None)
    tb.add_argument("--power-curve", action="store_true", help="long-format (a, statistic, rate) output")
    tb.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    tb.add_argument("--json", default=None, help="also write the table as JSON")
    tb.set_defaults(func=cmd_table)

    pr = sub.add_parser("params", help="print the null-law parameters")
    pr.add_argument("n1", type=int)
    pr.add_argument("n2", type=int)
    pr.add_argument("p", type=int)
    pr.add_argument("--delta1", type=float, default=0.0)
    pr.add_argument("--delta2", type=float, default=0.0)
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_params)

    v = sub.add_parser("verify", help="check closed forms against quadrature and contour integrals")
    v.add_argument("--tol", type=float, default=None, help="one tolerance for every check")
    v.add_argument("--grid-file", default=None, help="CSV with columns n1,n2,p[,delta1,delta2]")
    v.add_argument("--nodes", type=int, default=None)
    v.add_argument("--extrapolation", type=int, default=None)
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_verify)

    sv = sub.add_parser("serve", help="run the HTTP API")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    sv.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args, parser)
    except BetaCovError as exc:
        logger.error(f"command_failed command={args.command} error={exc}")
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValidationError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
