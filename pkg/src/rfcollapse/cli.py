"""Command-line entry point.

Exit codes: 0 all assertions pass, 1 an assertion failed, 2 configuration or
usage error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path


from .config import ConfigError, parse_config, profile_function
from .errors import ConstructionError, DomainError, IntegrationError, SizeCapError, UsageError
from .flow import (
    NilMetric,
    WarpedSurfaceMetric,
    integrate_nil,
    integrate_warped_surface,
    total_curvature,
)
from .gh import BRUTE_FORCE_CAP, gh_brute_force, gh_upper_bound
from .metric import read_distance_matrix
from .scenarios import _plain, run_scenario
from .suites import SUITES

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


@dataclass
class InvocationResult:
    exit_code: int
    report_path: Path | None = None
    lines: list = field(default_factory=list)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("<args>", message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rfcollapse", description="Ricci flow under collapse: GH estimates, flows, scenarios.")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out-dir", default="out", help="directory for report files")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for scenario cells")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a scenario config")
    run.add_argument("config")

    gh = sub.add_parser("gh", help="GH bounds between two distance-matrix files")
    gh.add_argument("--a", required=True)
    gh.add_argument("--b", required=True)
    mode = gh.add_mutually_exclusive_group()
    mode.add_argument("--brute", action="store_true")
    mode.add_argument("--search", action="store_true")
    gh.add_argument("--budget", type=int, default=2000)

    flow = sub.add_parser("flow", help="integrate a flow and write its trace")
    fsub = flow.add_subparsers(dest="family", required=True, parser_class=_Parser)
    nil = fsub.add_parser("nil")
    nil.add_argument("--a0", type=float, required=True)
    nil.add_argument("--b0", type=float, required=True)
    nil.add_argument("--c0", type=float, required=True)
    nil.add_argument("--t", type=float, required=True)
    nil.add_argument("--dt", type=float, default=1e-3)
    torus = fsub.add_parser("torus")
    torus.add_argument("--f", default="2 + cos(r)")
    torus.add_argument("--lambda", dest="lam", type=float, default=1.0)
    torus.add_argument("--t", type=float, required=True)
    torus.add_argument("--dt", type=float, default=None)
    torus.add_argument("--nr", type=int, default=256)

    ver = sub.add_parser("verify", help="run a built-in verification suite")
    ver.add_argument("suite", choices=sorted(SUITES))
    return p


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(doc), sort_keys=True, indent=1) + "\n")


def _finish_report(report, out_dir: Path, name: str) -> InvocationResult:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.json"
    path.write_text(report.to_json(_timestamp()))
    if report.records:
        (out_dir / "series.csv").write_text(report.series_csv())
    return InvocationResult(EXIT_PASS if report.passed else EXIT_FAIL, path, report.summary_lines())


def cmd_run(args) -> InvocationResult:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.validate()
    report = run_scenario(cfg, jobs=args.jobs)
    return _finish_report(report, Path(args.out_dir), "report")


def cmd_gh(args) -> InvocationResult:
    X, Y = read_distance_matrix(args.a), read_distance_matrix(args.b)
    seed = 0 if args.seed is None else args.seed
    use_brute = args.brute or (not args.search and max(X.n, Y.n) <= BRUTE_FORCE_CAP)
    est = gh_brute_force(X, Y) if use_brute else gh_upper_bound(X, Y, budget=args.budget, seed=seed)
    doc = {"timestamp": _timestamp(), "method": "brute" if use_brute else "search", **est.to_dict()}
    path = Path(args.out_dir) / "gh.json"
    _write_json(path, doc)
    lines = [f"method {doc['method']}: gh_lower={est.lower:.6g} gh_upper={est.upper:.6g}"]
    return InvocationResult(EXIT_PASS, path, lines)


def cmd_flow(args) -> InvocationResult:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.family == "nil":
        tr = integrate_nil(NilMetric(args.a0, args.b0, args.c0), args.t, args.dt)
        cols = ["time", "A", "B", "C", "K_max"]
        rows = [[t, s.A, s.B, s.C, k] for t, s, k in zip(tr.times, tr.states, tr.K_max)]
        end = tr.states[-1]
        summary = {"family": "nil", "T": args.t, "dt": tr.dt, "A": end.A, "B": end.B, "C": end.C,
                   "K_max": float(tr.K_max.max())}
        lines = [f"A({args.t:g}) = {end.A:.7f}", f"B({args.t:g}) = {end.B:.7f}", f"C({args.t:g}) = {end.C:.7f}"]
    else:
        try:
            f = profile_function(args.f)
        except ValueError as e:
            raise ConfigError("--f", str(e)) from None
        m0 = WarpedSurfaceMetric.from_profile(f, args.lam, args.nr)
        tr = integrate_warped_surface(m0, args.t, args.dt)
        cols = ["time", "K_max", "c_hat", "total_curvature"]
        rows = [[t, k, s.r_circumference(), total_curvature(s)] for t, s, k in zip(tr.times, tr.states, tr.K_max)]
        summary = {"family": "torus", "T": args.t, "dt": tr.dt, "f": args.f, "lambda": args.lam, "nr": args.nr,
                   "K_max_initial": float(tr.K_max[0]), "K_max_final": float(tr.K_max[-1]),
                   "c_hat_initial": rows[0][2], "c_hat_final": rows[-1][2]}
        lines = [f"K_max: {tr.K_max[0]:.6g} -> {tr.K_max[-1]:.6g}", f"c_hat: {rows[0][2]:.6g} -> {rows[-1][2]:.6g}"]
    with open(out / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        w.writerows([[repr(float(v)) for v in r] for r in rows])
    summary["timestamp"] = _timestamp()
    path = out / "flow.json"
    _write_json(path, summary)
    return InvocationResult(EXIT_PASS, path, lines)


def cmd_verify(args) -> InvocationResult:
    report = SUITES[args.suite](seed=0 if args.seed is None else args.seed)
    return _finish_report(report, Path(args.out_dir), f"verify-{args.suite}")


COMMANDS = {"run": cmd_run, "gh": cmd_gh, "flow": cmd_flow, "verify": cmd_verify}


def invoke(argv=None) -> InvocationResult:
    try:
        args = build_parser().parse_args(argv)
        if args.jobs < 1:
            raise ConfigError("--jobs", "must be >= 1")
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, ConstructionError, DomainError, SizeCapError, UsageError) as e:
        return InvocationResult(EXIT_CONFIG, None, [f"error: {e}"])
    except IntegrationError as e:
        return InvocationResult(EXIT_FAIL, None, [f"integration aborted: {e}"])
    except Exception as e:  # noqa: BLE001 - the exit code contract needs a catch-all
        return InvocationResult(EXIT_INTERNAL, None, [f"internal error: {e!r}", traceback.format_exc()])


def main(argv=None) -> int:
    res = invoke(argv)
    stream = sys.stdout if res.exit_code in (EXIT_PASS, EXIT_FAIL) else sys.stderr
    for line in res.lines:
        print(line, file=stream)
    if res.report_path is not None:
        print(f"report: {res.report_path}", file=stream)
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
