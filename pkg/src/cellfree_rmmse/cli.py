"""Command-line driver: ``sweep``, ``verify``, ``psi-check`` and ``trace``.

Exit codes: 0 success, 1 a verification check failed, 2 configuration
error, 3 every trial of some cell failed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import verify
from .clustering import write_cluster_csv
from .config import ConfigError, builtin_scenario, load_scenario
from .harness import (PRECODERS, AllTrialsFailed, prepare_trial, run_sweep, solve_all,
                      write_esr_csv, write_ocl_csv, write_trace_csv, write_trials_csv)

OUT_ENV = "CELLFREE_RMMSE_OUT"
EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2, 3

log = logging.getLogger("cellfree_rmmse")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario JSON file (default: bundled default scenario)")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./results)")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override one scenario key; repeatable")
    common.add_argument("--threads", default="1", help="worker processes, or AUTO")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cellfree-rmmse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("sweep", parents=[common], help="run the Monte-Carlo SNR sweep")
    p.add_argument("--trials-csv", action="store_true", help="also write per-trial rows")
    p = sub.add_parser("verify", parents=[common], help="run the oracle battery")
    p.add_argument("--quick", action="store_true", help="small sample sizes")
    p = sub.add_parser("psi-check", parents=[common],
                       help="compare the analytic OCL covariance with Monte-Carlo")
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--instances", type=int, default=1)
    p = sub.add_parser("trace", parents=[common], help="dump solver traces for one trial")
    p.add_argument("--snr-index", type=int, default=0)
    p.add_argument("--trial", type=int, default=0)
    return parser


def _threads(text: str):
    if str(text).upper() == "AUTO":
        return "AUTO"
    try:
        n = int(text)
    except ValueError as exc:
        raise ConfigError(f"--threads must be an integer or AUTO, got {text!r}") from exc
    if n < 1:
        raise ConfigError("--threads must be at least 1")
    return n


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sweep(args, scn) -> int:
    out = _out_dir(args)
    try:
        res = run_sweep(scn, threads=_threads(args.threads))
    except AllTrialsFailed as exc:
        log.error("%s", exc)
        return EXIT_FAILED
    write_esr_csv(res, out / "esr.csv")
    write_ocl_csv(res, out / "ocl_power.csv")
    if args.trials_csv:
        write_trials_csv(res, out / "trials.csv")
    width = max(len(n) for n in PRECODERS)
    print(f"ergodic sum rate [bit/s/Hz], {scn.num_trials} trials per point")
    print("snr_db  " + "  ".join(f"{n:>{width + 9}}" for n in PRECODERS))
    for snr in scn.snr_grid_db:
        cells = [res.cell(snr, n) for n in PRECODERS]
        row = "  ".join(f"{c.esr_mean:>{width}.3f} ± {c.esr_se:<6.3f}" for c in cells)
        print(f"{snr:6g}  {row}".rstrip())
    if res.flagged:
        print(f"warning: trial failure rate {res.failure_rate:.2%} exceeds "
              f"{scn.max_failure_rate:.2%}", file=sys.stderr)
    print(f"wrote {out / 'esr.csv'} and {out / 'ocl_power.csv'}")
    return EXIT_OK


def cmd_verify(args, scn) -> int:
    results = verify.run_battery(scn, quick=args.quick)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def cmd_psi_check(args, scn) -> int:
    r = verify.check_psi(scn, num_scenarios=args.instances, num_draws=args.draws, use_given=True)
    print(r.line())
    return EXIT_OK if r.passed else EXIT_CHECK


def cmd_trace(args, scn) -> int:
    out = _out_dir(args)
    if not 0 <= args.snr_index < len(scn.snr_grid_db):
        raise ConfigError("--snr-index is outside the SNR grid")
    setup = prepare_trial(scn, args.snr_index, args.trial)
    sols = solve_all(scn, setup)
    write_trace_csv(sols, out / "trace.csv")
    write_cluster_csv(setup.plan, out / "ap_clusters.csv", out / "user_clusters.csv")
    for name, sol in sols.items():
        if sol is None:
            print(f"{name}: singular system")
            continue
        print(f"{name}: J = {sol.objective:.10g}, f = {sol.f:.6g}, lambda = {sol.lambda_:.6g}, "
              f"{sol.iterations} evaluations, converged = {sol.converged}")
    print(f"wrote {out / 'trace.csv'}, {out / 'ap_clusters.csv'}, {out / 'user_clusters.csv'}")
    return EXIT_OK


COMMANDS = {"sweep": cmd_sweep, "verify": cmd_verify, "psi-check": cmd_psi_check, "trace": cmd_trace}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        path = args.scenario or builtin_scenario("default")
        scn = load_scenario(path, args.override)
        _threads(args.threads)
        return COMMANDS[args.command](args, scn)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
