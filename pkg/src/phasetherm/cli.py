"""Command line entry point: ``phasetherm {run,validate,compare}``.

Exit codes: 0 all mandatory checks pass, 1 a check failed, 2 bad config or
input files, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from phasetherm import outputs
from phasetherm.config import load_config
from phasetherm.errors import (
    BathWindowError,
    ConfigError,
    EmptySubspace,
    PhasethermError,
    ShellTooWide,
    StepTooLarge,
)
from phasetherm.markov import build_rate_table
from phasetherm.model import build_shell, estimate_shell_dimension

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phasetherm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="ensemble + Markov chain + analysis, writes all outputs")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--output", type=Path, help="output directory (overrides config)")
    run.add_argument("--workers", type=int, help="realization worker threads")
    run.add_argument("--seed-base", type=_u64, help="overrides ensemble.seed_base")

    val = sub.add_parser("validate", help="parse and audit a config without running")
    val.add_argument("--config", required=True, type=Path)

    cmp_ = sub.add_parser("compare", help="compare a stats file against a Markov trajectory file")
    cmp_.add_argument("--stats", required=True, type=Path)
    cmp_.add_argument("--markov", required=True, type=Path)
    cmp_.add_argument("--tv-tol", type=float, default=0.05)
    cmp_.add_argument("--eq-tol", type=float, default=0.05)
    cmp_.add_argument("--output", type=Path, help="directory for comparison.json")
    return ap


def _print_summary(report: dict) -> None:
    rows = [
        ("shell dimension", report["shell"]["dimension"]),
        ("realizations", report["ensemble"]["n"]),
        ("max TV(exact, Markov)", report["comparison"]["max_tv_exact_markov"]),
        ("typical fraction", report["typicality"]["fraction"]),
        ("tau_relax / tau_H", report["conditions"]["tau_relax_over_tau_H"]),
        ("weak-coupling ratio", report["conditions"]["weak_coupling_ratio"]),
        ("min d0 / d_S", report["conditions"]["d0_over_dS_min"]),
        ("markov", report["markov"]["note"]),
    ]
    for name, value in rows:
        shown = f"{value:.6g}" if isinstance(value, float) else str(value)
        print(f"  {name:<24} {shown}")
    for name, ok in report["checks"].items():
        tag = "mandatory" if name in report["mandatory"] else "info"
        print(f"  [{'PASS' if ok else 'FAIL'}] {name} ({tag})")
    print("PASSED" if report["passed"] else "FAILED")


def cmd_run(args) -> int:
    from phasetherm.pipeline import run_pipeline

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.output if args.output is not None else Path(cfg.output.directory)
    try:
        result = run_pipeline(cfg, out, workers=args.workers, seed_base=args.seed_base)
    except (ConfigError, ShellTooWide, EmptySubspace, BathWindowError, StepTooLarge) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PhasethermError, ArithmeticError, np.linalg.LinAlgError, IndexError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"outputs in {result.output_dir}")
    _print_summary(result.report)
    return result.exit_code


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    system, bath, inter = cfg.system_spec(), cfg.bath_spec(), cfg.interaction_spec()
    sh = cfg.model.shell
    estimate = estimate_shell_dimension(system, bath, sh.center, sh.width)
    print(f"d_S                      {system.d_S}")
    print(f"shell dimension estimate {estimate:.1f} (cap {sh.max_dim})")
    code = EXIT_OK
    try:
        shell = build_shell(system, bath, sh.center, sh.width, sh.max_dim)
        print(f"shell dimension          {len(shell)}  per subspace {shell.counts.tolist()}")
        dim = len(shell)
    except ShellTooWide as exc:
        print(f"warning: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EmptySubspace, BathWindowError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rates = build_rate_table(system, bath, inter, sh.center, shell,
                             shell_averaged=cfg.markov.rates == "shell_averaged")
    max_dt = rates.max_dt
    print(f"admissible markov dt     < {max_dt:.6g}" if math.isfinite(max_dt) else
          "admissible markov dt     any (no transitions)")
    print(f"default markov dt        {rates.default_dt():.6g}")
    if cfg.markov.dt is not None and cfg.markov.dt >= max_dt:
        print(f"config error: markov.dt={cfg.markov.dt} is not admissible", file=sys.stderr)
        code = EXIT_CONFIG
    # H, eigenvectors, one twisted copy and the H(0) used for energies
    mem = 4 * 16 * dim * dim + 16 * dim * (cfg.dynamics.n_steps + 1)
    print(f"memory estimate          {mem / 2**20:.1f} MiB per worker")
    return code


def cmd_compare(args) -> int:
    from phasetherm.pipeline import compare_files

    try:
        report = compare_files(args.stats, args.markov, tv_tolerance=args.tv_tol, equilibration_tol=args.eq_tol)
    except (outputs.FormatError, PhasethermError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = outputs.dump_json(report)
    if args.output is not None:
        args.output.mkdir(parents=True, exist_ok=True)
        (args.output / "comparison.json").write_text(text)
    print(f"max TV(exact, Markov) = {report['max_tv_exact_markov']:.6g} (tolerance {report['tv_tolerance']})")
    return EXIT_OK if report["markov_agreement"] else EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "validate": cmd_validate, "compare": cmd_compare}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
