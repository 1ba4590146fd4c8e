"""Command-line interface.

Exit codes: 0 success, 1 usage or validation error, 2 I/O error,
3 divergence in a preset or run that does not tolerate it.
"""

from __future__ import annotations

import argparse
import subprocess
import sys
from pathlib import Path

from .harness import (ConfigError, build_problem, figure_presets,
                      parse_config_file, preset, run_experiment)
from .linalg import SVD_SIZE_CAP, spectral_scalars
from .theory import rate_report

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_DIVERGED = 3


def _finish(result, allow_divergence: bool) -> int:
    bad = [(label, trial, res.status) for label, trial, res in result.runs
           if res.status in ("diverged", "numerical-divergence")]
    for label, trial, res in result.runs:
        print(f"{result.spec.label} {label} trial={trial} status={res.status} "
              f"k={res.iterations} row_actions={res.row_actions} rse={res.rse:.3e}")
    if result.trace_path is not None:
        print(f"wrote {result.trace_path}")
        print(f"wrote {result.summary_path}")
        print(f"wrote {result.meta_path}")
    if bad and not allow_divergence:
        for label, trial, status in bad:
            print(f"error: {label} trial={trial} ended with {status}",
                  file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _cmd_run(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        print(f"error: no such config file: {path}", file=sys.stderr)
        return EXIT_IO
    try:
        spec = parse_config_file(path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.seed is not None:
        spec.seed = args.seed
    out_dir = args.out if args.out is not None else spec.out_dir
    try:
        result = run_experiment(spec, out_dir=out_dir)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return _finish(result, allow_divergence=True)


def _cmd_preset(args) -> int:
    try:
        spec = preset(args.name, scale=args.scale, seed=args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = run_experiment(spec, out_dir=args.out)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return _finish(result, allow_divergence=spec.allow_divergence)


def _cmd_rates(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        print(f"error: no such config file: {path}", file=sys.stderr)
        return EXIT_IO
    try:
        spec = parse_config_file(path)
        from .sampling import Rng
        problem = build_problem(spec.problem, Rng(spec.seed).child(0).seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    m, n = problem.shape
    if min(m, n) > SVD_SIZE_CAP:
        print(f"error: matrix above the SVD oracle cap ({SVD_SIZE_CAP}); "
              "no rate report", file=sys.stderr)
        return EXIT_USAGE
    scal = spectral_scalars(problem.A)
    print(f"problem {problem.label}: m={m} n={n} rank={scal.rank} "
          f"sigma_min={scal.sigma_min:.6e} sigma_max={scal.sigma_max:.6e} "
          f"frob_sq={scal.frob_sq:.6e}")
    for config in spec.configs:
        if config.method not in ("rrdr", "mrrdr"):
            continue
        rep = rate_report(scal, config.alpha, config.beta, config.r)
        print(f"{config.label()}: rate_thm1={rep.rate_thm1:.10f} "
              f"rate_thm2={rep.rate_thm2:.10f} q={rep.q:.10f} "
              f"beta_max={rep.beta_max:.6f} feasible={rep.momentum_feasible}")
    return EXIT_OK


def _cmd_check(args) -> int:
    candidates = [
        Path.cwd() / "tests" / "test_acceptance.py",
        Path(__file__).resolve().parents[2] / "tests" / "test_acceptance.py",
    ]
    target = next((p for p in candidates if p.is_file()), None)
    if target is None:
        print("error: tests/test_acceptance.py not found (run from the "
              "repository root)", file=sys.stderr)
        return EXIT_IO
    proc = subprocess.run([sys.executable, "-m", "pytest", str(target), "-q", "-s"])
    return EXIT_OK if proc.returncode == 0 else EXIT_DIVERGED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rdr-lab",
        description="Row-action solver experiments for consistent linear systems")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment described by a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)

    p_preset = sub.add_parser("preset", help="run a named figure preset")
    p_preset.add_argument("name")
    p_preset.add_argument("--scale", type=float, default=1.0)
    p_preset.add_argument("--seed", type=int, default=12345)
    p_preset.add_argument("--out", default="out")

    p_rates = sub.add_parser("rates", help="print closed-form rate predictions")
    p_rates.add_argument("config")

    sub.add_parser("check", help="run the acceptance suite")

    sub.add_parser("presets", help="list preset names")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; keep 2 reserved for I/O
        code = exc.code if isinstance(exc.code, int) else EXIT_USAGE
        return EXIT_OK if code == 0 else EXIT_USAGE
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "preset":
        return _cmd_preset(args)
    if args.command == "rates":
        return _cmd_rates(args)
    if args.command == "check":
        return _cmd_check(args)
    if args.command == "presets":
        for name in sorted(figure_presets()):
            print(name)
        return EXIT_OK
    parser.error("unknown command")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
