"""Experiment harness: config files, figure presets, and CSV traces.

An experiment is a problem, a list of solver configs, a trial count, and a
seed.  Trials own child RNG streams derived from the experiment seed, and
output rows are merged in a fixed (config, trial, step) order, so results
are byte-identical for a given config file and seed regardless of how the
trials are scheduled.
"""

from __future__ import annotations

import csv
import itertools
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import problems as problems_mod
from .linalg import SVD_SIZE_CAP, spectral_scalars, svd_small
from .problems import GraphSpec, Problem
from .sampling import MASK64, Rng
from .solvers import METHODS, RunResult, SolverConfig, StopRule, run
from .theory import rate_report

SCHEMA_VERSION = 1

TRACE_COLUMNS = ("experiment", "solver", "trial", "k", "row_actions", "rse",
                 "residual_norm2", "dir_ratio", "vmin_overlap")
SUMMARY_COLUMNS = ("experiment", "solver", "trial", "status", "iterations",
                   "row_actions", "rse")


class ConfigError(ValueError):
    """Config file rejected; message carries the offending line when known."""


# ---------------------------------------------------------------------------
# experiment description
# ---------------------------------------------------------------------------


@dataclass
class ProblemSpec:
    source: str  # synthetic | conditioned | mtx | ac | three-lines | adversarial
    m: int = 100
    n: int = 50
    ratio: float | None = None
    path: str | None = None
    topology: str = "line"
    nodes: int = 50
    radius: float | None = None

    def validate(self):
        if self.source not in ("synthetic", "conditioned", "mtx", "ac",
                               "three-lines", "adversarial"):
            raise ConfigError(f"unknown problem source: {self.source}")
        if self.source in ("synthetic", "conditioned", "adversarial"):
            if self.m < 1 or self.n < 1:
                raise ConfigError("problem dimensions must be positive")
        if self.source == "conditioned" and self.ratio is None:
            raise ConfigError("conditioned problems need 'ratio'")
        if self.source == "mtx" and not self.path:
            raise ConfigError("mtx problems need 'path'")
        if self.source == "ac":
            if self.topology not in ("line", "cycle", "geometric"):
                raise ConfigError(f"unknown topology: {self.topology}")
            if self.nodes < 2:
                raise ConfigError("ac problems need nodes >= 2")


@dataclass
class ExperimentSpec:
    problem: ProblemSpec
    configs: list  # list[SolverConfig]; seeds are assigned per trial at run time
    trials: int = 10
    seed: int = 0
    out_dir: str = "out"
    label: str = "experiment"
    # presets may tolerate non-converged statuses (sweeps include divergent cells)
    allow_divergence: bool = False

    def validate(self):
        self.problem.validate()
        if not self.configs:
            raise ConfigError("no solver configs requested")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not (0 <= self.seed <= MASK64):
            raise ConfigError("seed must be a 64-bit unsigned integer")


# ---------------------------------------------------------------------------
# config file parsing
# ---------------------------------------------------------------------------

_PROBLEM_KEYS = {"source", "m", "n", "ratio", "path", "topology", "nodes",
                 "radius", "label"}
_SOLVER_KEYS = {"methods", "r", "alpha", "beta", "penalty"}
_RUN_KEYS = {"trials", "seed", "rse_tol", "max_row_actions", "max_iterations",
             "trace_every", "out"}


def _parse_lines(text: str):
    """Line-oriented ``key = value`` parser with ``[section]`` headers."""
    sections = {"problem": {}, "solvers": {}, "run": {}}
    current = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in sections:
                raise ConfigError(f"line {ln}: unknown section [{name}]")
            current = name
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value'")
        if current is None:
            raise ConfigError(f"line {ln}: key outside any section")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        allowed = {"problem": _PROBLEM_KEYS, "solvers": _SOLVER_KEYS,
                   "run": _RUN_KEYS}[current]
        if key not in allowed:
            raise ConfigError(f"line {ln}: unknown key '{key}' in [{current}]")
        if key in sections[current]:
            raise ConfigError(f"line {ln}: duplicate key '{key}'")
        sections[current][key] = (ln, value)
    return sections


def _take(section, key, default=None):
    if key in section:
        return section[key][1]
    return default


def _parse_float(section, key, default):
    raw = _take(section, key)
    if raw is None:
        return default
    ln = section[key][0]
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"line {ln}: '{key}' must be a number") from None


def _parse_int(section, key, default):
    raw = _take(section, key)
    if raw is None:
        return default
    ln = section[key][0]
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"line {ln}: '{key}' must be an integer") from None


def _parse_optional_int(section, key, default):
    raw = _take(section, key)
    if raw is None:
        return default
    if raw.lower() == "none":
        return None
    return _parse_int(section, key, default)


def _parse_list(section, key, default, conv):
    raw = _take(section, key)
    if raw is None:
        return default
    ln = section[key][0]
    out = []
    for piece in raw.split(","):
        piece = piece.strip()
        if not piece:
            continue
        try:
            out.append(conv(piece))
        except ValueError:
            raise ConfigError(f"line {ln}: bad value '{piece}' for '{key}'") from None
    if not out:
        raise ConfigError(f"line {ln}: empty list for '{key}'")
    return out


def parse_config(text: str) -> ExperimentSpec:
    """Build an :class:`ExperimentSpec` from config text; unknown keys fail."""
    sections = _parse_lines(text)
    prob_sec = sections["problem"]
    solv_sec = sections["solvers"]
    run_sec = sections["run"]

    pspec = ProblemSpec(
        source=_take(prob_sec, "source", "synthetic").lower(),
        m=_parse_int(prob_sec, "m", 100),
        n=_parse_int(prob_sec, "n", 50),
        ratio=_parse_float(prob_sec, "ratio", None),
        path=_take(prob_sec, "path"),
        topology=_take(prob_sec, "topology", "line").lower(),
        nodes=_parse_int(prob_sec, "nodes", 50),
        radius=_parse_float(prob_sec, "radius", None),
    )

    methods = _parse_list(solv_sec, "methods", ["rrdr"], str)
    for mth in methods:
        if mth not in METHODS:
            ln = solv_sec["methods"][0]
            raise ConfigError(f"line {ln}: unknown method '{mth}'")
    r_values = _parse_list(solv_sec, "r", [1], int)
    alphas = _parse_list(solv_sec, "alpha", [0.5], float)
    betas = _parse_list(solv_sec, "beta", [0.0], float)
    penalty = _parse_float(solv_sec, "penalty", 1.0)

    rse_raw = _take(run_sec, "rse_tol", "1e-12")
    if rse_raw.lower() == "none":
        rse_tol = None
    else:
        try:
            rse_tol = float(rse_raw)
        except ValueError:
            ln = run_sec["rse_tol"][0]
            raise ConfigError(f"line {ln}: 'rse_tol' must be a number") from None
    stop = StopRule(
        rse_tol=rse_tol,
        max_row_actions=_parse_optional_int(run_sec, "max_row_actions", 1_000_000),
        max_iterations=_parse_optional_int(run_sec, "max_iterations", None),
    )
    trace_every = _parse_int(run_sec, "trace_every", 1000)

    for b in betas:
        if not (0.0 <= b < 1.0):
            raise ConfigError("beta must lie in [0, 1)")
    configs = []
    try:
        for mth, r, alpha, beta in itertools.product(methods, r_values, alphas, betas):
            configs.append(SolverConfig(method=mth, r=r, alpha=alpha, beta=beta,
                                        penalty=penalty, stop=stop,
                                        trace_every=trace_every))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    spec = ExperimentSpec(
        problem=pspec,
        configs=configs,
        trials=_parse_int(run_sec, "trials", 10),
        seed=_parse_int(run_sec, "seed", 0),
        out_dir=_take(run_sec, "out", "out"),
        label=_take(prob_sec, "label", "experiment"),
    )
    spec.validate()
    return spec


def parse_config_file(path) -> ExperimentSpec:
    return parse_config(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# problem construction and metrics
# ---------------------------------------------------------------------------


def build_problem(pspec: ProblemSpec, seed: int) -> Problem:
    """Materialize the problem described by a spec under a given seed."""
    pspec.validate()
    if pspec.source == "synthetic":
        return problems_mod.synthetic_problem(pspec.m, pspec.n, seed)
    if pspec.source == "conditioned":
        return problems_mod.conditioned_problem(pspec.m, pspec.n, pspec.ratio, seed)
    if pspec.source == "mtx":
        return problems_mod.mtx_problem(pspec.path, seed)
    if pspec.source == "ac":
        c = Rng(seed).uniform(pspec.nodes)
        gspec = GraphSpec(topology=pspec.topology, n=pspec.nodes,
                          radius=pspec.radius, seed=seed)
        return problems_mod.gen_ac_problem(gspec, c)
    if pspec.source == "three-lines":
        return problems_mod.three_lines_failure_problem()
    if pspec.source == "adversarial":
        return problems_mod.gen_direction_adversarial(seed, n=pspec.n)
    raise ConfigError(f"unknown problem source: {pspec.source}")


def compute_direction_metrics(x, problem: Problem, v_min):
    """Direction diagnostics of the current error ``e = x - x0_star``.

    Returns ``(|A e| / |e|, |<e/|e|, v_min>|)``; both zero when the error
    vanished and no direction is defined.
    """
    e = np.asarray(x, dtype=np.float64) - problem.x0_star
    nrm = math.sqrt(float(e @ e))
    if nrm == 0.0:
        return 0.0, 0.0
    ae = problem.A.entries @ e
    return (float(np.sqrt(ae @ ae)) / nrm,
            abs(float(e @ v_min)) / nrm)


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    problem: Problem
    runs: list  # list of (config_label, trial, RunResult)
    trace_path: Path | None = None
    summary_path: Path | None = None
    meta_path: Path | None = None
    rates: dict = field(default_factory=dict)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def run_experiment(spec: ExperimentSpec, out_dir=None, write=True,
                   with_direction_metrics=None) -> ExperimentResult:
    """Run every (config, trial) pair and write trace/summary/meta files.

    Trial ``t`` of grid entry ``g`` draws from the child stream with index
    ``g * trials + t + 1`` of the experiment seed; entry 0 seeds problem
    generation.  Rows are emitted in (config, trial, step) order.
    """
    spec.validate()
    root = Rng(spec.seed)
    problem = build_problem(spec.problem, root.child(0).seed)
    m, n = problem.shape

    svd = None
    v_min = None
    sigma_min = None
    want_metrics = with_direction_metrics
    if want_metrics is None:
        want_metrics = spec.problem.source == "adversarial"
    if want_metrics and min(m, n) <= SVD_SIZE_CAP:
        svd = svd_small(problem.A)
        v_min = svd.V[:, svd.rank - 1]
        sigma_min = float(svd.singular_values[svd.rank - 1])
    metrics_fn = None
    if v_min is not None:
        metrics_fn = lambda x: compute_direction_metrics(x, problem, v_min)

    t_start = time.perf_counter()
    runs = []
    for g, config in enumerate(spec.configs):
        label = config.label()
        for trial in range(spec.trials):
            child = root.child(g * spec.trials + trial + 1)
            result = run(problem, replace(config, seed=child.seed),
                         metrics_fn=metrics_fn)
            runs.append((label, trial, result))
    elapsed = time.perf_counter() - t_start

    rates = {}
    if min(m, n) <= SVD_SIZE_CAP and spec.problem.source != "three-lines":
        try:
            scal = spectral_scalars(problem.A)
            for config in spec.configs:
                if config.method in ("rrdr", "mrrdr"):
                    rates[config.label()] = rate_report(
                        scal, config.alpha, config.beta, config.r)
        except ValueError:
            rates = {}

    result = ExperimentResult(spec=spec, problem=problem, runs=runs,
                              rates=rates)
    if write:
        out = Path(out_dir if out_dir is not None else spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.trace_path = out / f"{spec.label}_trace.csv"
        result.summary_path = out / f"{spec.label}_summary.csv"
        result.meta_path = out / f"{spec.label}_meta.txt"
        _write_trace(result.trace_path, spec.label, runs)
        _write_summary(result.summary_path, spec.label, runs)
        _write_meta(result.meta_path, spec, problem, rates, sigma_min, elapsed)
    return result


def _write_trace(path, label, runs):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for solver_label, trial, result in runs:
            for rec in result.records:
                writer.writerow([
                    label, solver_label, trial, rec.k, rec.row_actions,
                    _fmt(rec.rse), _fmt(rec.residual_norm2),
                    _fmt(rec.dir_ratio), _fmt(rec.vmin_overlap),
                ])


def _write_summary(path, label, runs):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for solver_label, trial, result in runs:
            writer.writerow([
                label, solver_label, trial, result.status, result.iterations,
                result.row_actions, _fmt(result.rse),
            ])


def _write_meta(path, spec, problem, rates, sigma_min, elapsed):
    lines = [
        f"schema_version = {SCHEMA_VERSION}",
        f"experiment = {spec.label}",
        f"seed = {spec.seed}",
        f"trials = {spec.trials}",
        f"problem.label = {problem.label}",
        f"problem.m = {problem.A.m}",
        f"problem.n = {problem.A.n}",
        f"problem.frob_sq = {_fmt(problem.A.frob_sq)}",
    ]
    for key, value in sorted(problem.info.items()):
        lines.append(f"problem.{key} = {value}")
    if sigma_min is not None:
        lines.append(f"problem.sigma_min = {_fmt(sigma_min)}")
    lines.append(
        "row_action_convention = rrdr/mrrdr/det-rsets-dr: one per reflection; "
        "rk: one per projection; rek: row plus column touch (2); rgs: one per "
        "column update; cyclic-dr: 2; rp-admm: n per sweep")
    for label, report in sorted(rates.items()):
        for key in ("rate_thm1", "rate_thm2", "delta1", "delta2", "gamma1",
                    "gamma2", "q", "tau", "beta_max"):
            lines.append(f"rates.{label}.{key} = {_fmt(getattr(report, key))}")
    # informational only; everything above is deterministic for a given seed
    lines.append(f"wall_clock_seconds = {elapsed:.3f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# figure presets
# ---------------------------------------------------------------------------


def _scaled(value, scale):
    return max(2, int(round(value * scale)))


def figure_presets(scale: float = 1.0, seed: int = 12345) -> dict:
    """Desk-size experiment bundles mirroring the figure families.

    ``scale`` multiplies problem dimensions; budgets stay fixed.  Returns a
    dict keyed by preset name.
    """
    if scale <= 0.0:
        raise ConfigError("scale must be positive")
    presets = {}

    stop12 = lambda budget: StopRule(rse_tol=1e-12, max_row_actions=budget)

    # momentum parameter sweep over (alpha, beta)
    sweep_cfgs = [
        SolverConfig(method="mrrdr", r=r, alpha=a, beta=b,
                     stop=stop12(2_000_000), trace_every=0)
        for r in (2, 3)
        for a in (0.1, 0.3, 0.5, 0.7, 0.9)
        for b in (0.0, 0.2, 0.4, 0.6, 0.8)
    ]
    presets["fig-param-sweep"] = ExperimentSpec(
        problem=ProblemSpec(source="synthetic", m=_scaled(200, scale),
                            n=_scaled(50, scale)),
        configs=sweep_cfgs, trials=10, seed=seed, label="fig-param-sweep",
        allow_divergence=True)

    presets["fig-r-sweep"] = ExperimentSpec(
        problem=ProblemSpec(source="synthetic", m=_scaled(200, scale),
                            n=_scaled(50, scale)),
        configs=[
            SolverConfig(method="mrrdr", r=r, alpha=0.5, beta=b,
                         stop=stop12(1_000_000), trace_every=500)
            for b in (0.0, 0.4) for r in range(1, 21)
        ],
        trials=10, seed=seed, label="fig-r-sweep")

    presets["fig-vs-cyclic"] = ExperimentSpec(
        problem=ProblemSpec(source="synthetic", m=_scaled(200, scale),
                            n=_scaled(50, scale)),
        configs=[
            SolverConfig(method="cyclic-dr", alpha=0.5,
                         stop=stop12(2_000_000), trace_every=500),
            SolverConfig(method="mrrdr", r=2, alpha=0.5, beta=0.0,
                         stop=stop12(2_000_000), trace_every=500),
            SolverConfig(method="mrrdr", r=2, alpha=0.5, beta=0.4,
                         stop=stop12(2_000_000), trace_every=500),
        ],
        trials=10, seed=seed, label="fig-vs-cyclic")

    presets["fig-baselines"] = ExperimentSpec(
        problem=ProblemSpec(source="synthetic", m=_scaled(100, scale),
                            n=_scaled(50, scale)),
        configs=[
            SolverConfig(method="rk", stop=stop12(1_000_000), trace_every=500),
            SolverConfig(method="rek", stop=stop12(1_000_000), trace_every=500),
            SolverConfig(method="rgs", stop=stop12(1_000_000), trace_every=500),
            SolverConfig(method="rp-admm", penalty=1.0,
                         stop=stop12(1_000_000), trace_every=500),
            SolverConfig(method="mrrdr", r=2, alpha=0.5, beta=0.4,
                         stop=stop12(1_000_000), trace_every=500),
        ],
        trials=10, seed=seed, label="fig-baselines")

    presets["fig-direction"] = ExperimentSpec(
        problem=ProblemSpec(source="adversarial", m=_scaled(500, scale),
                            n=_scaled(500, scale)),
        configs=[
            SolverConfig(method="rrdr", r=r, alpha=0.5,
                         stop=StopRule(rse_tol=1e-12, max_row_actions=30_000),
                         trace_every=250)
            for r in (1, 2, 3, 4, 10, 20)
        ],
        trials=1, seed=seed, label="fig-direction")

    presets["fig-failure"] = ExperimentSpec(
        problem=ProblemSpec(source="three-lines"),
        configs=[
            SolverConfig(method="det-rsets-dr", alpha=0.5,
                         stop=StopRule(rse_tol=1e-12, max_iterations=1000),
                         trace_every=30),
            SolverConfig(method="rrdr", r=3, alpha=0.5,
                         stop=StopRule(rse_tol=1e-12, max_row_actions=10_000),
                         trace_every=30),
        ],
        trials=10, seed=seed, label="fig-failure",
        allow_divergence=False)

    return presets


def preset(name: str, scale: float = 1.0, seed: int = 12345) -> ExperimentSpec:
    all_presets = figure_presets(scale=scale, seed=seed)
    if name not in all_presets:
        known = ", ".join(sorted(all_presets))
        raise ConfigError(f"unknown preset '{name}' (known: {known})")
    return all_presets[name]
