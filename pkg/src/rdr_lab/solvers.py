"""Row-action solvers for consistent linear systems.

The main method reflects the iterate through ``r`` norm-weighted sampled row
hyperplanes and averages the result back with weight ``alpha``; a heavy-ball
term turns it into the momentum variant.  Classical baselines (Kaczmarz,
extended Kaczmarz, Gauss-Seidel, cyclic Douglas-Rachford, a deterministic
all-rows variant, and randomly permuted ADMM) share the same driver and
trace format.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .problems import Problem
from .sampling import Rng

METHODS = ("rrdr", "mrrdr", "rk", "rek", "rgs", "cyclic-dr", "det-rsets-dr",
           "rp-admm")

DIVERGENCE_RSE = 1e6
RGS_RECOMPUTE_EVERY = 10 ** 4


@dataclass
class StopRule:
    """Termination bounds; at least one must be finite."""

    rse_tol: float | None = 1e-12
    max_row_actions: int | None = None
    max_iterations: int | None = None

    def __post_init__(self):
        if self.rse_tol is None and self.max_row_actions is None \
                and self.max_iterations is None:
            raise ValueError("invalid parameter: no finite stopping bound")
        if self.rse_tol is not None and not (0.0 < self.rse_tol):
            raise ValueError("invalid parameter: rse_tol must be positive")


@dataclass
class SolverConfig:
    """Method selection plus every tunable the methods share."""

    method: str
    r: int = 1
    alpha: float = 0.5
    beta: float = 0.0
    penalty: float = 1.0
    seed: int = 0
    stop: StopRule = field(default_factory=StopRule)
    trace_every: int = 0  # row actions between trace records; 0 = ends only

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method: {self.method}")
        if int(self.r) != self.r or self.r < 1:
            raise ValueError("invalid parameter: r must be a positive integer")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("invalid parameter: alpha must lie in (0, 1)")
        if self.beta < 0.0:
            raise ValueError("invalid parameter: beta must be >= 0")
        if self.penalty <= 0.0:
            raise ValueError("invalid parameter: penalty must be positive")
        if self.trace_every < 0:
            raise ValueError("invalid parameter: trace_every must be >= 0")

    def label(self) -> str:
        parts = [self.method]
        if self.method in ("rrdr", "mrrdr", "det-rsets-dr"):
            parts.append(f"r={self.r}")
        if self.method in ("rrdr", "mrrdr", "cyclic-dr", "det-rsets-dr"):
            parts.append(f"a={self.alpha:g}")
        if self.method == "mrrdr":
            parts.append(f"b={self.beta:g}")
        if self.method == "rp-admm":
            parts.append(f"pen={self.penalty:g}")
        return parts[0] if len(parts) == 1 else f"{parts[0]}[{','.join(parts[1:])}]"


@dataclass
class SolverState:
    """Mutable per-trial state; owned by exactly one run."""

    x: np.ndarray
    x_prev: np.ndarray | None = None
    z_aux: np.ndarray | None = None     # extended-Kaczmarz auxiliary sequence
    mu: np.ndarray | None = None        # ADMM multiplier
    residual: np.ndarray | None = None  # A x - b, maintained incrementally
    k: int = 0
    row_actions: int = 0
    cyclic_cursor: int = 0
    z_last: np.ndarray | None = None    # last reflected point, for diagnostics
    rgs_steps_since_refresh: int = 0


@dataclass
class TraceRecord:
    k: int
    row_actions: int
    rse: float
    residual_norm2: float | None = None
    dir_ratio: float | None = None
    vmin_overlap: float | None = None


@dataclass
class RunResult:
    status: str  # converged | budget-exhausted | diverged | numerical-divergence
    iterations: int
    row_actions: int
    rse: float
    x: np.ndarray
    records: list
    state: SolverState


# ---------------------------------------------------------------------------
# step functions
# ---------------------------------------------------------------------------


def rrdr_step(state: SolverState, problem: Problem, config: SolverConfig,
              rng: Rng) -> SolverState:
    """One iteration: r sampled reflections, then alpha-averaging."""
    A = problem.A
    rows = problem.row_sampler.sample_many(rng, config.r)
    arr, rn, b = A.entries, A.row_norms_sq, problem.b
    z = state.x.copy()
    for j in rows:
        a = arr[j]
        z -= (2.0 * (a @ z - b[j]) / rn[j]) * a
    state.z_last = z
    state.x = (1.0 - config.alpha) * state.x + config.alpha * z
    state.k += 1
    state.row_actions += config.r
    return state


def mrrdr_step(state: SolverState, problem: Problem, config: SolverConfig,
               rng: Rng) -> SolverState:
    """Momentum variant: the averaged step plus beta times the last move."""
    A = problem.A
    rows = problem.row_sampler.sample_many(rng, config.r)
    arr, rn, b = A.entries, A.row_norms_sq, problem.b
    x = state.x
    z = x.copy()
    for j in rows:
        a = arr[j]
        z -= (2.0 * (a @ z - b[j]) / rn[j]) * a
    state.z_last = z
    # with beta = 0 the momentum term is exactly zero and the trajectory
    # matches the plain method bit for bit
    state.x = ((1.0 - config.alpha) * x + config.alpha * z) \
        + config.beta * (x - state.x_prev)
    state.x_prev = x
    state.k += 1
    state.row_actions += config.r
    return state


def rk_step(state: SolverState, problem: Problem, config: SolverConfig,
            rng: Rng) -> SolverState:
    """Randomized Kaczmarz: project onto one norm-weighted sampled row."""
    A = problem.A
    j = problem.row_sampler.sample(rng)
    a = A.entries[j]
    state.x = state.x - ((a @ state.x - problem.b[j]) / A.row_norms_sq[j]) * a
    state.k += 1
    state.row_actions += 1
    return state


def rek_step(state: SolverState, problem: Problem, config: SolverConfig,
             rng: Rng) -> SolverState:
    """Extended Kaczmarz: one column step on the auxiliary sequence, then one
    row projection against the corrected right-hand side."""
    A = problem.A
    arr = A.entries
    j = problem.col_sampler.sample(rng)
    col = arr[:, j]
    z = state.z_aux
    z -= ((col @ z) / A.col_norms_sq[j]) * col
    i = problem.row_sampler.sample(rng)
    a = arr[i]
    state.x = state.x - ((a @ state.x - problem.b[i] + z[i]) / A.row_norms_sq[i]) * a
    state.k += 1
    state.row_actions += 2  # one column touch plus one row touch
    return state


def rgs_step(state: SolverState, problem: Problem, config: SolverConfig,
             rng: Rng) -> SolverState:
    """Randomized Gauss-Seidel / coordinate descent on the least-squares
    objective, with an incrementally maintained residual."""
    A = problem.A
    j = problem.col_sampler.sample(rng)
    col = A.entries[:, j]
    delta = -(col @ state.residual) / A.col_norms_sq[j]
    state.x[j] += delta
    state.residual += delta * col
    state.rgs_steps_since_refresh += 1
    if state.rgs_steps_since_refresh >= RGS_RECOMPUTE_EVERY:
        # cap incremental drift with a periodic full recompute
        state.residual = A.entries @ state.x - problem.b
        state.rgs_steps_since_refresh = 0
    state.k += 1
    state.row_actions += 1
    return state


def cyclic_dr_step(state: SolverState, problem: Problem, config: SolverConfig,
                   rng: Rng) -> SolverState:
    """Cyclic Douglas-Rachford: reflect through two consecutive rows in cyclic
    order, then average."""
    A = problem.A
    arr, rn, b = A.entries, A.row_norms_sq, problem.b
    i1 = state.cyclic_cursor
    i2 = (i1 + 1) % A.m
    z = state.x.copy()
    for j in (i1, i2):
        a = arr[j]
        z -= (2.0 * (a @ z - b[j]) / rn[j]) * a
    state.z_last = z
    state.x = (1.0 - config.alpha) * state.x + config.alpha * z
    state.cyclic_cursor = (i1 + 1) % A.m
    state.k += 1
    state.row_actions += 2
    return state


def det_rsets_dr_step(state: SolverState, problem: Problem, config: SolverConfig,
                      rng: Rng) -> SolverState:
    """Deterministic variant: compose all m reflections in index order."""
    A = problem.A
    arr, rn, b = A.entries, A.row_norms_sq, problem.b
    z = state.x.copy()
    for j in range(A.m):
        a = arr[j]
        z -= (2.0 * (a @ z - b[j]) / rn[j]) * a
    state.z_last = z
    state.x = (1.0 - config.alpha) * state.x + config.alpha * z
    state.k += 1
    state.row_actions += A.m
    return state


def rp_admm_step(state: SolverState, problem: Problem, config: SolverConfig,
                 rng: Rng) -> SolverState:
    """Randomly permuted ADMM sweep on the augmented Lagrangian.

    Coordinates are minimized exactly in a fresh uniform permutation against
    partially updated values, then the multiplier takes a unit step along the
    constraint residual.
    """
    A = problem.A
    arr = A.entries
    cn = A.col_norms_sq
    pen = config.penalty
    res = state.residual
    mu_over_pen = state.mu / pen
    perm = rng.permutation(A.n)
    for j in perm:
        if cn[j] == 0.0:
            warnings.warn("rp-admm: skipping zero column", stacklevel=2)
            continue
        col = arr[:, j]
        delta = -(col @ res - col @ mu_over_pen) / cn[j]
        state.x[j] += delta
        res += delta * col
    # refresh before the multiplier step so incremental drift cannot build up
    state.residual = arr @ state.x - problem.b
    state.mu -= state.residual
    state.k += 1
    state.row_actions += A.n
    return state


_STEPS = {
    "rrdr": rrdr_step,
    "mrrdr": mrrdr_step,
    "rk": rk_step,
    "rek": rek_step,
    "rgs": rgs_step,
    "cyclic-dr": cyclic_dr_step,
    "det-rsets-dr": det_rsets_dr_step,
    "rp-admm": rp_admm_step,
}


def _rank_at_least_two(A) -> bool:
    """Cheap full-scan check that not all rows are parallel."""
    arr = A.entries
    base = None
    base_nsq = 0.0
    for i in range(A.m):
        nsq = A.row_norms_sq[i]
        if nsq == 0.0:
            continue
        row = arr[i]
        if base is None:
            base = row
            base_nsq = nsq
            continue
        resid = row - ((base @ row) / base_nsq) * base
        if float(resid @ resid) > 1e-24 * nsq:
            return True
    return False


def init_state(problem: Problem, config: SolverConfig) -> SolverState:
    """Per-method state setup from the problem's start point."""
    x = problem.x0.astype(np.float64).copy()
    state = SolverState(x=x)
    if config.method == "mrrdr":
        state.x_prev = x.copy()  # cold start: previous iterate equals x0
    if config.method == "rek":
        state.z_aux = problem.b.astype(np.float64).copy()
    if config.method in ("rgs", "rp-admm"):
        state.residual = problem.A.entries @ x - problem.b
    if config.method == "rp-admm":
        state.mu = np.zeros(problem.A.m)
    return state


def run(problem: Problem, config: SolverConfig, metrics_fn=None) -> RunResult:
    """Drive one solver trial to its stopping rule.

    Parameters
    ----------
    problem : Problem
    config : SolverConfig
        ``config.seed`` fixes the trajectory completely.
    metrics_fn : callable, optional
        Maps the current iterate to ``(dir_ratio, vmin_overlap)``; attached
        to trace records when given.

    Returns
    -------
    RunResult
        Terminal status, counters, trace records, and the final iterate.
        The relative squared error (RSE) is measured against the projection
        of the start point onto the solution set.
    """
    step = _STEPS.get(config.method)
    if step is None:
        raise ValueError(f"unknown method: {config.method}")
    if config.method in ("rrdr", "mrrdr") and config.r % 2 == 0 \
            and not _rank_at_least_two(problem.A):
        raise ValueError("even-r requires rank >= 2")
    if problem.A.zero_rows and config.method in ("cyclic-dr", "det-rsets-dr"):
        raise ValueError("degenerate hyperplane: zero row in cyclic sweep")

    rng = Rng(config.seed)
    state = init_state(problem, config)
    x0_star = problem.x0_star
    diff0 = state.x - x0_star
    den = float(diff0 @ diff0)
    stop = config.stop
    records = []

    def rse_of(x):
        d = x - x0_star
        return float(d @ d) / den if den > 0.0 else 0.0

    def emit(rse):
        rec = TraceRecord(k=state.k, row_actions=state.row_actions, rse=rse)
        resid = problem.A.entries @ state.x - problem.b
        rec.residual_norm2 = float(np.sqrt(resid @ resid))
        if metrics_fn is not None:
            rec.dir_ratio, rec.vmin_overlap = metrics_fn(state.x)
        records.append(rec)

    rse = rse_of(state.x)
    emit(rse)
    status = None
    if den == 0.0 or (stop.rse_tol is not None and rse < stop.rse_tol):
        status = "converged"
    next_trace = None
    if config.trace_every > 0:
        next_trace = config.trace_every

    while status is None:
        step(state, problem, config, rng)
        rse = rse_of(state.x)
        if not np.isfinite(rse):
            status = "numerical-divergence"
            break
        if rse > DIVERGENCE_RSE:
            status = "diverged"
            break
        if stop.rse_tol is not None and rse < stop.rse_tol:
            status = "converged"
            break
        if stop.max_iterations is not None and state.k >= stop.max_iterations:
            status = "budget-exhausted"
            break
        if stop.max_row_actions is not None and state.row_actions >= stop.max_row_actions:
            status = "budget-exhausted"
            break
        if next_trace is not None and state.row_actions >= next_trace:
            emit(rse)
            while next_trace <= state.row_actions:
                next_trace += config.trace_every

    if not records or records[-1].k != state.k:
        emit(rse)
    return RunResult(status=status, iterations=state.k,
                     row_actions=state.row_actions, rse=rse, x=state.x,
                     records=records, state=state)


def config_with_seed(config: SolverConfig, seed: int) -> SolverConfig:
    """Copy of the config with a different trajectory seed."""
    return replace(config, seed=seed)
