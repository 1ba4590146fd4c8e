"""Solver tests: config validation, fixed points, method cross-checks,
trajectory invariants, the run driver, and terminal statuses."""

import math

import numpy as np
import pytest

from rdr_lab.linalg import Matrix, projected_solution
from rdr_lab.problems import (
    Problem,
    synthetic_problem,
    three_lines_failure_problem,
)
from rdr_lab.sampling import Rng
from rdr_lab.solvers import (
    DIVERGENCE_RSE,
    METHODS,
    RunResult,
    SolverConfig,
    SolverState,
    StopRule,
    config_with_seed,
    cyclic_dr_step,
    init_state,
    mrrdr_step,
    rek_step,
    rgs_step,
    rk_step,
    rp_admm_step,
    rrdr_step,
    run,
)


def _identity_problem(n=2, seed=0):
    x_star = Rng(seed).normal(n)
    x_star /= np.linalg.norm(x_star)
    return Problem(A=Matrix(np.eye(n)), b=x_star.copy(), x_star=x_star,
                   x0=np.zeros(n), x0_star=x_star.copy(), label="identity")


def _at_solution(problem):
    """Clone of the problem started exactly at its projected solution."""
    return Problem(A=problem.A, b=problem.b, x_star=problem.x_star,
                   x0=problem.x0_star.copy(), x0_star=problem.x0_star.copy(),
                   label=problem.label)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError, match="unknown method"):
        SolverConfig(method="sor")
    with pytest.raises(ValueError, match="alpha"):
        SolverConfig(method="rrdr", alpha=1.0)
    with pytest.raises(ValueError, match="alpha"):
        SolverConfig(method="rrdr", alpha=0.0)
    with pytest.raises(ValueError, match="beta"):
        SolverConfig(method="mrrdr", beta=-0.1)
    with pytest.raises(ValueError, match="r must be"):
        SolverConfig(method="rrdr", r=0)
    with pytest.raises(ValueError, match="penalty"):
        SolverConfig(method="rp-admm", penalty=0.0)
    with pytest.raises(ValueError, match="trace_every"):
        SolverConfig(method="rk", trace_every=-1)


def test_stop_rule_needs_a_bound():
    with pytest.raises(ValueError, match="no finite stopping bound"):
        StopRule(rse_tol=None)
    with pytest.raises(ValueError, match="rse_tol"):
        StopRule(rse_tol=0.0)
    StopRule(rse_tol=None, max_iterations=5)  # fine


def test_config_labels():
    assert SolverConfig(method="rk").label() == "rk"
    assert SolverConfig(method="rrdr", r=2).label() == "rrdr[r=2,a=0.5]"
    assert SolverConfig(method="mrrdr", r=3, alpha=0.5, beta=0.4).label() \
        == "mrrdr[r=3,a=0.5,b=0.4]"
    assert SolverConfig(method="rp-admm").label() == "rp-admm[pen=1]"


def test_config_with_seed():
    cfg = SolverConfig(method="rrdr", r=2, seed=1)
    cfg2 = config_with_seed(cfg, 99)
    assert cfg2.seed == 99 and cfg2.method == "rrdr" and cfg2.r == 2
    assert cfg.seed == 1  # original untouched


# ---------------------------------------------------------------------------
# fixed points: every method holds the solution
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("method", METHODS)
def test_solution_is_fixed_point(method):
    from rdr_lab.solvers import _STEPS

    base = synthetic_problem(12, 5, seed=96)
    problem = _at_solution(base)
    cfg = SolverConfig(method=method, r=2, alpha=0.5, beta=0.3, seed=7,
                       stop=StopRule(rse_tol=None, max_iterations=3))
    state = init_state(problem, cfg)
    if method == "rek":
        # the auxiliary sequence starts at b and moves x until it drains;
        # the joint fixed point is (x*, z=0)
        state.z_aux = np.zeros(problem.A.m)
    rng = Rng(7)
    scale = np.linalg.norm(problem.x0_star) + 1.0
    for _ in range(3):
        _STEPS[method](state, problem, cfg, rng)
    assert np.linalg.norm(state.x - problem.x0_star) <= 1e-10 * scale


# ---------------------------------------------------------------------------
# cross-method reductions
# ---------------------------------------------------------------------------


def test_rk_equals_r1_half_relaxation():
    problem = synthetic_problem(20, 8, seed=14)
    kwargs = dict(seed=5, stop=StopRule(rse_tol=None, max_iterations=200))
    res_rk = run(problem, SolverConfig(method="rk", **kwargs))
    res_dr = run(problem, SolverConfig(method="rrdr", r=1, alpha=0.5, **kwargs))
    scale = np.linalg.norm(problem.x0_star)
    assert np.abs(res_rk.x - res_dr.x).max() <= 1e-9 * scale
    assert res_rk.row_actions == res_dr.row_actions


def test_momentum_beta_zero_bitwise_reduction():
    problem = synthetic_problem(15, 6, seed=23)
    kwargs = dict(r=2, alpha=0.6, seed=11,
                  stop=StopRule(rse_tol=None, max_iterations=150))
    res_a = run(problem, SolverConfig(method="rrdr", **kwargs))
    res_b = run(problem, SolverConfig(method="mrrdr", beta=0.0, **kwargs))
    np.testing.assert_array_equal(res_a.x, res_b.x)
    assert res_a.rse == res_b.rse


def test_deterministic_replay():
    problem = synthetic_problem(25, 10, seed=31)
    cfg = SolverConfig(method="mrrdr", r=3, alpha=0.5, beta=0.3, seed=404,
                       stop=StopRule(rse_tol=None, max_iterations=100),
                       trace_every=10)
    res1, res2 = run(problem, cfg), run(problem, cfg)
    np.testing.assert_array_equal(res1.x, res2.x)
    assert [r.row_actions for r in res1.records] == [r.row_actions for r in res2.records]
    assert [r.rse for r in res1.records] == [r.rse for r in res2.records]


# ---------------------------------------------------------------------------
# per-method mechanics
# ---------------------------------------------------------------------------


def test_rek_identity_zeroes_aux_coordinate():
    problem = _identity_problem(n=4, seed=2)
    cfg = SolverConfig(method="rek", seed=3)
    state = init_state(problem, cfg)
    np.testing.assert_array_equal(state.z_aux, problem.b)
    rng = Rng(3)
    before = state.z_aux.copy()
    rek_step(state, problem, cfg, rng)
    changed = np.flatnonzero(state.z_aux != before)
    assert changed.size == 1 and state.z_aux[changed[0]] == 0.0
    assert state.row_actions == 2


def test_rek_converges_to_projected_solution():
    problem = synthetic_problem(30, 12, seed=44)
    cfg = SolverConfig(method="rek", seed=9,
                       stop=StopRule(rse_tol=1e-12, max_row_actions=200_000))
    res = run(problem, cfg)
    assert res.status == "converged"
    scale = np.linalg.norm(problem.x0_star)
    assert np.linalg.norm(res.x - problem.x0_star) <= 1e-5 * scale
    assert np.linalg.norm(res.state.z_aux) <= 1e-6


def test_rgs_identity_sets_coordinate():
    problem = _identity_problem(n=3, seed=5)
    cfg = SolverConfig(method="rgs", seed=21)
    state = init_state(problem, cfg)
    rng = Rng(21)
    rgs_step(state, problem, cfg, rng)
    j = int(np.flatnonzero(state.x != 0.0)[0])
    assert state.x[j] == problem.b[j]
    assert state.row_actions == 1


def test_rgs_drives_residual_down():
    problem = synthetic_problem(30, 8, seed=61)
    cfg = SolverConfig(method="rgs", seed=2,
                       stop=StopRule(rse_tol=1e-12, max_row_actions=50_000))
    res = run(problem, cfg)
    assert res.status == "converged"
    r0 = res.records[0].residual_norm2
    assert res.records[-1].residual_norm2 <= 1e-4 * r0


def test_cyclic_cursor_alternates():
    problem = _identity_problem(n=2, seed=6)
    cfg = SolverConfig(method="cyclic-dr", alpha=0.5, seed=0)
    state = init_state(problem, cfg)
    rng = Rng(0)
    assert state.cyclic_cursor == 0
    cyclic_dr_step(state, problem, cfg, rng)
    assert state.cyclic_cursor == 1 and state.row_actions == 2
    cyclic_dr_step(state, problem, cfg, rng)
    assert state.cyclic_cursor == 0 and state.row_actions == 4


def test_cyclic_rejects_zero_row():
    arr = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    problem = Problem(A=Matrix(arr), b=np.zeros(3), x_star=np.zeros(2),
                      x0=np.ones(2), x0_star=np.zeros(2))
    for method in ("cyclic-dr", "det-rsets-dr"):
        with pytest.raises(ValueError, match="zero row"):
            run(problem, SolverConfig(method=method,
                                      stop=StopRule(rse_tol=None, max_iterations=1)))


def test_even_r_needs_rank_two():
    arr = np.array([[1.0, 2.0], [2.0, 4.0], [-1.0, -2.0]])  # all rows parallel
    x_star = np.array([0.2, 0.4])
    b = arr @ x_star
    problem = Problem(A=Matrix(arr), b=b, x_star=x_star, x0=np.zeros(2),
                      x0_star=projected_solution(arr, b, np.zeros(2)))
    for method in ("rrdr", "mrrdr"):
        with pytest.raises(ValueError, match="even-r requires rank >= 2"):
            run(problem, SolverConfig(method=method, r=2,
                                      stop=StopRule(rse_tol=None, max_iterations=1)))
        # odd r runs fine
        res = run(problem, SolverConfig(method=method, r=1,
                                        stop=StopRule(rse_tol=None, max_iterations=5)))
        assert res.iterations == 5


def test_rp_admm_identity_one_sweep():
    problem = _identity_problem(n=5, seed=8)
    cfg = SolverConfig(method="rp-admm", seed=13)
    state = init_state(problem, cfg)
    np.testing.assert_array_equal(state.mu, np.zeros(5))
    rp_admm_step(state, problem, cfg, Rng(13))
    np.testing.assert_array_equal(state.x, problem.b)
    assert state.row_actions == 5


def test_rp_admm_zero_column_warns():
    arr = np.array([[1.0, 0.0], [2.0, 0.0]])
    b = np.array([1.0, 2.0])
    problem = Problem(A=Matrix(arr), b=b, x_star=np.array([1.0, 0.0]),
                      x0=np.zeros(2), x0_star=projected_solution(arr, b, np.zeros(2)))
    cfg = SolverConfig(method="rp-admm", seed=1)
    state = init_state(problem, cfg)
    with pytest.warns(UserWarning, match="zero column"):
        rp_admm_step(state, problem, cfg, Rng(1))
    assert state.x[1] == 0.0  # skipped coordinate untouched


def test_rp_admm_coordinate_updates_minimize_lagrangian():
    # replay one sweep; each coordinate move must match a golden-section
    # minimization of the augmented Lagrangian in that coordinate
    problem = synthetic_problem(8, 4, seed=17)
    pen = 1.0
    cfg = SolverConfig(method="rp-admm", seed=29, penalty=pen)
    state = init_state(problem, cfg)
    state.mu = Rng(1000).normal(8) * 0.5  # exercise a nonzero multiplier
    mu = state.mu.copy()
    x_before = state.x.copy()
    rp_admm_step(state, problem, cfg, Rng(29))

    arr_ld = problem.A.entries.astype(np.longdouble)
    b_ld = problem.b.astype(np.longdouble)
    mu_ld = mu.astype(np.longdouble)
    gr = (math.sqrt(5.0) - 1.0) / 2.0

    def golden_min(f, lo, hi, tol=1e-11):
        # comparisons stay in extended precision; a float64 cast here would
        # sink the oracle below the 1e-8 requirement
        a, b2 = lo, hi
        c1 = b2 - gr * (b2 - a)
        c2 = a + gr * (b2 - a)
        f1, f2 = f(c1), f(c2)
        while b2 - a > tol:
            if f1 < f2:
                b2, c2, f2 = c2, c1, f1
                c1 = b2 - gr * (b2 - a)
                f1 = f(c1)
            else:
                a, c1, f1 = c1, c2, f2
                c2 = a + gr * (b2 - a)
                f2 = f(c2)
        return 0.5 * (a + b2)

    # walk the sweep's own path: previously visited coordinates hold the
    # values the step actually wrote, so each check is a pure 1-D oracle
    x_path = x_before.astype(np.longdouble)
    perm = Rng(29).permutation(4)  # same stream position as the step used
    for j in perm:
        def lagrangian(t, j=j):
            y = x_path.copy()
            y[j] = t
            res = arr_ld @ y - b_ld
            return -mu_ld @ res + 0.5 * pen * (res @ res)

        center = float(x_path[j])
        t_star = golden_min(lagrangian, center - 8.0, center + 8.0)
        assert abs(float(state.x[j]) - float(t_star)) <= 1e-8
        x_path[j] = np.longdouble(state.x[j])


# ---------------------------------------------------------------------------
# trajectory invariants
# ---------------------------------------------------------------------------


def test_reflection_chain_isometry_and_orthogonality():
    # underdetermined instance so the null space is nontrivial
    problem = synthetic_problem(8, 12, seed=42)
    cfg = SolverConfig(method="rrdr", r=2, alpha=0.5, seed=6)
    state = init_state(problem, cfg)
    rng = Rng(6)
    x0_star = problem.x0_star
    d0 = np.linalg.norm(problem.x0 - x0_star)
    _, _, vt = np.linalg.svd(problem.A.entries)
    null_basis = vt[np.linalg.matrix_rank(problem.A.entries):].T
    assert null_basis.shape[1] == 4
    for _ in range(100):
        x_before = state.x.copy()
        dist_before = np.linalg.norm(x_before - x0_star)
        rrdr_step(state, problem, cfg, rng)
        # reflections preserve distance to any solution point
        dist_z = np.linalg.norm(state.z_last - x0_star)
        assert abs(dist_z - dist_before) <= 1e-10 * (1.0 + dist_before)
        # iterates never leave the start point's row-space slice
        err = state.x - x0_star
        assert np.abs(null_basis.T @ err).max() <= 1e-9 * d0
        # alpha = 1/2 makes the move orthogonal to the remaining error
        move = state.x - x_before
        assert abs(float(err @ move)) <= 1e-9 * dist_before ** 2


def test_one_step_branch_mean():
    # average over all m^r forced branch choices matches the expected map
    problem = synthetic_problem(4, 3, seed=51)
    alpha, beta, r = 0.55, 0.25, 2
    x = Rng(60).normal(3)
    x_prev = Rng(61).normal(3)
    arr = problem.A.entries
    rn = problem.A.row_norms_sq
    weights = rn / problem.A.frob_sq
    import itertools
    mean = np.zeros(3)
    for rows in itertools.product(range(4), repeat=r):
        w = 1.0
        z = x.copy()
        for j in rows:
            w *= weights[j]
            a = arr[j]
            z -= (2.0 * (a @ z - problem.b[j]) / rn[j]) * a
        mean += w * ((1 - alpha) * x + alpha * z + beta * (x - x_prev))
    frob_sq = problem.A.frob_sq
    P = np.eye(3) - 2.0 * (arr.T @ arr) / frob_sq
    M1 = (1 - alpha + beta) * np.eye(3) + alpha * np.linalg.matrix_power(P, r)
    x_ref = projected_solution(arr, problem.b, x)
    want = M1 @ (x - x_ref) - beta * (x_prev - x_ref) + x_ref
    assert np.abs(mean - want).max() <= 1e-10


# ---------------------------------------------------------------------------
# run driver
# ---------------------------------------------------------------------------


def test_run_start_at_solution():
    problem = _at_solution(synthetic_problem(10, 4, seed=70))
    res = run(problem, SolverConfig(method="rrdr", seed=0))
    assert res.status == "converged"
    assert res.iterations == 0
    assert res.rse == 0.0


def test_run_identity_matches_hand_iteration():
    problem = _identity_problem(n=2, seed=12)
    cfg = SolverConfig(method="rrdr", r=1, alpha=0.5, seed=9, trace_every=1,
                       stop=StopRule(rse_tol=1e-12, max_row_actions=100))
    res = run(problem, cfg)
    assert res.status == "converged"
    assert res.row_actions <= 80

    # replay the trajectory by hand with the same sampled rows
    rng = Rng(9)
    x = np.zeros(2)
    den = float(problem.x0_star @ problem.x0_star)
    hand = [1.0]
    for rec in res.records[1:]:
        while len(hand) - 1 < rec.k:
            j = int(problem.row_sampler.sample_many(rng, 1)[0])
            a = problem.A.entries[j]
            z = x - (2.0 * (a @ x - problem.b[j]) / problem.A.row_norms_sq[j]) * a
            x = (1.0 - 0.5) * x + 0.5 * z
            d = x - problem.x0_star
            hand.append(float(d @ d) / den)
        assert rec.rse == hand[rec.k]


def test_run_trace_cadence():
    problem = synthetic_problem(12, 5, seed=81)
    cfg = SolverConfig(method="rk", seed=4, trace_every=3,
                       stop=StopRule(rse_tol=None, max_row_actions=10))
    res = run(problem, cfg)
    assert res.status == "budget-exhausted"
    assert [r.row_actions for r in res.records] == [0, 3, 6, 9, 10]
    ks = [r.k for r in res.records]
    assert ks == sorted(ks)


def test_run_divergence_status():
    problem = synthetic_problem(20, 8, seed=1)
    cfg = SolverConfig(method="mrrdr", r=2, alpha=0.9, beta=0.95, seed=3,
                       stop=StopRule(rse_tol=1e-12, max_iterations=10_000))
    res = run(problem, cfg)
    assert res.status == "diverged"
    assert res.rse > DIVERGENCE_RSE


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_run_numerical_divergence_status():
    # a huge momentum factor overflows the squared error in one step
    problem = synthetic_problem(10, 4, seed=2)
    cfg = SolverConfig(method="mrrdr", r=1, alpha=0.5, beta=1e160, seed=0,
                       stop=StopRule(rse_tol=1e-12, max_iterations=100))
    res = run(problem, cfg)
    assert res.status == "numerical-divergence"


def test_run_failure_instance_cycles():
    problem = three_lines_failure_problem()
    cfg = SolverConfig(method="det-rsets-dr", alpha=0.5,
                       stop=StopRule(rse_tol=None, max_iterations=1000))
    res = run(problem, cfg)
    assert res.status == "budget-exhausted"
    assert res.rse == pytest.approx(1.0, abs=1e-12)  # never moved


def test_run_failure_instance_randomized_escapes():
    problem = three_lines_failure_problem()
    cfg = SolverConfig(method="rrdr", r=3, alpha=0.5, seed=2,
                       stop=StopRule(rse_tol=1e-9, max_row_actions=100_000))
    res = run(problem, cfg)
    assert res.status == "converged"


def test_run_counts_row_actions_per_method():
    problem = synthetic_problem(9, 4, seed=55)
    for method, per_iter in (("rrdr", 3), ("rk", 1), ("rek", 2),
                             ("rgs", 1), ("cyclic-dr", 2),
                             ("det-rsets-dr", 9), ("rp-admm", 4)):
        cfg = SolverConfig(method=method, r=3,
                           stop=StopRule(rse_tol=None, max_iterations=4))
        res = run(problem, cfg)
        assert res.row_actions == 4 * per_iter, method


def test_run_records_monotone_counters():
    problem = synthetic_problem(15, 6, seed=90)
    cfg = SolverConfig(method="rrdr", r=2, seed=8, trace_every=6,
                       stop=StopRule(rse_tol=1e-12, max_row_actions=2000))
    res = run(problem, cfg)
    ra = [r.row_actions for r in res.records]
    assert ra == sorted(ra)
    assert res.records[0].row_actions == 0
    assert res.records[-1].row_actions == res.row_actions
