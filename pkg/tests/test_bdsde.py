import math

import numpy as np
import pytest

from levybdsde import convex as C
from levybdsde.bdsde import (
    BdsdeProblem,
    RegressionRankError,
    SolverConfig,
    TerminalDomainError,
    _project,
    cauchy_gap,
    check_apriori,
    implicit_penalty_solve,
    solve_limit,
    solve_penalized,
    step_outcomes,
)
from levybdsde.levy_model import LevyModel
from levybdsde.teugels import orthonormalize


def const(c):
    return lambda x: np.full_like(np.asarray(x, dtype=float), c)


def one_driver(t, x, y, z):
    return np.ones_like(y)


def problem(model, terminal, phi, f=None, g=None, T=1.0, sigma=None, K=4):
    return BdsdeProblem(model, orthonormalize(model, K), T, terminal, phi, f=f, g=g, sigma=sigma)


def discrete_half_line(eps, N, T=1.0):
    """Y_0 of the implicit scheme for y' = 1 - y^+ / eps backward from 0."""
    dt = T / N
    return eps * (1 - (1 + dt / eps) ** (-N))


def test_trivial_constant(two_atom):
    sol = solve_penalized(problem(two_atom, const(1.0), C.zero()), SolverConfig(n_steps=10, eps=0.1, n_inner=200))
    assert np.all(sol.Y == 1.0) and np.all(sol.Z == 0.0) and np.all(sol.U == 0.0)


def test_linear_driver_exponential(two_atom):
    f = lambda t, x, y, z: y
    sol = solve_penalized(problem(two_atom, const(1.0), C.zero(), f=f), SolverConfig(n_steps=200, eps=1.0, n_inner=50))
    assert sol.Y0().value == pytest.approx((1 + 1 / 200) ** 200, rel=1e-12)
    assert abs(sol.Y0().value - math.e) <= 0.02


@pytest.mark.parametrize("eps", [0.1, 0.02])
def test_half_line_matches_discrete_oracle(two_atom, eps):
    N = 200
    prob = problem(two_atom, const(0.0), C.half_line(0.0), f=one_driver)
    sol = solve_penalized(prob, SolverConfig(n_steps=N, eps=eps, n_inner=20))
    assert sol.Y0().value == pytest.approx(discrete_half_line(eps, N), abs=1e-10)
    assert abs(sol.Y0().value - eps * (1 - math.exp(-1 / eps))) <= 2 / N
    assert np.all(sol.Y[..., -1] == 0.0)


@pytest.mark.parametrize(
    "phi", [C.half_line(0.0), C.half_line(-0.5, "upper"), C.interval(-1, 2), C.abs_(), C.quadratic()], ids=str
)
def test_implicit_step_closed_form(phi):
    # y + (dt/eps)(y - J_eps(y)) = r is solved by r + dt/(dt+eps) (J_{dt+eps}(r) - r)
    rng = np.random.default_rng(0)
    r = rng.uniform(-5, 5, 500)
    for eps, dt in [(0.1, 0.01), (1e-3, 0.05), (2.0, 0.3)]:
        y = implicit_penalty_solve(phi, eps, dt, r)
        oracle = r + dt / (dt + eps) * (C.resolvent(phi, dt + eps, r) - r)
        np.testing.assert_allclose(y, oracle, atol=1e-10)


def test_implicit_step_monotone():
    rng = np.random.default_rng(4)
    phi = C.interval(-1, 1).without_prox()
    a = rng.uniform(-10, 10, 2000)
    b = a + rng.exponential(1.0, 2000)
    ya = implicit_penalty_solve(phi, 0.01, 0.1, a)
    yb = implicit_penalty_solve(phi, 0.01, 0.1, b)
    assert np.all(ya <= yb)


def test_explicit_mode_runs(two_atom):
    prob = problem(two_atom, const(0.0), C.half_line(0.0), f=one_driver)
    sol = solve_penalized(prob, SolverConfig(n_steps=100, eps=0.1, n_inner=10, step_mode="explicit"))
    # explicit Euler for y' = 1 - y / eps backward; stable since dt < eps
    dt, y = 0.01, 0.0
    for _ in range(100):
        y = y + dt - dt / 0.1 * max(y, 0.0)
    assert sol.Y0().value == pytest.approx(y, abs=1e-12)


def test_terminal_outside_domain(two_atom):
    with pytest.raises(TerminalDomainError):
        solve_penalized(problem(two_atom, const(1.0), C.half_line(0.0)), SolverConfig(n_steps=2, eps=0.1, n_inner=5))


def test_rank_deficient_design():
    A = np.column_stack([np.ones(5), np.ones(5)])
    with pytest.raises(RegressionRankError):
        _project(A, np.arange(5.0))


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(n_steps=0, eps=0.1)
    with pytest.raises(ValueError):
        SolverConfig(n_steps=1, eps=0.0)
    with pytest.raises(ValueError):
        SolverConfig(n_steps=1, eps=0.1, ce_method="pde")
    with pytest.raises(ValueError):
        BdsdeProblem(LevyModel(0, 1, ()), orthonormalize(LevyModel(0, 1, ()), 1), 1.0, const(0), C.zero(), lip_alpha=1.0)


def poisson_tail(mu, J):
    return 1 - sum(math.exp(-mu) * mu**n / math.factorial(n) for n in range(J + 1))


def test_tree_outcome_weights(two_atom):
    basis = orthonormalize(two_atom, 4)
    prob, cont, counts, dH = step_outcomes(two_atom, basis, 0.1, 3, 3)
    assert prob.sum() == pytest.approx(1.0)
    assert len(prob) == 10
    # martingale increments with covariance dt I, up to the truncated tail mass
    tail = poisson_tail(0.1, 3)
    assert np.abs(prob @ dH).max() < 10 * tail
    np.testing.assert_allclose((dH * prob[:, None]).T @ dH, 0.1 * np.eye(2), atol=20 * tail)


def step_var_tree(model, dt, J):
    """Variance of the two-atom step increment under the truncated Poisson weights."""
    basis = orthonormalize(model, 2)
    prob, cont, counts, dH = step_outcomes(model, basis, dt, J, 1)
    dL = cont + counts @ model.sizes
    return prob @ dL**2 - (prob @ dL) ** 2, prob @ dL


def test_tree_small_instance(two_atom):
    sq = lambda x: np.asarray(x) ** 2
    sol = solve_penalized(problem(two_atom, sq, C.zero()), SolverConfig(n_steps=3, eps=1, ce_method="tree", max_jumps=3))
    v, m = step_var_tree(two_atom, 1 / 3, 3)
    # independent symmetric steps: E[L_T^2] = 3 Var(step) under the tree measure
    assert abs(m) < 1e-15
    assert sol.Y0().value == pytest.approx(3 * v, rel=1e-12)
    # the truncated tail (4+ jumps in a step) carries about 16 P(N = 4) of the second moment
    assert abs(sol.Y0().value - 1.0) < 3 * 16 * 3 * poisson_tail(1 / 3, 3)
    assert sol.weights.sum() == pytest.approx(1.0)


def test_tree_geometric_mean():
    # sigma(x) = x, jump size 1: each jump doubles X, E X_T = exp(lam T); truncation at 3 jumps per step
    lam = 0.3
    m = LevyModel(0.0, 0.0, ((1.0, lam),))
    prob = problem(m, lambda x: np.asarray(x), C.zero(), sigma=lambda x: x)
    prob = BdsdeProblem(m, prob.basis, 1.0, prob.terminal, C.zero(), x0=1.0, sigma=lambda x: x)
    sol = solve_penalized(prob, SolverConfig(n_steps=3, eps=1, ce_method="tree", max_jumps=3))
    pmf = np.array([math.exp(-lam / 3) * (lam / 3) ** n / math.factorial(n) for n in range(4)])
    per_step = pmf @ 2.0 ** np.arange(4) / pmf.sum()
    assert sol.Y0().value == pytest.approx(per_step**3, rel=1e-12)
    assert sol.Y0().value == pytest.approx(math.exp(lam), rel=3 * 16 * poisson_tail(lam / 3, 3))


def test_z_of_terminal_L(two_atom):
    # L_T = H^(1)_T for the two-atom model, so Z = (1, 0) up to tree truncation
    ident = lambda x: np.asarray(x, dtype=float)
    sol = solve_penalized(problem(two_atom, ident, C.zero()), SolverConfig(n_steps=3, eps=1, ce_method="tree"))
    v, _ = step_var_tree(two_atom, 1 / 3, 3)
    np.testing.assert_allclose(sol.Z[..., 0], 3 * v, rtol=1e-12)
    np.testing.assert_allclose(sol.Z[..., 1], 0.0, atol=1e-12)
    reg = solve_penalized(problem(two_atom, ident, C.zero()), SolverConfig(n_steps=10, eps=1, n_inner=4000))
    # regression: Monte Carlo error only
    assert abs(reg.Z[..., 0].mean() - 1.0) < 0.05
    assert abs(reg.Z[..., 1].mean()) < 0.05


def test_tree_and_regression_agree(two_atom):
    prob = problem(two_atom, lambda x: np.clip(x, -1, 1), C.interval(-1, 1), f=one_driver)
    tree = solve_penalized(prob, SolverConfig(n_steps=4, eps=0.05, ce_method="tree"))
    reg = solve_penalized(prob, SolverConfig(n_steps=4, eps=0.05, n_inner=20_000, degree=3))
    est = reg.Y0()
    assert abs(tree.Y0().value - est.value) < 4 * est.stderr + 0.01


def test_domain_attraction(two_atom):
    F, G, N = 2.0, 0.5, 50
    dt = 1.0 / N
    eps = dt / 2
    phi = C.interval(-1, 1)
    prob = problem(two_atom, lambda x: np.clip(x, -1, 1), phi, f=lambda t, x, y, z: np.full_like(y, F), g=lambda t, x, y, z: np.full_like(y, G))
    sol = solve_penalized(prob, SolverConfig(n_steps=N, eps=eps, n_inner=500, n_outer=4))
    assert phi.dist_to_domain(sol.Y).max() <= 5 * (eps * F + math.sqrt(dt) * G)


def test_reduction_invariance(two_atom):
    prob = problem(two_atom, lambda x: np.sin(x), C.zero(), f=lambda t, x, y, z: -0.5 * y + z[:, 0], g=lambda t, x, y, z: 0.3 * y)
    a = solve_penalized(prob, SolverConfig(n_steps=20, eps=0.1, n_inner=300, n_outer=2))
    b = solve_penalized(prob, SolverConfig(n_steps=20, eps=1e-4, n_inner=300, n_outer=2))
    np.testing.assert_array_equal(a.Y, b.Y)
    np.testing.assert_array_equal(a.Z, b.Z)


def test_brownian_role(two_atom):
    prob = problem(two_atom, lambda x: np.cos(x), C.interval(-1, 1), f=lambda t, x, y, z: 0.2 * y)
    cfg = SolverConfig(n_steps=15, eps=0.05, n_inner=300, n_outer=2, brownian_seed=1)
    a = solve_penalized(prob, cfg)
    b = solve_penalized(prob, SolverConfig(**{**cfg.__dict__, "brownian_seed": 2}))
    assert not np.array_equal(a.dB, b.dB)
    np.testing.assert_array_equal(a.Y, b.Y)


def test_brownian_forcing_moves_solution(two_atom):
    prob = problem(two_atom, const(0.5), C.zero(), g=lambda t, x, y, z: np.ones_like(y))
    sol = solve_penalized(prob, SolverConfig(n_steps=10, eps=1, n_inner=50, n_outer=3))
    # with g = 1 the value is xi + sum of the remaining B increments
    np.testing.assert_allclose(sol.Y0_samples(), 0.5 + sol.dB.sum(axis=1), atol=1e-12)


def test_workers_are_deterministic(two_atom):
    prob = problem(two_atom, lambda x: np.tanh(x), C.half_line(1.0), f=one_driver, g=lambda t, x, y, z: 0.1 * y)
    a = solve_penalized(prob, SolverConfig(n_steps=10, eps=0.05, n_inner=200, n_outer=5, workers=1))
    b = solve_penalized(prob, SolverConfig(n_steps=10, eps=0.05, n_inner=200, n_outer=5, workers=3))
    np.testing.assert_array_equal(a.Y, b.Y)
    assert a.diagnostics == b.diagnostics


def test_pathwise_mean_is_y0(two_atom):
    prob = problem(two_atom, lambda x: x**2, C.zero(), f=lambda t, x, y, z: 0.3 * y)
    sol = solve_penalized(prob, SolverConfig(n_steps=10, eps=1, n_inner=1000))
    assert sol.pathwise[0].mean() == pytest.approx(sol.Y0().value, abs=1e-12)


def test_limit_zero_phi_gaps_vanish(two_atom):
    prob = problem(two_atom, lambda x: np.sin(x), C.zero())
    _, rep, _ = solve_limit(prob, SolverConfig(n_steps=10, eps=0.1, n_inner=100), [0.1, 0.05, 0.025])
    assert rep.gaps == [0.0, 0.0]


def test_limit_gaps_decrease_tree(two_atom):
    prob = problem(two_atom, lambda x: np.clip(x, -1, 1), C.interval(-1, 1), f=lambda t, x, y, z: np.full_like(y, 2.0))
    _, rep, _ = solve_limit(prob, SolverConfig(n_steps=4, eps=0.1, ce_method="tree"), [0.2, 0.1, 0.05, 0.025])
    assert all(b < a for a, b in zip(rep.gaps, rep.gaps[1:]))
    assert rep.envelope_ok


def test_limit_requires_decreasing_ladder(two_atom):
    prob = problem(two_atom, const(0.0), C.zero())
    with pytest.raises(ValueError):
        solve_limit(prob, SolverConfig(n_steps=2, eps=0.1, n_inner=5), [0.1, 0.2])


def test_cauchy_gap_zero_for_same(two_atom):
    sol = solve_penalized(problem(two_atom, lambda x: x, C.zero()), SolverConfig(n_steps=5, eps=1, n_inner=50))
    assert cauchy_gap(sol, sol) == 0.0


def test_apriori_zero_phi(two_atom):
    sol = solve_penalized(problem(two_atom, lambda x: np.sin(x), C.zero()), SolverConfig(n_steps=10, eps=0.1, n_inner=100))
    rep = check_apriori(sol)
    assert rep.estimates[0]["pen_gap"].value == 0.0
    assert all(np.isfinite(e.value) for e in rep.estimates[0].values())


def test_apriori_half_line_bounded(two_atom):
    prob = problem(two_atom, const(0.0), C.half_line(0.0), f=one_driver)
    _, _, sols = solve_limit(prob, SolverConfig(n_steps=200, eps=0.1, n_inner=10), [0.1, 0.05, 0.025])
    rep = check_apriori(sols)
    assert max(rep.scaled_pen_gap) <= 1 + 1e-6
    assert not rep.growth_flag


def test_sup_y_stable_under_refinement(two_atom):
    prob = problem(two_atom, lambda x: np.clip(x, -1, 1), C.interval(-1, 1), f=one_driver)
    vals = [
        solve_penalized(prob, SolverConfig(n_steps=n, eps=0.05, n_inner=2000)).diagnostics["sup_Y2"].value
        for n in (20, 40, 80)
    ]
    assert all(np.isfinite(vals))
    assert max(vals) - min(vals) <= 0.1 * max(vals)
