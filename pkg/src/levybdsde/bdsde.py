"""Yosida-penalized BDSDE driven by Teugels martingales and an independent Brownian motion.

For a penalization level ``eps`` the scheme solves, backward on a uniform grid,

    Y_k + (dt / eps) D phi_eps(Y_k) = E_k[Y_{k+1}] + f(t_k, X_k, Ybar, Z_k) dt + g(t_k, X_k, Ybar, Z_k) dB_k
    Z^(i)_k = E_k[Y_{k+1} dH^(i)_k] / dt

with ``Ybar = E_k[Y_{k+1}]`` and ``U_k = D phi_eps(Y_k) / eps``. The Brownian path
is frozen per outer scenario; ``E_k`` averages over the Lévy noise of step ``k``
only, either by exhaustive enumeration of the per-step outcomes ("tree") or by
least squares on polynomials of a Markov state ``X`` ("regression").

Drivers are called as ``f(t, x, y, z)`` with ``x`` and ``y`` of shape ``(n,)``
and ``z`` of shape ``(n, R)``; a driver of ``None`` is identically zero.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import convex
from .convex import BisectionError, ConvexFunction
from .levy_model import LevyModel, TimeGrid, brownian_increments, forward_euler, mean_L1, nu_moment, simulate_paths
from .teugels import TeugelsBasis, h_increments

Driver = Callable[[float, np.ndarray, np.ndarray, np.ndarray], np.ndarray]

MAX_TREE_LEAVES = 2_000_000


class TerminalDomainError(ValueError):
    """A terminal value lies outside Dom(phi)."""


class RegressionRankError(RuntimeError):
    """The regression design matrix is rank deficient."""


@dataclass(frozen=True)
class BdsdeProblem:
    """Data ``(xi, f, g, phi)`` plus the forward state the terminal value reads.

    The state is ``X = x0 + int sigma(X_{r-}) dL_r`` started at ``t0``;
    ``sigma=None`` gives ``X = x0 + L``. ``terminal`` maps ``X_T`` to ``xi``.
    ``lip_C`` and ``lip_alpha`` are the user-declared Lipschitz constants of the
    drivers; the z-constant of ``g`` must be below one.
    """

    model: LevyModel
    basis: TeugelsBasis
    T: float
    terminal: Callable[[np.ndarray], np.ndarray]
    phi: ConvexFunction
    f: Optional[Driver] = None
    g: Optional[Driver] = None
    t0: float = 0.0
    x0: float = 0.0
    sigma: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lip_C: float = 1.0
    lip_alpha: float = 0.0

    def __post_init__(self):
        if not self.t0 < self.T:
            raise ValueError("need t0 < T")
        if not 0.0 <= self.lip_alpha < 1.0:
            raise ValueError(f"z-Lipschitz constant of g must lie in [0, 1), got {self.lip_alpha}")
        if self.lip_C < 0:
            raise ValueError("lip_C must be >= 0")


@dataclass(frozen=True)
class SolverConfig:
    n_steps: int
    eps: float
    n_inner: int = 1000
    n_outer: int = 1
    ce_method: str = "regression"
    degree: int = 3
    step_mode: str = "implicit_prox"
    seed: int = 0
    brownian_seed: Optional[int] = None
    max_jumps: int = 3
    gh_nodes: int = 3
    workers: int = 1

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if self.n_inner < 1 or self.n_outer < 1:
            raise ValueError("n_inner and n_outer must be >= 1")
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if self.ce_method not in ("tree", "regression"):
            raise ValueError(f"ce_method must be 'tree' or 'regression', got {self.ce_method!r}")
        if self.step_mode not in ("implicit_prox", "explicit"):
            raise ValueError(f"step_mode must be 'implicit_prox' or 'explicit', got {self.step_mode!r}")
        if self.max_jumps < 0 or self.gh_nodes < 1 or self.workers < 1:
            raise ValueError("max_jumps >= 0, gh_nodes >= 1 and workers >= 1 required")


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float

    def ci(self, z: float = 1.96) -> tuple[float, float]:
        return (self.value - z * self.stderr, self.value + z * self.stderr)


@dataclass
class BdsdeSolution:
    """Discretized ``(Y, U, Z)``.

    ``Y`` and ``U`` have shape ``(n_outer, n_paths, N + 1)``, ``Z`` has shape
    ``(n_outer, n_paths, N, R)``. Rows are Lévy paths (simulated paths, or the
    leaves of the enumeration tree) with probability ``weights``.
    ``pathwise`` holds ``xi + sum_k (Y_k - Ybar_k)`` per path; its weighted
    mean reproduces ``Y_0``.
    """

    grid: TimeGrid
    eps: float
    method: str
    Y: np.ndarray
    U: np.ndarray
    Z: np.ndarray
    weights: np.ndarray
    dB: np.ndarray
    pathwise: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_outer(self) -> int:
        return self.Y.shape[0]

    def Y0_samples(self) -> np.ndarray:
        """``Y_0`` per outer scenario (deterministic given the B-path)."""
        return self.Y[:, :, 0] @ self.weights

    def Y0(self) -> Estimate:
        """Mean of ``Y_0`` over scenarios with its Monte Carlo standard error.

        Across several scenarios the spread of the per-scenario values is used;
        a single regression scenario falls back on the spread of ``pathwise``.
        The tree is exact in the Lévy noise, so one tree scenario has no error.
        """
        per = self.Y0_samples()
        n = self.n_outer
        if n > 1:
            se = math.sqrt(per.var(ddof=1) / n)
        elif self.method == "tree":
            se = 0.0
        else:
            m = self.pathwise.shape[1]
            se = math.sqrt(self.pathwise[0].var(ddof=1) / m) if m > 1 else 0.0
        return Estimate(float(per.mean()), se)

    def mean_path(self) -> dict[str, np.ndarray]:
        """Lévy-averaged ``Y``, ``U`` ``(n_outer, N+1)`` and ``Z`` ``(n_outer, N, R)``."""
        w = self.weights
        return {
            "Y": np.einsum("spk,p->sk", self.Y, w),
            "U": np.einsum("spk,p->sk", self.U, w),
            "Z": np.einsum("spkr,p->skr", self.Z, w),
        }


# ---------------------------------------------------------------------------
# penalized step


def implicit_penalty_solve(phi: ConvexFunction, eps: float, dt: float, rhs) -> np.ndarray:
    """Solve ``y + (dt/eps)(y - J_eps(y)) = rhs`` by monotone bisection.

    The solution lies within ``(dt/eps)|D phi_eps(rhs)|`` of ``rhs``; when the
    penalization vanishes at ``rhs`` the answer is ``rhs`` itself, bit for bit.
    """
    r = np.asarray(rhs, dtype=float)
    c = dt / eps
    width = c * np.abs(convex.yosida_grad(phi, eps, r))
    lo, hi = r - width, r + width
    for _ in range(convex.BISECT_MAXITER):
        open_ = hi - lo > convex.BISECT_TOL
        if not open_.any():
            break
        mid = 0.5 * (lo + hi)
        stalled = (mid <= lo) | (mid >= hi)
        resid = mid + c * convex.yosida_grad(phi, eps, mid) - r
        up = resid >= 0
        hi = np.where(open_ & ~stalled & up, mid, hi)
        lo = np.where(open_ & ~stalled & ~up, mid, lo)
        # collapse stalled brackets: they are one ulp wide
        hi = np.where(stalled, lo, hi)
    else:
        raise BisectionError("bdsde_solver: implicit penalization step did not converge")
    return np.where(width == 0, r, 0.5 * (lo + hi))


def _penalized_step(phi, eps, dt, rhs, ybar, mode):
    if phi.is_zero:
        return np.asarray(rhs, dtype=float)
    if mode == "implicit_prox":
        return implicit_penalty_solve(phi, eps, dt, rhs)
    return rhs - (dt / eps) * convex.yosida_grad(phi, eps, ybar)


def _eval_driver(drv, t, x, y, z):
    if drv is None:
        return 0.0
    return np.asarray(drv(t, x, y, z), dtype=float)


def _check_terminal(phi: ConvexFunction, xi: np.ndarray) -> None:
    lo, hi = phi.domain
    bad = (xi < lo) | (xi > hi) | ~np.isfinite(xi)
    if bad.any():
        raise TerminalDomainError(
            f"{int(bad.sum())} terminal values outside Dom(phi) = [{lo}, {hi}], e.g. {xi[bad][0]!r}"
        )


# ---------------------------------------------------------------------------
# conditional expectation by regression


def _design(x: np.ndarray, degree: int) -> np.ndarray:
    sd = x.std()
    if sd == 0.0 or degree == 0:
        return np.ones((x.size, 1))
    z = (x - x.mean()) / sd
    n_distinct = np.unique(np.round(z, 9)).size
    deg = min(degree, n_distinct - 1)
    return z[:, None] ** np.arange(deg + 1)


def _project(A: np.ndarray, targets: np.ndarray) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(A, targets, rcond=None)
    if rank < A.shape[1]:
        raise RegressionRankError(
            f"bdsde_solver: regression design matrix has rank {rank} < {A.shape[1]} columns"
        )
    fitted = A @ coef
    # a constant target is its own conditional expectation; keep it bit-exact
    flat = np.ptp(targets, axis=0) == 0
    if np.any(flat):
        fitted = np.where(flat, targets, fitted)
    return fitted


def _solve_regression(problem: BdsdeProblem, config: SolverConfig, grid: TimeGrid, dB: np.ndarray, levy_seed: int):
    model, basis, phi, eps = problem.model, problem.basis, problem.phi, config.eps
    N, dt, R = grid.n_steps, grid.dt, basis.R
    bundle = h_increments(basis, model, simulate_paths(model, grid, config.n_inner, levy_seed))
    X = forward_euler(bundle, model, problem.x0, problem.sigma)
    dH = bundle.dH
    n = config.n_inner
    Y = np.empty((n, N + 1))
    U = np.zeros((n, N + 1))
    Z = np.zeros((n, N, R))
    xi = np.asarray(problem.terminal(X[:, N]), dtype=float) * np.ones(n)
    _check_terminal(phi, xi)
    Y[:, N] = xi
    acc = np.zeros(n)
    nodes = grid.nodes
    for k in range(N - 1, -1, -1):
        A = _design(X[:, k], config.degree)
        ybar = _project(A, Y[:, k + 1])
        # E_k[Ybar dH] = 0, so centring the target only removes variance
        z = _project(A, (Y[:, k + 1] - ybar)[:, None] * dH[:, k, :]) / dt
        t = nodes[k]
        rhs = ybar + _eval_driver(problem.f, t, X[:, k], ybar, z) * dt + _eval_driver(problem.g, t, X[:, k], ybar, z) * dB[k]
        Y[:, k] = _penalized_step(phi, eps, dt, rhs, ybar, config.step_mode)
        Z[:, k] = z
        acc += Y[:, k] - ybar
    if not phi.is_zero:
        U = convex.yosida_grad(phi, eps, Y) / eps
    return Y, U, Z, np.full(n, 1.0 / n), xi + acc


# ---------------------------------------------------------------------------
# conditional expectation by exhaustive enumeration


def step_outcomes(model: LevyModel, basis: TeugelsBasis, dt: float, max_jumps: int, gh_nodes: int):
    """Enumerate the Lévy outcomes of one step.

    Jump counts per atom with total at most ``max_jumps`` carry Poisson weights,
    renormalized over the truncated set; the Gaussian increment uses
    ``gh_nodes`` Gauss-Hermite nodes when kappa > 0. Returns ``(prob, cont,
    counts, dH)`` with ``cont`` the continuous part of dL.
    """
    sizes, lams = model.sizes, model.intensities
    count_vecs = [c for c in itertools.product(range(max_jumps + 1), repeat=len(sizes)) if sum(c) <= max_jumps]
    counts = np.array(count_vecs, dtype=float).reshape(len(count_vecs), len(sizes))
    logp = np.zeros(len(counts))
    for j, lam in enumerate(lams):
        mu = lam * dt
        logp += counts[:, j] * math.log(mu) - mu - np.array([math.lgamma(c + 1) for c in counts[:, j]])
    p_jump = np.exp(logp)
    p_jump /= p_jump.sum()
    if model.gaussian_kappa > 0:
        z, w = np.polynomial.hermite_e.hermegauss(gh_nodes)
        w = w / w.sum()
    else:
        z, w = np.zeros(1), np.ones(1)
    prob = np.outer(p_jump, w).ravel()
    counts = np.repeat(counts, len(z), axis=0)
    cont = np.tile(model.continuous_drift * dt + model.gaussian_kappa * math.sqrt(dt) * z, len(count_vecs))
    dL = cont + (counts @ sizes if sizes.size else 0.0)
    Ycomp = np.empty((len(prob), basis.R))
    Ycomp[:, 0] = dL - mean_L1(model) * dt
    for m in range(2, basis.R + 1):
        Ycomp[:, m - 1] = counts @ sizes**m - nu_moment(model, m) * dt
    dH = Ycomp @ basis.coeffs.T
    return prob, cont, counts, dH


def _tree_forward(x, sigma, cont, counts, sizes):
    """Children states, outcome-major within each parent: shape (n_parents * n_outcomes,)."""
    xs = np.repeat(x, len(cont))
    c = np.tile(cont, len(x))
    if sigma is None:
        step = c + (np.tile(counts @ sizes, len(x)) if sizes.size else 0.0)
        return xs + step
    xs = xs + sigma(xs) * c
    cnt = np.tile(counts, (len(x), 1))
    for j, s in enumerate(sizes):
        for r in range(int(cnt[:, j].max(initial=0))):
            sel = cnt[:, j] > r
            xs[sel] = xs[sel] + sigma(xs[sel]) * s
    return xs


def _solve_tree(problem: BdsdeProblem, config: SolverConfig, grid: TimeGrid, dB: np.ndarray):
    model, basis, phi, eps = problem.model, problem.basis, problem.phi, config.eps
    N, dt, R = grid.n_steps, grid.dt, basis.R
    prob, cont, counts, dHo = step_outcomes(model, basis, dt, config.max_jumps, config.gh_nodes)
    b = len(prob)
    if b**N > MAX_TREE_LEAVES:
        raise ValueError(f"tree with {b}^{N} leaves exceeds {MAX_TREE_LEAVES}; use ce_method='regression'")
    levels = [np.array([float(problem.x0)])]
    for _ in range(N):
        levels.append(_tree_forward(levels[-1], problem.sigma, cont, counts, model.sizes))
    xi = np.asarray(problem.terminal(levels[N]), dtype=float) * np.ones(b**N)
    _check_terminal(phi, xi)
    Yl = [None] * (N + 1)
    Zl = [None] * N
    Ybar_l = [None] * N
    Yl[N] = xi
    nodes = grid.nodes
    for k in range(N - 1, -1, -1):
        child = Yl[k + 1].reshape(-1, b)
        ybar = child @ prob
        z = np.einsum("po,o,or->pr", child - ybar[:, None], prob, dHo) / dt
        x = levels[k]
        t = nodes[k]
        rhs = ybar + _eval_driver(problem.f, t, x, ybar, z) * dt + _eval_driver(problem.g, t, x, ybar, z) * dB[k]
        Yl[k] = _penalized_step(phi, eps, dt, rhs, ybar, config.step_mode)
        Zl[k] = z
        Ybar_l[k] = ybar
    # expand every level to the leaves (paths) of the tree
    n_leaves = b**N
    Y = np.empty((n_leaves, N + 1))
    Z = np.empty((n_leaves, N, R))
    acc = np.zeros(n_leaves)
    for k in range(N + 1):
        rep = b ** (N - k)
        Y[:, k] = np.repeat(Yl[k], rep)
        if k < N:
            Z[:, k] = np.repeat(Zl[k], rep, axis=0)
            acc += np.repeat(Yl[k] - Ybar_l[k], rep)
    weights = np.ones(1)
    for _ in range(N):
        weights = np.outer(weights, prob).ravel()
    U = np.zeros_like(Y) if phi.is_zero else convex.yosida_grad(phi, eps, Y) / eps
    return Y, U, Z, weights, xi + acc


# ---------------------------------------------------------------------------
# drivers


def _seeds(config: SolverConfig) -> tuple[list[int], int]:
    def derive(*key):
        return int(np.random.SeedSequence(config.seed, spawn_key=key).generate_state(1)[0])

    levy = [derive(1, s) for s in range(config.n_outer)]
    bseed = derive(2) if config.brownian_seed is None else config.brownian_seed
    return levy, bseed


def _diagnostics(sol: BdsdeSolution, phi: ConvexFunction) -> dict[str, Estimate]:
    w = sol.weights
    dt = sol.grid.dt
    Y, U, Z = sol.Y, sol.U, sol.Z
    J = Y if phi.is_zero else convex.resolvent(phi, sol.eps, Y)
    per_path = {
        "sup_Y2": np.max(Y**2, axis=2),
        "int_Z2": np.sum(Z**2, axis=(2, 3)) * dt,
        "int_U2": np.sum(U[:, :, :-1] ** 2, axis=2) * dt,
    }
    per_node = {
        "phi_J": np.asarray(phi.value(J), dtype=float) * np.ones_like(Y),
        "pen_gap": (Y - J) ** 2,
    }
    out = {}
    for name, vals in per_path.items():
        out[name] = _weighted_estimate(vals, w, sol.method)
    for name, vals in per_node.items():
        node_means = np.einsum("spk,p->k", vals, w) / sol.n_outer
        k = int(np.argmax(node_means))
        out[name] = _weighted_estimate(vals[:, :, k], w, sol.method)
    return out


def _weighted_estimate(vals: np.ndarray, w: np.ndarray, method: str) -> Estimate:
    """Mean over (scenario, path) of ``vals`` with path weights ``w``."""
    per = vals @ w
    n_s = vals.shape[0]
    if method == "tree":
        se = per.std(ddof=1) / math.sqrt(n_s) if n_s > 1 else 0.0
    else:
        flat = vals.ravel()
        se = flat.std(ddof=1) / math.sqrt(flat.size) if flat.size > 1 else 0.0
    return Estimate(float(per.mean()), float(se))


def solve_penalized(problem: BdsdeProblem, config: SolverConfig) -> BdsdeSolution:
    """Backward penalized scheme for every outer Brownian scenario."""
    grid = TimeGrid(problem.t0, problem.T, config.n_steps)
    levy_seeds, bseed = _seeds(config)
    dB = brownian_increments(grid, config.n_outer, bseed)

    def one(s):
        if config.ce_method == "tree":
            return _solve_tree(problem, config, grid, dB[s])
        return _solve_regression(problem, config, grid, dB[s], levy_seeds[s])

    if config.workers > 1 and config.n_outer > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            results = list(pool.map(one, range(config.n_outer)))
    else:
        results = [one(s) for s in range(config.n_outer)]
    Y = np.stack([r[0] for r in results])
    U = np.stack([r[1] for r in results])
    Z = np.stack([r[2] for r in results])
    sol = BdsdeSolution(
        grid=grid,
        eps=config.eps,
        method=config.ce_method,
        Y=Y,
        U=U,
        Z=Z,
        weights=results[0][3],
        dB=dB,
        pathwise=np.stack([r[4] for r in results]),
    )
    sol.diagnostics = _diagnostics(sol, problem.phi)
    return sol


@dataclass
class CauchyReport:
    """Gaps ``D(eps, delta)`` between consecutive ladder levels.

    ``ratios`` are ``D / (eps + delta)``; ``c3`` is the ratio at the first
    level and ``envelope_ok`` says no later level exceeds it. ``slope`` is the
    least-squares slope of ``log D`` against ``log eps`` (nan if any gap is 0).
    """

    eps: list[float]
    delta: list[float]
    gaps: list[float]
    ratios: list[float]
    slope: float
    c3: float
    envelope_ok: bool

    def rows(self) -> list[dict]:
        return [
            {"eps": e, "delta": d, "D": g, "D_over_eps_plus_delta": r}
            for e, d, g, r in zip(self.eps, self.delta, self.gaps, self.ratios)
        ]


def cauchy_gap(a: BdsdeSolution, b: BdsdeSolution) -> float:
    """``E[sup_k |Y^a_k - Y^b_k|^2 + sum_k ||Z^a_k - Z^b_k||^2 dt]`` under common noise."""
    dY = np.max((a.Y - b.Y) ** 2, axis=2)
    dZ = np.sum((a.Z - b.Z) ** 2, axis=(2, 3)) * a.grid.dt
    return float(((dY + dZ) @ a.weights).mean())


def solve_limit(
    problem: BdsdeProblem, config: SolverConfig, eps_ladder: Sequence[float], envelope_rtol: float = 0.0
) -> tuple[BdsdeSolution, CauchyReport, list[BdsdeSolution]]:
    """Solve along a decreasing eps ladder with common random numbers.

    Returns the finest-level solution (the limit estimate), the Cauchy report,
    and all level solutions.
    """
    ladder = [float(e) for e in eps_ladder]
    if len(ladder) < 2 or any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("eps_ladder must be strictly decreasing with at least two levels")
    sols = [solve_penalized(problem, replace(config, eps=e)) for e in ladder]
    gaps = [cauchy_gap(a, b) for a, b in zip(sols, sols[1:])]
    eps_l, delta_l = ladder[:-1], ladder[1:]
    ratios = [g / (e + d) for g, e, d in zip(gaps, eps_l, delta_l)]
    if all(g > 0 for g in gaps) and len(gaps) >= 2:
        slope = float(np.polyfit(np.log(eps_l), np.log(gaps), 1)[0])
    else:
        slope = float("nan")
    c3 = ratios[0]
    envelope_ok = all(r <= c3 * (1 + envelope_rtol) + 1e-300 for r in ratios[1:])
    return sols[-1], CauchyReport(eps_l, delta_l, gaps, ratios, slope, c3, envelope_ok), sols


@dataclass
class AprioriReport:
    eps: list[float]
    estimates: list[dict]
    scaled_pen_gap: list[float]
    growth_flag: bool


def check_apriori(solutions, growth_tol: float = 0.05) -> AprioriReport:
    """Collect the a-priori diagnostics of one solution or an eps ladder of them.

    ``scaled_pen_gap`` is ``sup_t E|Y_t - J_eps(Y_t)|^2 / eps^2``; the growth
    flag is raised when it increases by more than ``growth_tol`` (relative)
    between consecutive levels of a decreasing ladder.
    """
    if isinstance(solutions, BdsdeSolution):
        solutions = [solutions]
    eps = [s.eps for s in solutions]
    est = [dict(s.diagnostics) for s in solutions]
    scaled = [e["pen_gap"].value / s.eps**2 for e, s in zip(est, solutions)]
    flag = any(b > a * (1 + growth_tol) + 1e-300 for a, b in zip(scaled, scaled[1:]))
    return AprioriReport(eps, est, scaled, flag)
