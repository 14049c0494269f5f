"""Markovian layer: forward jump SDE, the integro-differential generator, the
Doss-Sussmann flow with its jet transformation, and the Monte Carlo estimator
of ``u(t, x) = Y^{t,x}_t``.

The spatial dimension is one. The stochastic forcing ``g`` of the flow is
autonomous, ``g = g(y)``, so the Stratonovich flow driven by B reduces to the
ODE flow ``dy/db = g(y)`` run for the Brownian increment ``b = B_T - B_t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .bdsde import BdsdeProblem, BdsdeSolution, Estimate, SolverConfig, solve_penalized
from .convex import ConvexFunction
from .levy_model import LevyModel, TimeGrid, forward_euler, mean_L1, simulate_paths
from .teugels import TeugelsBasis, orthonormalize

FD_STEP = 1e-5
FLOW_TOL = 1e-10


class FlowBlowUpError(RuntimeError):
    """The ODE flow left every bounded set before the increment was consumed."""


class DiffeomorphismError(ValueError):
    """``D_y eta <= 0`` at the point: the flow is not a diffeomorphism there."""


@dataclass(frozen=True)
class TestFunction:
    """A twice differentiable function of x with its first two derivatives."""

    value: Callable
    d1: Callable
    d2: Callable

    __test__ = False  # not a pytest class

    def __call__(self, x):
        return self.value(x)


def sin_test() -> TestFunction:
    return TestFunction(np.sin, np.cos, lambda x: -np.sin(x))


def poly_test(coeffs) -> TestFunction:
    """Polynomial with ascending coefficients."""
    P = np.polynomial.Polynomial(coeffs)
    return TestFunction(P, P.deriv(1), P.deriv(2))


@dataclass(frozen=True)
class MspdieProblem:
    """Coefficients of the multivalued SPDIE.

    ``sigma(x)`` multiplies dL in the forward equation (``None`` means 1),
    ``f(t, x, y, z)`` takes ``z`` of length R, ``g(t, x, y)`` is the forcing of
    the Brownian term and ``u0`` the terminal condition at ``T``.
    """

    model: LevyModel
    T: float
    u0: Callable
    phi: ConvexFunction
    sigma: Optional[Callable] = None
    f: Optional[Callable] = None
    g: Optional[Callable] = None

    def sigma_at(self, x):
        x = np.asarray(x, dtype=float)
        if self.sigma is None:
            return np.ones_like(x)
        return np.asarray(self.sigma(x), dtype=float) * np.ones_like(x)


# ---------------------------------------------------------------------------
# forward SDE


def simulate_forward(problem: MspdieProblem, t: float, x: float, grid: TimeGrid, n_paths: int, seed: int) -> np.ndarray:
    """Euler paths of ``X^{t,x}`` on ``grid``; frozen at ``x`` on nodes before ``t``.

    ``t`` must be a grid node. Runs with the same grid and seed share their
    noise, which gives the synchronous coupling.
    """
    start = _node_index(grid, t)
    bundle = simulate_paths(problem.model, grid, n_paths, seed)
    return forward_euler(bundle, problem.model, x, problem.sigma, start_step=start)


def _node_index(grid: TimeGrid, t: float) -> int:
    k = (t - grid.t0) / grid.dt
    ki = int(round(k))
    if abs(k - ki) > 1e-9 or not 0 <= ki <= grid.n_steps:
        raise ValueError(f"t={t} is not a node of the grid")
    return ki


@dataclass(frozen=True)
class FlowMoments:
    m4: float
    m4_se: float
    m2: float
    m2_se: float
    reference: float

    @property
    def m2_squared(self) -> float:
        return self.m2**2

    @property
    def ratio(self) -> float:
        """``E sup|dX|^4 / (|t'-t|^2 + |x'-x|^4)`` (nan when the points coincide)."""
        return self.m4 / self.reference if self.reference > 0 else float("nan")


def flow_moment_check(
    problem: MspdieProblem, tx, tx2, n_paths: int, grid: TimeGrid, seed: int = 0
) -> FlowMoments:
    """Moments of ``sup_s |X^{t,x}_s - X^{t',x'}_s|`` under synchronous coupling."""
    (t, x), (t2, x2) = tx, tx2
    X1 = simulate_forward(problem, t, x, grid, n_paths, seed)
    X2 = simulate_forward(problem, t2, x2, grid, n_paths, seed)
    sup = np.max(np.abs(X1 - X2), axis=1)
    s2, s4 = sup**2, sup**4
    se = lambda v: float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return FlowMoments(float(s4.mean()), se(s4), float(s2.mean()), se(s2), (t2 - t) ** 2 + (x2 - x) ** 4)


def loglog_slope(h, m) -> float:
    return float(np.polyfit(np.log(h), np.log(m), 1)[0])


def fit_power_constant(h, m, power: float) -> float:
    """Single constant ``C`` of ``m ~ C h^power``: geometric mean of ``m / h^power``."""
    h, m = np.asarray(h, dtype=float), np.asarray(m, dtype=float)
    return float(np.exp(np.mean(np.log(m / h**power))))


@dataclass(frozen=True)
class ContinuityLadder:
    """Coupled moments along a ladder of x- or t-perturbations of one base point."""

    mode: str
    h: np.ndarray
    moments: list

    @property
    def m4(self) -> np.ndarray:
        return np.array([r.m4 for r in self.moments])

    @property
    def m2_squared(self) -> np.ndarray:
        return np.array([r.m2_squared for r in self.moments])

    @property
    def m2_squared_se(self) -> np.ndarray:
        # delta method for (E S^2)^2
        return np.array([2 * r.m2 * r.m2_se for r in self.moments])

    def slope(self) -> float:
        return loglog_slope(self.h, self.m4 if self.mode == "x" else self.m2_squared)


def continuity_ladder(
    problem: MspdieProblem, t: float, x: float, hs, mode: str, n_paths: int, grid: TimeGrid, seed: int = 0
) -> ContinuityLadder:
    """``flow_moment_check`` at ``(t, x)`` against ``(t, x + h)`` or ``(t + h, x)``."""
    if mode not in ("x", "t"):
        raise ValueError(f"mode must be 'x' or 't', got {mode!r}")
    hs = np.asarray(hs, dtype=float)
    other = (lambda h: (t, x + h)) if mode == "x" else (lambda h: (t + h, x))
    reps = [flow_moment_check(problem, (t, x), other(h), n_paths, grid, seed) for h in hs]
    return ContinuityLadder(mode, hs, reps)


# ---------------------------------------------------------------------------
# generator and phi^1_k


def _as_test(fn) -> TestFunction:
    if isinstance(fn, TestFunction):
        return fn
    return TestFunction(fn, lambda x: _fd1(fn, x), lambda x: _fd2(fn, x))


def _fd1(fn, x, h=FD_STEP):
    return (fn(x + h) - fn(x - h)) / (2 * h)


def _fd2(fn, x, h=FD_STEP):
    return (fn(x + h) - 2 * fn(x) + fn(x - h)) / h**2


def generator_apply(problem: MspdieProblem, test_fn, t: float, x):
    """Generator of ``X = x + int sigma(X-) dL`` applied to a test function.

    ``m1 sigma phi' + 1/2 kappa^2 sigma^2 phi'' + sum_j lam_j [phi(x + sigma x_j) - phi(x) - phi'(x) sigma x_j]``
    with ``m1 = E[L_1]``.
    """
    fn = _as_test(test_fn)
    x = np.asarray(x, dtype=float)
    s = problem.sigma_at(x)
    d1 = fn.d1(x)
    out = mean_L1(problem.model) * s * d1 + 0.5 * problem.model.gaussian_kappa**2 * s**2 * fn.d2(x)
    v0 = fn.value(x)
    for xj, lam in problem.model.atoms:
        out = out + lam * (fn.value(x + s * xj) - v0 - d1 * s * xj)
    return out


def phi1_k(problem: MspdieProblem, basis: TeugelsBasis, test_fn, k: int, t: float, x):
    """``sum_j lam_j (phi(x + sigma(x) x_j) - phi(x)) p_k(x_j)``."""
    pk = basis.pk(k)
    fn = _as_test(test_fn)
    x = np.asarray(x, dtype=float)
    s = problem.sigma_at(x)
    v0 = fn.value(x)
    out = np.zeros_like(x)
    for xj, lam in problem.model.atoms:
        out = out + lam * (fn.value(x + s * xj) - v0) * pk(xj)
    return out


# ---------------------------------------------------------------------------
# Doss-Sussmann flow


def _rk4(g, y, b, n):
    h = b / n
    for _ in range(n):
        k1 = g(y)
        k2 = g(y + 0.5 * h * k1)
        k3 = g(y + 0.5 * h * k2)
        k4 = g(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def integrate_flow(g, y, b, tol: float = FLOW_TOL, max_steps: int = 1 << 20):
    """Solve ``dy/db = g(y)`` from 0 to ``b`` by RK4 with step doubling.

    The step count doubles until the Richardson error estimate is below
    ``tol * max(1, |y|)``.
    """
    y = np.asarray(y, dtype=float)
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return y.copy()
    n = max(8, int(math.ceil(8 * float(np.max(np.abs(b))))))
    with np.errstate(over="ignore", invalid="ignore"):
        prev = _rk4(g, y, b, n)
        while True:
            n *= 2
            cur = _rk4(g, y, b, n)
            if not np.all(np.isfinite(cur)):
                raise FlowBlowUpError("mspdie: flow blew up before the Brownian increment was consumed")
            err = np.abs(cur - prev) / 15.0
            if np.all(err <= tol * np.maximum(1.0, np.abs(cur))):
                return cur + (cur - prev) / 15.0
            if n >= max_steps:
                raise FlowBlowUpError("mspdie: flow integration did not reach tolerance")
            prev = cur


@dataclass(frozen=True)
class FlowDerivatives:
    value: np.ndarray
    Dy: np.ndarray
    Dyy: np.ndarray
    Dx: np.ndarray
    Dxy: np.ndarray
    Dxx: np.ndarray


@dataclass(frozen=True)
class FlowField:
    """Autonomous forcing ``g(y)`` and the flow it generates.

    ``kind`` is "zero", "const", "linear" (``g = beta y``) or "custom"; the
    first three carry closed-form derivatives of g and of the flow.
    """

    g: Callable
    kind: str = "custom"
    beta: float = 0.0

    def dg(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind in ("zero", "const"):
            return np.zeros_like(y)
        if self.kind == "linear":
            return np.full_like(y, self.beta)
        return _fd1(self.g, y)

    def eta(self, y, b):
        return integrate_flow(self.g, y, b)

    def inverse(self, y, b):
        return integrate_flow(self.g, y, -np.asarray(b, dtype=float))

    def derivatives(self, y, b) -> FlowDerivatives:
        """``eta(b, y)`` and its derivatives; x-derivatives vanish for autonomous g."""
        y = np.asarray(y, dtype=float)
        b = np.asarray(b, dtype=float)
        val = self.eta(y, b)
        if self.kind in ("zero", "const"):
            Dy, Dyy = np.ones_like(val), np.zeros_like(val)
        elif self.kind == "linear":
            Dy, Dyy = np.exp(self.beta * b) * np.ones_like(val), np.zeros_like(val)
        else:
            h = FD_STEP
            up, dn = self.eta(y + h, b), self.eta(y - h, b)
            Dy = (up - dn) / (2 * h)
            Dyy = (up - 2 * val + dn) / h**2
        zero = np.zeros_like(val)
        return FlowDerivatives(val, Dy, Dyy, zero, zero, zero)


def flow_zero() -> FlowField:
    return FlowField(lambda y: np.zeros_like(np.asarray(y, dtype=float)), "zero")


def flow_const(beta: float) -> FlowField:
    return FlowField(lambda y: np.full_like(np.asarray(y, dtype=float), beta), "const", beta)


def flow_linear(beta: float) -> FlowField:
    return FlowField(lambda y: beta * np.asarray(y, dtype=float), "linear", beta)


def flow_eta(flow: FlowField, t: float, x, y, b):
    """``eta(t, x, y)`` for the Brownian increment ``b = B_T - B_t``."""
    return flow.eta(y, b)


def flow_eps(flow: FlowField, t: float, x, y, b):
    """The y-inverse of ``flow_eta``: the flow run for ``-b``."""
    return flow.inverse(y, b)


def jet_transform(flow: FlowField, direction: str, point, jet, b):
    """Map a jet ``(a, p, X)`` of u to one of ``v = eps(., ., u)`` or back.

    ``point`` is ``(tau, xi, value)`` with ``value = u(tau, xi)`` for
    "u_to_v" and ``value = v(tau, xi)`` for "v_to_u". The transform is the
    chain rule through ``eps`` (the flow at ``-b``) or through ``eta``.
    """
    tau, xi, value = point
    a, p, X = jet
    if direction == "u_to_v":
        d = flow.derivatives(value, -np.asarray(b, dtype=float))
    elif direction == "v_to_u":
        d = flow.derivatives(value, b)
    else:
        raise ValueError(f"direction must be 'u_to_v' or 'v_to_u', got {direction!r}")
    # D_y eps = 1 / D_y eta, so either sign check covers both directions
    if np.any(d.Dy <= 0):
        raise DiffeomorphismError("mspdie: D_y eta <= 0 at the point")
    a2 = d.Dy * a
    p2 = d.Dy * p + d.Dx
    X2 = d.Dy * X + 2 * d.Dxy * p + d.Dxx + d.Dyy * p * p
    return a2, p2, X2


def transformed_driver(
    flow: FlowField,
    problem: MspdieProblem,
    basis: TeugelsBasis,
    t: float,
    x: float,
    y: float,
    p_v: float,
    b: float,
    theta=None,
) -> float:
    """Driver of the PDIE obtained by the Doss-Sussmann change of variable.

    ``theta^k = sum_j lam_j p_v sigma(x) x_j p_k(x_j)`` unless given, and
    ``lam = 1 + sum_j lam_j x_j^2``.
    """
    model = problem.model
    R = basis.R
    s = float(problem.sigma_at(x))
    if theta is None:
        theta = np.array([sum(lam * p_v * s * xj * basis.pk(k)(xj) for xj, lam in model.atoms) for k in range(1, R + 1)])
    theta = np.asarray(theta, dtype=float)
    d = flow.derivatives(y, b)
    eta, Dy = float(d.value), float(d.Dy)
    if Dy <= 0:
        raise DiffeomorphismError("mspdie: D_y eta <= 0 at the point")

    def eta_x(xx):  # eta as a function of x at fixed y
        return np.broadcast_to(flow.eta(y, b), np.shape(xx)).astype(float)

    eta_test = TestFunction(eta_x, lambda xx: np.broadcast_to(d.Dx, np.shape(xx)), lambda xx: np.broadcast_to(d.Dxx, np.shape(xx)))
    eta1 = np.array([float(phi1_k(problem, basis, eta_test, k, t, x)) for k in range(1, R + 1)])
    L_eta = float(generator_apply(problem, eta_test, t, x))
    lam_q = 1.0 + sum(lam * xj**2 for xj, lam in model.atoms)
    z = Dy * theta + eta1
    fval = 0.0 if problem.f is None else float(np.asarray(problem.f(t, np.array([x]), np.array([eta]), z[None, :])).ravel()[0])
    ggp = float(flow.g(np.array(eta)) * flow.dg(np.array(eta)))
    bracket = (
        fval
        - 0.5 * ggp
        + L_eta
        + lam_q * s * float(d.Dxy) * s * p_v
        + 0.5 * lam_q * float(d.Dyy) * (s * p_v) ** 2
    )
    return bracket / Dy


# ---------------------------------------------------------------------------
# representation u(t, x) = Y^{t,x}_t


@dataclass
class UEstimate:
    t: float
    x: float
    u: float
    ci_low: float
    ci_high: float
    samples: np.ndarray
    solution: BdsdeSolution

    def as_dict(self) -> dict:
        return {"t": self.t, "x": self.x, "u": self.u, "ci_low": self.ci_low, "ci_high": self.ci_high}


def to_bdsde(problem: MspdieProblem, t: float, x: float, basis: TeugelsBasis) -> BdsdeProblem:
    g = problem.g
    g4 = None if g is None else (lambda s, xx, y, z: g(s, xx, y))
    return BdsdeProblem(
        model=problem.model,
        basis=basis,
        T=problem.T,
        terminal=problem.u0,
        phi=problem.phi,
        f=problem.f,
        g=g4,
        t0=t,
        x0=x,
        sigma=problem.sigma,
    )


def estimate_u(
    problem: MspdieProblem, t: float, x: float, config: SolverConfig, basis: TeugelsBasis | None = None, K: int = 4
) -> UEstimate:
    """Monte Carlo estimate of ``u(t, x) = Y^{t,x}_t`` with a 95% interval.

    With ``g`` absent the value is deterministic and the interval reflects the
    Lévy noise; otherwise ``samples`` holds one value per Brownian scenario.
    """
    if basis is None:
        basis = orthonormalize(problem.model, K)
    sol = solve_penalized(to_bdsde(problem, t, x, basis), config)
    est: Estimate = sol.Y0()
    lo, hi = est.ci()
    return UEstimate(t, x, est.value, lo, hi, sol.Y0_samples(), sol)


# builtin catalogs used by the CLI

SIGMAS = {
    "const": lambda c=1.0: (lambda x: np.full_like(np.asarray(x, dtype=float), c)),
    "sine": lambda base=1.0, amp=0.1: (lambda x: base + amp * np.sin(x)),
    "linear": lambda c=1.0: (lambda x: c * np.asarray(x, dtype=float)),
}

TERMINALS = {
    "const": lambda c=0.0: (lambda x: np.full_like(np.asarray(x, dtype=float), c)),
    "identity": lambda: (lambda x: np.asarray(x, dtype=float)),
    "square": lambda: (lambda x: np.asarray(x, dtype=float) ** 2),
    "clip": lambda lo=-1.0, hi=1.0: (lambda x: np.clip(x, lo, hi)),
}

DRIVERS_F = {
    "zero": lambda: None,
    "const": lambda c=1.0: (lambda t, x, y, z: np.full_like(y, c)),
    "linear": lambda rho=1.0, c=0.0: (lambda t, x, y, z: rho * y + c),
}

DRIVERS_G = {
    "zero": lambda: None,
    "const": lambda beta=0.0: (lambda t, x, y: np.full_like(y, beta)),
    "linear": lambda beta=0.0: (lambda t, x, y: beta * y),
}

FLOWS = {"zero": lambda: flow_zero(), "const": flow_const, "linear": flow_linear}
