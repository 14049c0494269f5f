"""Scalar proper l.s.c. convex functions with phi >= phi(0) = 0.

Provides the subdifferential as an interval ``[phi'_l(y), phi'_r(y)]``, the
resolvent ``J_eps = (I + eps d phi)^{-1}``, and the Yosida approximation

    phi_eps(x) = min_y 1/2 |x - y|^2 + eps phi(y),   D phi_eps(x) = x - J_eps(x).

All functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Optional

import numpy as np

BISECT_TOL = 1e-12
BISECT_MAXITER = 200
INF = math.inf


class BisectionError(RuntimeError):
    """The monotone bisection did not reach its tolerance."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    @classmethod
    def empty(cls) -> "Interval":
        return cls(INF, -INF)

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi

    def contains(self, v: float, tol: float = 0.0) -> bool:
        return (not self.is_empty) and self.lo - tol <= v <= self.hi + tol


@dataclass(frozen=True)
class ConvexFunction:
    """A convex ``phi`` on the closed interval ``domain``.

    ``value`` returns ``inf`` outside the domain; the one-sided derivatives are
    only called on the domain and may return ``+-inf`` at its endpoints.
    ``prox`` is an optional closed form ``(eps, x) -> J_eps(x)``.
    """

    name: str
    value: Callable
    domain: tuple[float, float]
    left_deriv: Callable
    right_deriv: Callable
    prox: Optional[Callable] = None
    params: tuple = ()

    def __post_init__(self):
        lo, hi = self.domain
        if not lo <= 0.0 <= hi:
            raise ValueError(f"{self.name}: domain {self.domain} must contain 0")

    def __call__(self, y):
        return self.value(y)

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"

    def clamp(self, y):
        return np.clip(y, self.domain[0], self.domain[1])

    def dist_to_domain(self, y):
        return np.abs(np.asarray(y, dtype=float) - self.clamp(y))

    def without_prox(self) -> "ConvexFunction":
        """Same function with the closed-form resolvent removed (forces bisection)."""
        return replace(self, prox=None)


def _indicator(lo: float, hi: float, name: str, params: tuple) -> ConvexFunction:
    def value(y):
        y = np.asarray(y, dtype=float)
        out = np.where((y >= lo) & (y <= hi), 0.0, INF)
        return out[()] if out.ndim == 0 else out

    def left(y):
        y = np.asarray(y, dtype=float)
        out = np.where(y <= lo, -INF, 0.0)
        return out[()] if out.ndim == 0 else out

    def right(y):
        y = np.asarray(y, dtype=float)
        out = np.where(y >= hi, INF, 0.0)
        return out[()] if out.ndim == 0 else out

    def prox(eps, x):
        return np.clip(x, lo, hi)

    return ConvexFunction(name, value, (lo, hi), left, right, prox, params)


def zero() -> ConvexFunction:
    return ConvexFunction(
        "zero",
        lambda y: np.zeros_like(np.asarray(y, dtype=float))[()],
        (-INF, INF),
        lambda y: np.zeros_like(np.asarray(y, dtype=float))[()],
        lambda y: np.zeros_like(np.asarray(y, dtype=float))[()],
        lambda eps, x: np.asarray(x, dtype=float)[()],
    )


def quadratic() -> ConvexFunction:
    """``phi(y) = y^2 / 2``."""
    return ConvexFunction(
        "quadratic",
        lambda y: 0.5 * np.asarray(y, dtype=float) ** 2,
        (-INF, INF),
        lambda y: np.asarray(y, dtype=float)[()],
        lambda y: np.asarray(y, dtype=float)[()],
        lambda eps, x: np.asarray(x, dtype=float) / (1.0 + eps),
    )


def abs_() -> ConvexFunction:
    """``phi(y) = |y|``; its resolvent is soft thresholding."""

    def left(y):
        return np.where(np.asarray(y, dtype=float) > 0, 1.0, -1.0)[()]

    def right(y):
        return np.where(np.asarray(y, dtype=float) >= 0, 1.0, -1.0)[()]

    def prox(eps, x):
        x = np.asarray(x, dtype=float)
        return (np.sign(x) * np.maximum(np.abs(x) - eps, 0.0))[()]

    return ConvexFunction("abs", lambda y: np.abs(np.asarray(y, dtype=float))[()], (-INF, INF), left, right, prox)


def half_line(c: float = 0.0, side: str = "lower") -> ConvexFunction:
    """Indicator of ``(-inf, c]`` (side="lower", needs c >= 0) or ``[c, inf)`` (side="upper", c <= 0)."""
    if side == "lower":
        if c < 0:
            raise ValueError("indicator of (-inf, c] needs c >= 0 so that phi(0) = 0")
        return _indicator(-INF, float(c), "half_line", (float(c), side))
    if side == "upper":
        if c > 0:
            raise ValueError("indicator of [c, inf) needs c <= 0 so that phi(0) = 0")
        return _indicator(float(c), INF, "half_line", (float(c), side))
    raise ValueError(f"side must be 'lower' or 'upper', got {side!r}")


def interval(l: float, r: float) -> ConvexFunction:
    """Indicator of ``[l, r]`` with ``l <= 0 <= r``."""
    if not l <= 0 <= r:
        raise ValueError(f"interval [{l}, {r}] must contain 0")
    return _indicator(float(l), float(r), "interval", (float(l), float(r)))


BUILTINS = {
    "zero": zero,
    "quadratic": quadratic,
    "abs": abs_,
    "half_line": half_line,
    "interval": interval,
}


def from_config(cfg: Mapping) -> ConvexFunction:
    """Build from ``{"kind": name, **params}``, e.g. ``{"kind": "interval", "l": -1, "r": 2}``."""
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if kind not in BUILTINS:
        raise ValueError(f"unknown convex function kind {kind!r}; choose from {sorted(BUILTINS)}")
    return BUILTINS[kind](**cfg)


def _bisect_resolvent(phi: ConvexFunction, eps: float, x: np.ndarray) -> np.ndarray:
    """Solve ``x in y + eps [phi'_l(y), phi'_r(y)]`` by bisection on the domain."""
    d_lo, d_hi = phi.domain
    xc = phi.clamp(x)
    slope = np.maximum(np.abs(phi.left_deriv(xc)), np.abs(phi.right_deriv(xc)))
    slope = np.where(np.isfinite(slope), slope, 0.0)
    lo = np.clip(x - eps * slope - 1.0, d_lo, d_hi)
    hi = np.clip(x + eps * slope + 1.0, d_lo, d_hi)

    def upper(y):  # y + eps phi'_r(y), right-continuous and nondecreasing
        return y + eps * phi.right_deriv(y)

    def lower(y):
        return y + eps * phi.left_deriv(y)

    width = 1.0
    for _ in range(BISECT_MAXITER):
        bad_lo = (upper(lo) > x) & (lo > d_lo)
        bad_hi = (lower(hi) < x) & (hi < d_hi)
        if not (bad_lo.any() or bad_hi.any()):
            break
        width *= 2.0
        lo = np.where(bad_lo, np.clip(lo - width, d_lo, d_hi), lo)
        hi = np.where(bad_hi, np.clip(hi + width, d_lo, d_hi), hi)
    else:
        raise BisectionError("could not bracket the resolvent")

    # Endpoint solutions: the subdifferential is unbounded there.
    at_lo = upper(lo) >= x
    at_hi = lower(hi) <= x
    for _ in range(BISECT_MAXITER):
        open_ = ~(at_lo | at_hi) & (hi - lo > BISECT_TOL)
        if not open_.any():
            break
        mid = 0.5 * (lo + hi)
        stalled = (mid <= lo) | (mid >= hi)
        go_left = upper(mid) >= x
        hi = np.where(open_ & go_left, mid, hi)
        lo = np.where(open_ & ~go_left, mid, lo)
        at_lo = at_lo | (open_ & stalled)
    else:
        raise BisectionError(f"resolvent bisection did not reach tolerance {BISECT_TOL}")
    out = np.where(at_lo, lo, np.where(at_hi, hi, 0.5 * (lo + hi)))
    # x is its own resolvent when 0 lies in the subdifferential at x
    inside = (x >= d_lo) & (x <= d_hi)
    xc_l, xc_r = phi.left_deriv(xc), phi.right_deriv(xc)
    fixed = inside & (xc_l <= 0) & (xc_r >= 0)
    return np.where(fixed, x, out)


def resolvent(phi: ConvexFunction, eps: float, x):
    """``J_eps(x)``: the unique ``y`` with ``x in y + eps d phi(y)``."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if phi.prox is not None:
        return phi.prox(eps, x)
    xa = np.asarray(x, dtype=float)
    out = _bisect_resolvent(phi, eps, np.atleast_1d(xa))
    return out.reshape(xa.shape)[()]


def yosida_grad(phi: ConvexFunction, eps: float, x):
    """``D phi_eps(x) = x - J_eps(x)``; the penalization drift is this divided by eps."""
    return np.asarray(x, dtype=float) - resolvent(phi, eps, x)


def yosida_value(phi: ConvexFunction, eps: float, x):
    """``phi_eps(x) = 1/2 |x - J_eps(x)|^2 + eps phi(J_eps(x))``."""
    j = resolvent(phi, eps, x)
    return 0.5 * (np.asarray(x, dtype=float) - j) ** 2 + eps * phi.value(j)


def subdiff(phi: ConvexFunction, y: float) -> Interval:
    """``[phi'_l(y), phi'_r(y)]``, or an empty interval outside the domain."""
    d_lo, d_hi = phi.domain
    if not d_lo <= y <= d_hi:
        return Interval.empty()
    return Interval(float(phi.left_deriv(y)), float(phi.right_deriv(y)))


def property_violations(phi: ConvexFunction, x, y, eps, delta) -> dict[str, np.ndarray]:
    """Signed violations (positive means violated) of the Yosida/resolvent properties.

    Each entry is scaled by the size of the terms it compares, so a value
    below ``1e-10`` means the inequality holds to rounding. Keys:

    - ``lipschitz``: ``|D phi_eps(x) - D phi_eps(y)| <= |x - y|``
    - ``subgradient``: ``D phi_eps(x) / eps`` in ``d phi(J_eps(x))`` (distance)
    - ``nonexpansive``: ``|J_eps(x) - J_eps(y)| <= |x - y|``
    - ``envelope``: ``0 <= phi_eps(x) <= D phi_eps(x) x``
    - ``cross``: ``<D phi_eps(x)/eps - D phi_delta(y)/delta, x - y> >= -(1/eps + 1/delta)|D phi_eps(x)||D phi_delta(y)|``
    - ``identity``: ``|x - J_eps(x)|^2 = 2 phi_eps(x) - 2 eps phi(J_eps(x))``
    """
    x, y, eps, delta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, eps, delta)))
    Jx = np.asarray(resolvent_each(phi, eps, x))
    Jy = np.asarray(resolvent_each(phi, eps, y))
    Dx, Dy = x - Jx, y - Jy
    Ddy = y - np.asarray(resolvent_each(phi, delta, y))
    dxy = np.abs(x - y)
    scale1 = 1.0 + dxy
    out = {
        "lipschitz": (np.abs(Dx - Dy) - dxy) / scale1,
        "nonexpansive": (np.abs(Jx - Jy) - dxy) / scale1,
    }
    g = Dx / eps
    # a bisected J is only known to BISECT_TOL; widen the subdifferential to match
    tau = 0.0 if phi.prox is not None else BISECT_TOL
    lo = np.asarray(phi.left_deriv(phi.clamp(Jx - tau)), dtype=float)
    hi = np.asarray(phi.right_deriv(phi.clamp(Jx + tau)), dtype=float)
    out["subgradient"] = np.maximum(lo - g, g - hi) / (1.0 + np.abs(g))

    phiJ = np.asarray(phi.value(Jx), dtype=float)
    env = 0.5 * Dx**2 + eps * phiJ
    upper = Dx * x
    s4 = 1.0 + np.abs(env) + np.abs(upper)
    out["envelope"] = np.maximum(-env, env - upper) / s4

    lhs = (Dx / eps - Ddy / delta) * (x - y)
    rhs = -(1.0 / eps + 1.0 / delta) * np.abs(Dx) * np.abs(Ddy)
    out["cross"] = (rhs - lhs) / (1.0 + np.abs(lhs) + np.abs(rhs))

    ident = Dx**2 - (2 * env - 2 * eps * phiJ)
    out["identity"] = np.abs(ident) / (1.0 + Dx**2 + 2 * np.abs(env))
    return out


def resolvent_each(phi: ConvexFunction, eps, x):
    """``resolvent`` with an array of ``eps`` matched elementwise to ``x``."""
    eps = np.asarray(eps, dtype=float)
    if eps.ndim == 0:
        return resolvent(phi, float(eps), x)
    if phi.prox is not None:
        return phi.prox(eps, x)
    if not np.all(eps > 0):
        raise ValueError("eps must be > 0")
    x = np.asarray(x, dtype=float)
    out = _bisect_resolvent(phi, np.broadcast_to(eps, x.shape).ravel(), x.ravel())
    return out.reshape(x.shape)
