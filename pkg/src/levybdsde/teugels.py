"""Orthonormal Teugels martingales of a Lévy process with atomic jump measure.

The power-jump processes ``L^(m)_t = sum_{s <= t} (dL_s)^m`` (``L^(1) = L``) are
compensated to ``Y^(m)_t = L^(m)_t - t E[L^(m)_1]`` and combined as

    H^(i) = sum_{m <= i} c_{i,m} Y^(m)

where ``q_{i-1}(x) = sum_m c_{i,m} x^(m-1)`` are orthonormal polynomials under
``mu(dx) = x^2 nu(dx) + kappa^2 delta_0(dx)``. With finitely many atoms all
moments of ``mu`` are finite sums, so the orthonormalization is exact up to
rounding and the family is truncated at the number of support points of
``mu`` without loss.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .levy_model import LevyModel, PathBundle, mean_L1, nu_moment

PIVOT_TOL = 1e-12


def mu_moment(model: LevyModel, n: int) -> float:
    """``int x^n mu(dx) = sum_j lam_j x_j^(n+2) + kappa^2 [n == 0]``."""
    if n < 0:
        raise ValueError("mu_moment needs n >= 0")
    val = float(sum(lam * x ** (n + 2) for x, lam in model.atoms))
    if n == 0:
        val += model.gaussian_kappa**2
    return val


def mu_support(model: LevyModel) -> np.ndarray:
    """Distinct support points of ``mu``: the atoms, plus 0 when kappa > 0."""
    pts = list(model.sizes)
    if model.gaussian_kappa > 0:
        pts.append(0.0)
    return np.array(sorted(pts))


@dataclass(frozen=True)
class PkFunction:
    """``p_k(x) = x q_{k-1}(x)`` as ascending monomial coefficients."""

    k: int
    coeffs: np.ndarray

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)


@dataclass(frozen=True)
class TeugelsBasis:
    """Coefficients of the orthonormal polynomials ``q_0 .. q_{R-1}``.

    ``coeffs[i - 1, m - 1]`` holds ``c_{i,m}`` (the coefficient of ``x^(m-1)``
    in ``q_{i-1}``); the array is lower triangular with positive diagonal.
    """

    requested_order: int
    effective_rank: int
    coeffs: np.ndarray
    mu_moments: np.ndarray

    @property
    def R(self) -> int:
        return self.effective_rank

    def q_values(self, x) -> np.ndarray:
        """``q_0(x) .. q_{R-1}(x)`` stacked on a trailing axis."""
        x = np.asarray(x, dtype=float)
        powers = x[..., None] ** np.arange(self.R)
        return powers @ self.coeffs.T

    def p_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x[..., None] * self.q_values(x)

    def pk(self, k: int) -> PkFunction:
        if not 1 <= k <= self.R:
            raise IndexError(f"p_k needs 1 <= k <= {self.R}, got {k}")
        return PkFunction(k, np.concatenate([[0.0], self.coeffs[k - 1, :k]]))

    def gram(self) -> np.ndarray:
        """``G_nm = int q_n q_m dmu`` from the exact moments."""
        R = self.R
        hankel = np.array([[self.mu_moments[a + b] for b in range(R)] for a in range(R)])
        return self.coeffs @ hankel @ self.coeffs.T

    def gram_residual(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.R))))


def orthonormalize(model: LevyModel, K: int, pivot_tol: float = PIVOT_TOL) -> TeugelsBasis:
    """Gram-Schmidt on ``1, x, .., x^(K-1)`` in the inner product of ``mu``.

    The inner product is evaluated on the Hankel matrix of exact moments. A
    monomial whose residual norm^2 falls below ``pivot_tol`` times its own
    norm^2 lies in the span of the previous ones on the support of ``mu``;
    every higher monomial then does too, so the effective rank is fixed there.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    moments = np.array([mu_moment(model, n) for n in range(2 * K + 1)])
    if moments[0] == 0.0:
        raise ValueError("mu is the zero measure (kappa = 0 and no atoms); no basis exists")
    hankel = np.array([[moments[a + b] for b in range(K)] for a in range(K)])

    def inner(u, v):
        return u @ hankel @ v

    basis: list[np.ndarray] = []
    for n in range(K):
        v = np.zeros(K)
        v[n] = 1.0
        for _ in range(2):  # second pass restores orthogonality lost to rounding
            for q in basis:
                v = v - inner(q, v) * q
        nrm2 = inner(v, v)
        if nrm2 <= pivot_tol * moments[2 * n]:
            break
        basis.append(v / math.sqrt(nrm2))
    R = len(basis)
    coeffs = np.array(basis)[:, :R]
    return TeugelsBasis(requested_order=K, effective_rank=R, coeffs=coeffs, mu_moments=moments)


def compensated_power_increments(model: LevyModel, bundle: PathBundle, R: int) -> np.ndarray:
    """Increments of ``Y^(1) .. Y^(R)``, shape ``(n_paths, n_steps, R)``."""
    dt = bundle.grid.dt
    out = np.empty(bundle.dL.shape + (R,))
    out[..., 0] = bundle.dL - mean_L1(model) * dt
    for m in range(2, R + 1):
        out[..., m - 1] = bundle.power_increments(m) - nu_moment(model, m) * dt
    return out


def h_increments(
    basis: TeugelsBasis, model: LevyModel, bundle: PathBundle, order: int | None = None
) -> PathBundle:
    """Return ``bundle`` with ``dH`` filled for ``H^(1) .. H^(order)``.

    ``order`` defaults to the effective rank. Indices between the rank and the
    requested order of the basis are degenerate and are filled with exact zeros.
    """
    order = basis.R if order is None else order
    if order > basis.requested_order or order < 1:
        raise ValueError(
            f"requested index {order} outside the basis order 1..{basis.requested_order}"
        )
    Y = compensated_power_increments(model, bundle, basis.R)
    dH = Y @ basis.coeffs.T
    if order > basis.R:
        dH = np.concatenate([dH, np.zeros(dH.shape[:2] + (order - basis.R,))], axis=2)
    else:
        dH = dH[..., :order]
    return bundle.with_dH(dH)


def realized_bracket(basis: TeugelsBasis, model: LevyModel, bundle: PathBundle) -> np.ndarray:
    """``[H^(i), H^(j)]_T`` per path: jump part plus the Gaussian part.

    Shape ``(n_paths, R, R)``; its expectation is ``delta_ij (T - t0)``.
    """
    R = basis.R
    out = np.zeros((bundle.n_paths, R, R))
    if bundle.jump_path.size:
        pv = basis.p_values(bundle.jump_size)
        outer = pv[:, :, None] * pv[:, None, :]
        np.add.at(out, bundle.jump_path, outer)
    q0 = basis.q_values(0.0)
    span = bundle.grid.T - bundle.grid.t0
    out += model.gaussian_kappa**2 * np.outer(q0, q0) * span
    return out


def write_basis_csv(basis: TeugelsBasis, fh: TextIO, header_lines: Iterable[str] = ()) -> None:
    for line in header_lines:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["i", "k", "c_ik"])
    for i in range(1, basis.R + 1):
        for k in range(1, i + 1):
            w.writerow([i, k, f"{basis.coeffs[i - 1, k - 1]:.17g}"])
