"""Driving noise: an independent Brownian motion B and a finite-activity Lévy process L.

The Lévy process has characteristic exponent

    psi(u) = i a u - kappa^2 u^2 / 2 + sum_j lam_j (exp(i u x_j) - 1 - i u x_j 1{|x_j| < 1})

with the jump measure given as finitely many weighted atoms ``(x_j, lam_j)``.
Paths are simulated on a uniform grid with exact jump times and sizes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, TextIO

import numpy as np

# Paths are drawn in fixed-size blocks, each from its own seed stream, so path i
# is identical whatever n_paths or worker count is used.
BLOCK_SIZE = 1024


@dataclass(frozen=True)
class LevyModel:
    """Lévy triplet with an atomic jump measure.

    Attributes:
        drift_a: drift ``a`` of the characteristic exponent (small jumps
            ``|x| < 1`` compensated).
        gaussian_kappa: coefficient of the Gaussian part, ``>= 0``.
        atoms: tuple of ``(jump_size, intensity)`` pairs.
        exp_moment_lambda: the ``lambda`` of the exponential-moment condition;
            the condition holds trivially for finitely many atoms.
    """

    drift_a: float = 0.0
    gaussian_kappa: float = 0.0
    atoms: tuple[tuple[float, float], ...] = ()
    exp_moment_lambda: float = 1.0

    def __post_init__(self):
        atoms = tuple((float(x), float(lam)) for x, lam in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "drift_a", float(self.drift_a))
        object.__setattr__(self, "gaussian_kappa", float(self.gaussian_kappa))
        if not math.isfinite(self.drift_a):
            raise ValueError("drift_a must be finite")
        if not (self.gaussian_kappa >= 0 and math.isfinite(self.gaussian_kappa)):
            raise ValueError("gaussian_kappa must be finite and >= 0")
        if not self.exp_moment_lambda > 0:
            raise ValueError("exp_moment_lambda must be > 0")
        for x, lam in atoms:
            if x == 0 or not math.isfinite(x):
                raise ValueError(f"jump size must be finite and nonzero, got {x}")
            if not (lam > 0 and math.isfinite(lam)):
                raise ValueError(f"intensity must be finite and > 0, got {lam}")
        if len({x for x, _ in atoms}) != len(atoms):
            raise ValueError("atom jump sizes must be pairwise distinct")

    @classmethod
    def from_dict(cls, cfg: Mapping) -> "LevyModel":
        """Build from a config section with keys drift, kappa, atoms."""
        return cls(
            drift_a=cfg.get("drift", 0.0),
            gaussian_kappa=cfg.get("kappa", 0.0),
            atoms=tuple(tuple(a) for a in cfg.get("atoms", ())),
            exp_moment_lambda=cfg.get("exp_moment_lambda", 1.0),
        )

    @property
    def sizes(self) -> np.ndarray:
        return np.array([x for x, _ in self.atoms], dtype=float)

    @property
    def intensities(self) -> np.ndarray:
        return np.array([lam for _, lam in self.atoms], dtype=float)

    @property
    def total_intensity(self) -> float:
        return float(sum(lam for _, lam in self.atoms))

    @property
    def small_jump_compensator(self) -> float:
        """``sum_{|x_j| < 1} lam_j x_j``, removed from the drift of simulated paths."""
        return float(sum(lam * x for x, lam in self.atoms if abs(x) < 1))

    @property
    def continuous_drift(self) -> float:
        """Drift of the continuous part of L once small jumps are compensated."""
        return self.drift_a - self.small_jump_compensator


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if not self.t0 < self.T:
            raise ValueError(f"need t0 < T, got t0={self.t0}, T={self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be an integer >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class PathBundle:
    """A batch of joint (B, L) paths on one grid.

    Per-step arrays have shape ``(n_paths, n_steps)``. Jumps are stored as a flat
    table sorted by (path, time); ``counts[p, k, j]`` is the number of jumps of
    atom ``j`` in step ``k`` of path ``p``. ``dH`` is filled by
    :func:`levybdsde.teugels.h_increments` with shape ``(n_paths, n_steps, R)``.
    """

    grid: TimeGrid
    sizes: np.ndarray
    dB: np.ndarray
    dW: np.ndarray
    dL: np.ndarray
    counts: np.ndarray
    jump_path: np.ndarray
    jump_step: np.ndarray
    jump_atom: np.ndarray
    jump_time: np.ndarray
    first_path_id: int = 0
    dH: np.ndarray | None = field(default=None)

    def __len__(self) -> int:
        return self.dL.shape[0]

    @property
    def n_paths(self) -> int:
        return self.dL.shape[0]

    @property
    def jump_size(self) -> np.ndarray:
        return self.sizes[self.jump_atom]

    def power_increments(self, m: int) -> np.ndarray:
        """Per-step increments of the power-jump process ``L^(m)`` for ``m >= 2``."""
        if m < 2:
            raise ValueError("power_increments is defined for m >= 2; use dL for m = 1")
        if self.sizes.size == 0:
            return np.zeros_like(self.dL)
        return self.counts @ (self.sizes**m)

    def jump_counts(self) -> np.ndarray:
        """Number of jumps per step, shape ``(n_paths, n_steps)``."""
        return self.counts.sum(axis=2)

    def L(self) -> np.ndarray:
        """Path values ``L_{t_k} - L_{t0}``, shape ``(n_paths, n_steps + 1)``."""
        out = np.zeros((self.n_paths, self.grid.n_steps + 1))
        np.cumsum(self.dL, axis=1, out=out[:, 1:])
        return out

    def B(self) -> np.ndarray:
        out = np.zeros((self.n_paths, self.grid.n_steps + 1))
        np.cumsum(self.dB, axis=1, out=out[:, 1:])
        return out

    def jumps(self, p: int) -> list[tuple[float, float]]:
        """Sorted ``(time, size)`` list for path ``p`` of this batch."""
        lo, hi = np.searchsorted(self.jump_path, [p, p + 1])
        return list(zip(self.jump_time[lo:hi].tolist(), self.jump_size[lo:hi].tolist()))

    def with_dH(self, dH: np.ndarray) -> "PathBundle":
        return replace(self, dH=dH)


def char_exponent(model: LevyModel, u):
    """Characteristic exponent ``psi(u)`` with ``E exp(i u L_t) = exp(t psi(u))``."""
    u = np.asarray(u, dtype=float)
    out = 1j * model.drift_a * u - 0.5 * model.gaussian_kappa**2 * u**2
    for x, lam in model.atoms:
        comp = x if abs(x) < 1 else 0.0
        out = out + lam * (np.exp(1j * u * x) - 1.0 - 1j * u * comp)
    return out[()] if out.ndim == 0 else out


def nu_moment(model: LevyModel, i: int) -> float:
    """``int x^i nu(dx)`` as the atomic sum ``sum_j lam_j x_j^i``."""
    if i < 1:
        raise ValueError("nu_moment needs i >= 1")
    return float(sum(lam * x**i for x, lam in model.atoms))


def mean_L1(model: LevyModel) -> float:
    """``E[L_1] = a + sum_{|x_j| >= 1} lam_j x_j``."""
    return model.drift_a + float(sum(lam * x for x, lam in model.atoms if abs(x) >= 1))


def var_L1(model: LevyModel) -> float:
    """``Var[L_1] = -psi''(0) = kappa^2 + int x^2 nu(dx)``."""
    return model.gaussian_kappa**2 + (nu_moment(model, 2) if model.atoms else 0.0)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block,)))


def _simulate_block(model: LevyModel, grid: TimeGrid, seed: int, block: int) -> dict:
    rng = _block_rng(seed, block)
    m, n = BLOCK_SIZE, grid.n_steps
    dt = grid.dt
    sq = math.sqrt(dt)
    dB = rng.standard_normal((m, n)) * sq
    dW = rng.standard_normal((m, n)) * sq
    n_atoms = len(model.atoms)
    if n_atoms:
        counts = rng.poisson(model.intensities * dt, size=(m, n, n_atoms))
    else:
        counts = np.zeros((m, n, 0), dtype=np.int64)
    p, k, j = np.nonzero(counts)
    reps = counts[p, k, j]
    p, k, j = np.repeat(p, reps), np.repeat(k, reps), np.repeat(j, reps)
    frac = rng.random(p.size)
    frac[frac == 0.0] = 0.5  # keep jump times strictly inside their step
    times = grid.t0 + (k + frac) * dt
    order = np.lexsort((times, p))
    return dict(dB=dB, dW=dW, counts=counts, p=p[order], k=k[order], j=j[order], t=times[order])


def simulate_paths(
    model: LevyModel,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    first_path_id: int = 0,
) -> PathBundle:
    """Simulate ``n_paths`` independent joint paths of (B, L).

    Path ``i`` (global id ``first_path_id + i``) comes from the seed stream of
    its block, so results do not depend on how a study is chunked.
    """
    if int(n_paths) != n_paths or n_paths < 1:
        raise ValueError(f"n_paths must be a positive integer, got {n_paths}")
    lo_id, hi_id = first_path_id, first_path_id + n_paths
    blocks = range(lo_id // BLOCK_SIZE, (hi_id - 1) // BLOCK_SIZE + 1)
    parts = []
    for b in blocks:
        raw = _simulate_block(model, grid, seed, b)
        start = max(lo_id - b * BLOCK_SIZE, 0)
        stop = min(hi_id - b * BLOCK_SIZE, BLOCK_SIZE)
        keep = (raw["p"] >= start) & (raw["p"] < stop)
        offset = b * BLOCK_SIZE - lo_id
        parts.append(
            dict(
                dB=raw["dB"][start:stop],
                dW=raw["dW"][start:stop],
                counts=raw["counts"][start:stop],
                p=raw["p"][keep] + offset,
                k=raw["k"][keep],
                j=raw["j"][keep],
                t=raw["t"][keep],
            )
        )
    cat = {key: np.concatenate([part[key] for part in parts]) for key in parts[0]}
    sizes = model.sizes
    dt = grid.dt
    dL = model.continuous_drift * dt + model.gaussian_kappa * cat["dW"]
    if sizes.size:
        dL = dL + cat["counts"] @ sizes
    return PathBundle(
        grid=grid,
        sizes=sizes,
        dB=cat["dB"],
        dW=cat["dW"],
        dL=dL,
        counts=cat["counts"],
        jump_path=cat["p"],
        jump_step=cat["k"],
        jump_atom=cat["j"],
        jump_time=cat["t"],
        first_path_id=first_path_id,
    )


def brownian_increments(grid: TimeGrid, n_paths: int, seed: int) -> np.ndarray:
    """Increments of B alone, shape ``(n_paths, n_steps)``; row i from stream (seed, i)."""
    sq = math.sqrt(grid.dt)
    rows = [
        np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i,))).standard_normal(
            grid.n_steps
        )
        for i in range(n_paths)
    ]
    return np.array(rows).reshape(n_paths, grid.n_steps) * sq


def write_paths_csv(bundle: PathBundle, fh: TextIO, header_lines: Iterable[str] = ()) -> None:
    """Write one row per (path, step): path_id, step, t, dB, dL, n_jumps[, dH_1..dH_R].

    ``t`` is the left node of the step. Floats use 17 significant digits.
    """
    for line in header_lines:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    R = 0 if bundle.dH is None else bundle.dH.shape[2]
    w.writerow(["path_id", "step", "t", "dB", "dL", "n_jumps"] + [f"dH_{i + 1}" for i in range(R)])
    nodes = bundle.grid.nodes
    n_jumps = bundle.jump_counts()
    fmt = "{:.17g}".format
    for p in range(bundle.n_paths):
        pid = bundle.first_path_id + p
        for k in range(bundle.grid.n_steps):
            row = [pid, k, fmt(nodes[k]), fmt(bundle.dB[p, k]), fmt(bundle.dL[p, k]), int(n_jumps[p, k])]
            if R:
                row += [fmt(v) for v in bundle.dH[p, k]]
            w.writerow(row)



def forward_euler(bundle: PathBundle, model: LevyModel, x0, sigma=None, start_step: int = 0) -> np.ndarray:
    """Euler scheme for ``X = x0 + int sigma(X_{r-}) dL_r`` on the bundle's grid.

    Within a step the continuous increment is applied at the left point, then
    each jump in time order with ``sigma`` at the pre-jump state. Before
    ``start_step`` the path is frozen at ``x0``. ``sigma=None`` means
    ``sigma == 1`` and reproduces ``x0 + L`` exactly. Shape ``(n_paths, n_steps + 1)``.
    """
    n, N = bundle.dL.shape
    X = np.empty((n, N + 1))
    X[:, : start_step + 1] = x0
    if sigma is None:
        np.cumsum(bundle.dL[:, start_step:], axis=1, out=X[:, start_step + 1 :])
        X[:, start_step + 1 :] += X[:, [start_step]]
        return X
    cont = model.continuous_drift * bundle.grid.dt + model.gaussian_kappa * bundle.dW
    order = np.lexsort((bundle.jump_time, bundle.jump_path, bundle.jump_step))
    j_step = bundle.jump_step[order]
    j_path = bundle.jump_path[order]
    j_size = bundle.jump_size[order]
    # rank of each jump within its (step, path) group
    new_group = np.ones(order.size, dtype=bool)
    new_group[1:] = (j_step[1:] != j_step[:-1]) | (j_path[1:] != j_path[:-1])
    group_start = np.maximum.accumulate(np.where(new_group, np.arange(order.size), 0))
    rank = np.arange(order.size) - group_start
    bounds = np.searchsorted(j_step, np.arange(N + 1))
    for k in range(start_step, N):
        x = X[:, k] + sigma(X[:, k]) * cont[:, k]
        lo, hi = bounds[k], bounds[k + 1]
        if hi > lo:
            rk, pk, sk = rank[lo:hi], j_path[lo:hi], j_size[lo:hi]
            for r in range(int(rk.max()) + 1):
                sel = rk == r
                p = pk[sel]
                x[p] = x[p] + sigma(x[p]) * sk[sel]
        X[:, k + 1] = x
    return X
