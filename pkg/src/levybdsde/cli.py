"""Command line runner: ``levybdsde [COMMAND] --config PATH [--seed N] [--workers N] [--out DIR]``.

The YAML config is validated in full before any computation. Every output
file carries the sha256 of the resolved config, and the summary JSON of each
command echoes the resolved config itself. Exit codes: 0 success, 1 numerical
failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import inspect
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import convex, mspdie
from .bdsde import (
    BdsdeProblem,
    RegressionRankError,
    SolverConfig,
    TerminalDomainError,
    check_apriori,
    solve_limit,
    solve_penalized,
)
from .convex import BisectionError
from .levy_model import LevyModel, TimeGrid, simulate_paths, write_paths_csv
from .teugels import h_increments, orthonormalize, write_basis_csv

COMMANDS = ("simulate", "teugels", "prox-check", "solve", "converge", "mspdie", "flow-check")


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# schema


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FuncSpec(BaseModel):
    """A catalog entry by name; every other key is a parameter."""

    model_config = ConfigDict(extra="allow")
    kind: str

    def params(self) -> dict:
        return dict(self.model_extra or {})


class ModelCfg(_Strict):
    drift: float = 0.0
    kappa: float = 0.0
    atoms: list[tuple[float, float]] = Field(default_factory=list)
    exp_moment_lambda: float = 1.0


class BasisCfg(_Strict):
    K: int = Field(4, ge=1)
    pivot_tol: float = Field(1e-12, gt=0)


class GridCfg(_Strict):
    T: float = 1.0
    t0: float = 0.0
    n_steps: int = Field(ge=1)


class SimulateCfg(_Strict):
    grid: GridCfg
    n_paths: int = Field(10, ge=1)
    basis_order: Optional[int] = Field(None, ge=1)


def _default_phis():
    return [
        FuncSpec(kind="zero"),
        FuncSpec(kind="quadratic"),
        FuncSpec(kind="abs"),
        FuncSpec(kind="half_line", c=0.0, side="lower"),
        FuncSpec(kind="half_line", c=-0.5, side="upper"),
        FuncSpec(kind="interval", l=-1.0, r=2.0),
    ]


class ProxCheckCfg(_Strict):
    phi: list[FuncSpec] = Field(default_factory=_default_phis)
    n_samples: int = Field(10_000, ge=1)
    x_scale: float = Field(10.0, gt=0)
    eps_min: float = Field(1e-3, gt=0)
    eps_max: float = Field(1.0, gt=0)
    tol: float = Field(1e-10, gt=0)
    bisection: bool = True


class ProblemCfg(_Strict):
    T: float = 1.0
    t0: float = 0.0
    x0: float = 0.0
    terminal: FuncSpec = Field(default_factory=lambda: FuncSpec(kind="const", c=0.0))
    f: FuncSpec = Field(default_factory=lambda: FuncSpec(kind="zero"))
    g: FuncSpec = Field(default_factory=lambda: FuncSpec(kind="zero"))
    phi: FuncSpec = Field(default_factory=lambda: FuncSpec(kind="zero"))
    sigma: Optional[FuncSpec] = None
    lip_C: float = Field(1.0, ge=0)
    lip_alpha: float = Field(0.0, ge=0, lt=1)


class SolverCfg(_Strict):
    n_steps: int = Field(ge=1)
    eps: Optional[float] = Field(None, gt=0)
    n_inner: int = Field(1000, ge=1)
    n_outer: int = Field(1, ge=1)
    ce_method: Literal["regression", "tree"] = "regression"
    degree: int = Field(3, ge=0)
    step_mode: Literal["implicit_prox", "explicit"] = "implicit_prox"
    max_jumps: int = Field(3, ge=0)
    gh_nodes: int = Field(3, ge=1)
    brownian_seed: Optional[int] = None
    write_grid: bool = False


class ConvergeCfg(_Strict):
    eps_ladder: list[float] = Field(min_length=2)


class MspdieCfg(_Strict):
    t: float = 0.0
    x: float = 0.0
    x_grid: Optional[list[float]] = None


class FlowCfg(_Strict):
    kind: Literal["zero", "const", "linear"] = "linear"
    beta: float = 0.5
    b_max: float = Field(3.0, gt=0)
    y_max: float = Field(2.0, gt=0)


class FlowCheckCfg(_Strict):
    T: float = 1.0
    n_steps: int = Field(320, ge=1)
    t: float = 0.0
    x: float = 0.3
    h0_x: float = Field(0.1, gt=0)
    h0_t: float = Field(0.2, gt=0)
    halvings: int = Field(4, ge=1)
    n_paths: int = Field(10_000, ge=2)
    sigma: FuncSpec = Field(default_factory=lambda: FuncSpec(kind="sine", base=1.0, amp=0.1))
    doss_sussmann: Optional[FlowCfg] = Field(default_factory=FlowCfg)


_REQUIRED = {
    "simulate": ("simulate",),
    "solve": ("problem", "solver"),
    "converge": ("problem", "solver", "converge"),
    "mspdie": ("problem", "solver"),
}


class ExperimentConfig(_Strict):
    command: Literal["simulate", "teugels", "prox-check", "solve", "converge", "mspdie", "flow-check"]
    seed: int = 0
    workers: int = Field(1, ge=1)
    out: str = "out"
    model: ModelCfg = Field(default_factory=ModelCfg)
    basis: BasisCfg = Field(default_factory=BasisCfg)
    simulate: Optional[SimulateCfg] = None
    prox_check: ProxCheckCfg = Field(default_factory=ProxCheckCfg)
    problem: Optional[ProblemCfg] = None
    solver: Optional[SolverCfg] = None
    converge: Optional[ConvergeCfg] = None
    mspdie: MspdieCfg = Field(default_factory=MspdieCfg)
    flow_check: FlowCheckCfg = Field(default_factory=FlowCheckCfg)

    @model_validator(mode="after")
    def _sections(self):
        for name in _REQUIRED.get(self.command, ()):
            if getattr(self, name) is None:
                raise ValueError(f"section '{name}' is required for command '{self.command}'")
        if self.command in ("solve", "mspdie") and self.solver.eps is None:
            raise ValueError(f"solver.eps: field required for command '{self.command}'")
        return self


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"])
        lines.append(f"{loc}: {e['msg']}" if loc else e["msg"])
    return "; ".join(lines)


def load_config(path: str | os.PathLike, overrides: dict | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"YAML parse error{where}: {getattr(exc, 'problem', exc)}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of sections")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from exc


def resolved_dict(cfg: ExperimentConfig) -> dict:
    return cfg.model_dump(mode="json")


def config_hash(cfg: ExperimentConfig) -> str:
    d = resolved_dict(cfg)
    d.pop("out")
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# building objects from catalog entries


def _from_catalog(spec: FuncSpec, catalog: dict, where: str):
    if spec.kind not in catalog:
        raise ConfigError(f"{where}.kind: unknown {spec.kind!r}; choose from {sorted(catalog)}")
    fn = catalog[spec.kind]
    try:
        inspect.signature(fn).bind(**spec.params())
        return fn(**spec.params())
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def build_model(cfg: ExperimentConfig) -> LevyModel:
    try:
        return LevyModel.from_dict(cfg.model.model_dump())
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc


def build_phi(spec: FuncSpec, where: str) -> convex.ConvexFunction:
    return _from_catalog(spec, convex.BUILTINS, where)


def _g_bdsde(g3):
    return None if g3 is None else (lambda t, x, y, z: g3(t, x, y))


def build_problem(cfg: ExperimentConfig, model: LevyModel, basis) -> BdsdeProblem:
    p = cfg.problem
    sigma = None if p.sigma is None else _from_catalog(p.sigma, mspdie.SIGMAS, "problem.sigma")
    try:
        return BdsdeProblem(
            model=model,
            basis=basis,
            T=p.T,
            terminal=_from_catalog(p.terminal, mspdie.TERMINALS, "problem.terminal"),
            phi=build_phi(p.phi, "problem.phi"),
            f=_from_catalog(p.f, mspdie.DRIVERS_F, "problem.f"),
            g=_g_bdsde(_from_catalog(p.g, mspdie.DRIVERS_G, "problem.g")),
            t0=p.t0,
            x0=p.x0,
            sigma=sigma,
            lip_C=p.lip_C,
            lip_alpha=p.lip_alpha,
        )
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from exc


def build_solver(cfg: ExperimentConfig, eps: float | None = None) -> SolverConfig:
    s = cfg.solver
    return SolverConfig(
        n_steps=s.n_steps,
        eps=s.eps if eps is None else eps,
        n_inner=s.n_inner,
        n_outer=s.n_outer,
        ce_method=s.ce_method,
        degree=s.degree,
        step_mode=s.step_mode,
        seed=cfg.seed,
        brownian_seed=s.brownian_seed,
        max_jumps=s.max_jumps,
        gh_nodes=s.gh_nodes,
        workers=cfg.workers,
    )


def build_basis(cfg: ExperimentConfig, model: LevyModel):
    try:
        return orthonormalize(model, cfg.basis.K, cfg.basis.pivot_tol)
    except ValueError as exc:
        raise ConfigError(f"basis: {exc}") from exc


# ---------------------------------------------------------------------------
# output


class Output:
    """Collects files in memory and writes each one atomically."""

    def __init__(self, out_dir: Path, cfg: ExperimentConfig):
        self.dir = out_dir
        self.cfg = cfg
        self.sha = config_hash(cfg)
        self.written: list[Path] = []

    def header(self) -> list[str]:
        return [f"config_sha256={self.sha}", f"command={self.cfg.command}"]

    def write_text(self, name: str, text: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        target = self.dir / name
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(target)
        return target

    def write_csv(self, name: str, columns: list[str], rows) -> Path:
        buf = io.StringIO()
        for line in self.header():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        return self.write_text(name, buf.getvalue())

    def write_with(self, name: str, writer) -> Path:
        buf = io.StringIO()
        writer(buf, self.header())
        return self.write_text(name, buf.getvalue())

    def write_summary(self, results: dict) -> Path:
        doc = {
            "command": self.cfg.command,
            "config_sha256": self.sha,
            "resolved_config": resolved_dict(self.cfg),
            "results": _jsonable(results),
        }
        name = self.cfg.command.replace("-", "_") + ".json"
        return self.write_text(name, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def _est(e) -> dict:
    return {"value": e.value, "stderr": e.stderr}


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: ExperimentConfig, out: Output) -> None:
    model = build_model(cfg)
    sc = cfg.simulate
    try:
        grid = TimeGrid(sc.grid.t0, sc.grid.T, sc.grid.n_steps)
    except ValueError as exc:
        raise ConfigError(f"simulate.grid: {exc}") from exc
    bundle = simulate_paths(model, grid, sc.n_paths, cfg.seed)
    if sc.basis_order is not None:
        basis = build_basis(cfg, model)
        if sc.basis_order > basis.requested_order:
            raise ConfigError(f"simulate.basis_order: {sc.basis_order} exceeds basis.K = {basis.requested_order}")
        bundle = h_increments(basis, model, bundle, sc.basis_order)
    out.write_with("paths.csv", lambda fh, hdr: write_paths_csv(bundle, fh, hdr))
    LT = bundle.L()[:, -1]
    out.write_summary({"n_paths": bundle.n_paths, "n_steps": grid.n_steps, "mean_L_T": float(LT.mean())})


def cmd_teugels(cfg: ExperimentConfig, out: Output) -> None:
    model = build_model(cfg)
    basis = build_basis(cfg, model)
    out.write_with("basis.csv", lambda fh, hdr: write_basis_csv(basis, fh, hdr))
    out.write_summary(
        {
            "requested_order": basis.requested_order,
            "R": basis.R,
            "gram_residual": basis.gram_residual(),
            "coeffs": basis.coeffs,
        }
    )


def cmd_prox_check(cfg: ExperimentConfig, out: Output) -> None:
    pc = cfg.prox_check
    phis = [build_phi(spec, f"prox_check.phi[{i}]") for i, spec in enumerate(pc.phi)]
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(3,)))
    n = pc.n_samples
    x = rng.uniform(-pc.x_scale, pc.x_scale, n)
    y = rng.uniform(-pc.x_scale, pc.x_scale, n)
    lo, hi = math.log(pc.eps_min), math.log(pc.eps_max)
    eps = np.exp(rng.uniform(lo, hi, n))
    delta = np.exp(rng.uniform(lo, hi, n))
    rows = []
    ok = True
    for spec, phi in zip(pc.phi, phis):
        variants = [("closed_form", phi)]
        if pc.bisection and phi.prox is not None and not phi.is_zero:
            variants.append(("bisection", phi.without_prox()))
        label = phi.name + "".join(f":{k}={v}" for k, v in sorted(spec.params().items()))
        for path, fn in variants:
            viol = convex.property_violations(fn, x, y, eps, delta)
            # bisection carries its own 1e-12 tolerance, amplified by 1/eps
            tol = pc.tol if path == "closed_form" else pc.tol / pc.eps_min * 10
            for prop, v in viol.items():
                worst = float(v.max())
                passed = worst <= tol
                ok &= passed
                rows.append([label, path, prop, worst, tol, passed])
    out.write_csv("prox_check.csv", ["phi", "resolvent", "property", "max_violation", "tol", "pass"], rows)
    out.write_summary({"all_pass": ok, "n_samples": n})


def cmd_solve(cfg: ExperimentConfig, out: Output) -> None:
    model = build_model(cfg)
    basis = build_basis(cfg, model)
    problem = build_problem(cfg, model, basis)
    sol = solve_penalized(problem, build_solver(cfg))
    est = sol.Y0()
    mean = sol.mean_path()
    if cfg.solver.write_grid:
        nodes = sol.grid.nodes
        R = basis.R
        rows = []
        for s in range(sol.n_outer):
            for k in range(sol.grid.n_steps + 1):
                z = mean["Z"][s, k] if k < sol.grid.n_steps else np.full(R, np.nan)
                rows.append([s, k, float(nodes[k]), float(mean["Y"][s, k]), float(mean["U"][s, k]), *map(float, z)])
        out.write_csv("solution_grid.csv", ["scenario", "step", "t", "Y", "U"] + [f"Z_{i + 1}" for i in range(R)], rows)
    lo, hi = est.ci()
    out.write_summary(
        {
            "Y0": est.value,
            "Y0_stderr": est.stderr,
            "ci_low": lo,
            "ci_high": hi,
            "U0": float(mean["U"][:, 0].mean()),
            "Z0": mean["Z"][:, 0].mean(axis=0),
            "diagnostics": {k: _est(v) for k, v in sol.diagnostics.items()},
        }
    )


def cmd_converge(cfg: ExperimentConfig, out: Output) -> None:
    model = build_model(cfg)
    basis = build_basis(cfg, model)
    problem = build_problem(cfg, model, basis)
    ladder = cfg.converge.eps_ladder
    if any(e <= 0 for e in ladder) or any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ConfigError("converge.eps_ladder: must be positive and strictly decreasing")
    config = build_solver(cfg, eps=ladder[0])
    _, report, sols = solve_limit(problem, config, ladder)
    ap = check_apriori(sols)
    rows = [[r["eps"], r["delta"], r["D"], r["D_over_eps_plus_delta"], report.slope] for r in report.rows()]
    out.write_csv("ladder.csv", ["eps", "delta", "D", "D_over_eps_plus_delta", "slope"], rows)
    out.write_summary(
        {
            "slope": report.slope,
            "c3": report.c3,
            "envelope_ok": report.envelope_ok,
            "levels": [
                {"eps": s.eps, "Y0": _est(s.Y0()), "U0": float(s.mean_path()["U"][:, 0].mean()), "scaled_pen_gap": g}
                for s, g in zip(sols, ap.scaled_pen_gap)
            ],
            "apriori_growth_flag": ap.growth_flag,
        }
    )


def _mspdie_problem(cfg: ExperimentConfig, model: LevyModel) -> mspdie.MspdieProblem:
    p = cfg.problem
    sigma = None if p.sigma is None else _from_catalog(p.sigma, mspdie.SIGMAS, "problem.sigma")
    return mspdie.MspdieProblem(
        model=model,
        T=p.T,
        u0=_from_catalog(p.terminal, mspdie.TERMINALS, "problem.terminal"),
        phi=build_phi(p.phi, "problem.phi"),
        sigma=sigma,
        f=_from_catalog(p.f, mspdie.DRIVERS_F, "problem.f"),
        g=_from_catalog(p.g, mspdie.DRIVERS_G, "problem.g"),
    )


def cmd_mspdie(cfg: ExperimentConfig, out: Output) -> None:
    model = build_model(cfg)
    basis = build_basis(cfg, model)
    prob = _mspdie_problem(cfg, model)
    mc = cfg.mspdie
    if not mc.t < prob.T:
        raise ConfigError("mspdie.t: must be below problem.T")
    config = build_solver(cfg)
    est = mspdie.estimate_u(prob, mc.t, mc.x, config, basis)
    results = est.as_dict()
    if prob.g is not None:
        results["scenario_samples"] = est.samples
    if mc.x_grid:
        rows = []
        for xv in mc.x_grid:
            e = mspdie.estimate_u(prob, mc.t, xv, config, basis)
            rows.append([mc.t, xv, e.u, e.ci_low, e.ci_high])
        out.write_csv("sweep.csv", ["t", "x", "u", "ci_low", "ci_high"], rows)
    out.write_summary(results)


def cmd_flow_check(cfg: ExperimentConfig, out: Output) -> None:
    model = build_model(cfg)
    fc = cfg.flow_check
    sigma = _from_catalog(fc.sigma, mspdie.SIGMAS, "flow_check.sigma")
    prob = mspdie.MspdieProblem(model, fc.T, lambda x: x, convex.zero(), sigma=sigma)
    grid = TimeGrid(0.0, fc.T, fc.n_steps)
    hx = fc.h0_x / 2.0 ** np.arange(fc.halvings + 1)
    ht = fc.h0_t / 2.0 ** np.arange(fc.halvings + 1)
    # t-perturbations must land on grid nodes
    ht = np.round(ht / grid.dt) * grid.dt
    if np.any(ht <= 0) or fc.t + ht.max() >= fc.T:
        raise ConfigError("flow_check.h0_t: perturbations must be positive grid multiples inside [t, T)")
    lx = mspdie.continuity_ladder(prob, fc.t, fc.x, hx, "x", fc.n_paths, grid, cfg.seed)
    lt = mspdie.continuity_ladder(prob, fc.t, fc.x, ht, "t", fc.n_paths, grid, cfg.seed)
    C_t = mspdie.fit_power_constant(lt.h, lt.m2_squared, 2.0)
    within = lt.m2_squared <= C_t * lt.h**2 + 3 * lt.m2_squared_se
    rows = [["x", h, r.m4, r.m4_se, r.m2_squared, 2 * r.m2 * r.m2_se] for h, r in zip(lx.h, lx.moments)]
    rows += [["t", h, r.m4, r.m4_se, r.m2_squared, 2 * r.m2 * r.m2_se] for h, r in zip(lt.h, lt.moments)]
    out.write_csv("flow_check.csv", ["mode", "h", "m4", "m4_se", "m2_squared", "m2_squared_se"], rows)
    results = {
        "slope_x_m4": lx.slope(),
        "slope_t_m2_squared": lt.slope(),
        "C_t": C_t,
        "t_bound_holds": bool(within.all()),
    }
    if fc.doss_sussmann is not None:
        ds = fc.doss_sussmann
        flow = mspdie.FLOWS[ds.kind]() if ds.kind == "zero" else mspdie.FLOWS[ds.kind](ds.beta)
        b = np.linspace(-ds.b_max, ds.b_max, 25)
        y = np.linspace(-ds.y_max, ds.y_max, 17)[:, None]
        eta = mspdie.flow_eta(flow, 0.0, 0.0, y, b)
        results["doss_sussmann_inverse_error"] = float(np.max(np.abs(mspdie.flow_eps(flow, 0.0, 0.0, eta, b) - y)))
        if ds.kind == "linear":
            results["doss_sussmann_closed_form_error"] = float(np.max(np.abs(eta - y * np.exp(ds.beta * b))))
    out.write_summary(results)


HANDLERS = {
    "simulate": cmd_simulate,
    "teugels": cmd_teugels,
    "prox-check": cmd_prox_check,
    "solve": cmd_solve,
    "converge": cmd_converge,
    "mspdie": cmd_mspdie,
    "flow-check": cmd_flow_check,
}

# numerical failures and the module they come from
NUMERICAL_ERRORS = {
    BisectionError: "convex",
    RegressionRankError: "bdsde_solver",
    TerminalDomainError: "bdsde_solver",
    mspdie.FlowBlowUpError: "mspdie",
    mspdie.DiffeomorphismError: "mspdie",
    FloatingPointError: "numerics",
}


def run(config_path, command: str | None = None, seed: int | None = None, workers: int | None = None, out_dir: str | None = None) -> int:
    """Validate the config, run the command and write its outputs. Returns the exit code."""
    try:
        overrides: dict[str, Any] = {"seed": seed, "workers": workers, "out": out_dir}
        if command is not None:
            overrides["command"] = command
        cfg = load_config(config_path, overrides)
        out = Output(Path(cfg.out), cfg)
        HANDLERS[cfg.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except tuple(NUMERICAL_ERRORS) as exc:
        module = next(m for cls, m in NUMERICAL_ERRORS.items() if isinstance(exc, cls))
        print(f"numerical failure in {module}: {exc}", file=sys.stderr)
        return 1
    for path in out.written:
        print(path)
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="levybdsde", description=__doc__.splitlines()[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS, help="overrides the command named in the config")
    ap.add_argument("--config", required=True, help="YAML experiment config")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--workers", type=int, help="worker threads for outer scenarios")
    ap.add_argument("--out", help="output directory")
    args = ap.parse_args(argv)
    return run(args.config, args.command, args.seed, args.workers, args.out)


if __name__ == "__main__":
    sys.exit(main())
