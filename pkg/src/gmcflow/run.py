"""Batch workflows behind the command line: simulate, convergence study,
monotone-quantity run."""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as diag
from .assembly import pack_fields, split_u, surface_area, unpack_fields
from .config import ConfigError, RunConfig
from .flows import FlowLaw, make_flow
from .geometry import Ellipsoid, Sphere, implicit_preset
from .initial import build_initial_state
from .mesh import (SurfaceMesh, builtin_ellipsoid, builtin_sphere,
                   dumbbell_mesh, export_vtk, genus5_mesh, mesh_width)
from .stepping import History, State, Stepper, StepperOptions

SERIES_COLUMNS = ("area", "hawking_mass", "schulze", "clamps",
                  "min_H", "max_H", "max_normal_deviation")


def build_flow(cfg: RunConfig) -> FlowLaw:
    return make_flow(cfg.flow, alpha=cfg.alpha, h_shift=cfg.h_shift,
                     h_lo=cfg.clamp_lo, h_hi=cfg.clamp_hi)


def build_mesh(cfg: RunConfig, refinement: int | None = None) -> SurfaceMesh:
    r = cfg.refinement if refinement is None else refinement
    if cfg.geometry == "sphere":
        return builtin_sphere(cfg.radius, r, cfg.degree)
    if cfg.geometry == "ellipsoid":
        return builtin_ellipsoid(cfg.semi_axis_a, cfg.semi_axis_b,
                                 cfg.semi_axis_c, r, cfg.degree)
    if cfg.geometry == "dumbbell":
        return dumbbell_mesh(cfg.degree, r)
    if cfg.geometry == "genus5":
        return genus5_mesh(cfg.degree, cfg.mc_resolution)
    raise ConfigError(f"unknown geometry '{cfg.geometry}'")


def build_surface(cfg: RunConfig):
    if cfg.geometry == "sphere":
        return Sphere(radius=cfg.radius)
    if cfg.geometry == "ellipsoid":
        return Ellipsoid(cfg.semi_axis_a, cfg.semi_axis_b, cfg.semi_axis_c)
    return implicit_preset(cfg.geometry)


def stepper_options(cfg: RunConfig) -> StepperOptions:
    return StepperOptions(
        velocity_mode=cfg.velocity_mode,
        cg_tol=cfg.cg_tol,
        cg_max_iter=cfg.cg_max_iter,
        quad_degree=cfg.quad_degree or None,
    )


def check_time_horizon(cfg: RunConfig, flow: FlowLaw) -> None:
    """Reject final times at or beyond the exact blow-up of sphere runs."""
    if cfg.geometry != "sphere" or flow.kind == "log_mcf":
        return
    tmax = diag.maximal_time(flow, cfg.radius)
    if cfg.final_time >= tmax:
        raise ConfigError(
            f"final_time {cfg.final_time:g} >= maximal existence time {tmax:g}"
        )


def warn_step_ratio(cfg: RunConfig, h: float) -> None:
    limit = cfg.step_ratio_limit * h
    if cfg.tau > limit:
        print(
            f"warning: tau = {cfg.tau:g} exceeds {cfg.step_ratio_limit:g} * h"
            f" = {limit:g} (h = {h:g})",
            file=sys.stderr,
        )


@dataclass
class RunResult:
    mesh: SurfaceMesh
    flow: FlowLaw
    series: diag.TimeSeries
    states: list = field(default_factory=list)  # retained startup + final
    final_state: State | None = None
    steps_taken: int = 0
    snapshots: list = field(default_factory=list)


def _record(series, stepper, flow, state, clamped):
    space = stepper.space
    nodes = unpack_fields(state.x, 3)
    geo = space.geometry(nodes)
    M = space.mass(geo)
    nu, V = split_u(state.u)
    H = flow.invert(V)
    mesh_now = SurfaceMesh(stepper.space.degree, nodes, stepper.space.conn)
    try:
        schulze = diag.schulze_quantity(mesh_now, state.u, flow).value
    except diag.DiagnosticsError:
        schulze = math.nan
    series.append(
        state.t,
        area=surface_area(M),
        hawking_mass=diag.hawking_mass(mesh_now, H),
        schulze=schulze,
        clamps=clamped,
        min_H=float(np.min(H)),
        max_H=float(np.max(H)),
        max_normal_deviation=float(
            np.max(np.abs(np.linalg.norm(nu, axis=1) - 1.0))
        ),
    )


def _snapshot(mesh0, state, flow, outdir, index) -> str:
    nodes = unpack_fields(state.x, 3)
    mesh_now = mesh0.with_nodes(nodes)
    nu, V = split_u(state.u)
    path = os.path.join(outdir, f"surf_{index}.vtk")
    export_vtk(mesh_now, {
        "normal": nu,
        "normal_velocity": V,
        "mean_curvature": flow.invert(V),
        "velocity": unpack_fields(state.v, 3),
    }, path)
    return path


def make_history(cfg: RunConfig, stepper: Stepper, mesh: SurfaceMesh,
                 flow: FlowLaw) -> History:
    if cfg.startup == "exact":
        p0 = mesh.nodes
        return stepper.startup_exact(
            lambda t: diag.exact_sphere_state(flow, p0, cfg.radius, t),
            cfg.bdf_order, cfg.tau,
        )
    state0 = build_initial_state(mesh, build_surface(cfg), flow)
    return stepper.startup_bootstrap(state0, cfg.bdf_order, cfg.tau)


def simulate(cfg: RunConfig, write_outputs: bool = True) -> RunResult:
    flow = build_flow(cfg)
    check_time_horizon(cfg, flow)
    mesh = build_mesh(cfg)
    warn_step_ratio(cfg, mesh_width(mesh))
    stepper = Stepper(mesh, flow, stepper_options(cfg))

    n_steps = int(round(cfg.final_time / cfg.tau))
    if abs(n_steps * cfg.tau - cfg.final_time) > 1e-9 * cfg.final_time:
        raise ConfigError("tau must divide final_time")
    cadence = cfg.snapshot_every or max(1, n_steps // 10)

    history = make_history(cfg, stepper, mesh, flow)
    series = diag.TimeSeries(SERIES_COLUMNS)
    result = RunResult(mesh=mesh, flow=flow, series=series)

    if write_outputs:
        os.makedirs(cfg.output_dir, exist_ok=True)
    for level, st in enumerate(history.states):
        _record(series, stepper, flow, st, flow.clamp_count(split_u(st.u)[1]))
        result.states.append(st)
    if write_outputs:
        result.snapshots.append(_snapshot(mesh, history.states[0], flow,
                                          cfg.output_dir, 0))

    start_level = len(history.states) - 1
    for n in range(start_level + 1, n_steps + 1):
        state, report = stepper.step(history)
        history.push(state)
        _record(series, stepper, flow, state, report.clamped)
        result.steps_taken += 1
        if write_outputs and (n % cadence == 0 or n == n_steps):
            result.snapshots.append(
                _snapshot(mesh, state, flow, cfg.output_dir, n)
            )
    result.final_state = history.newest
    if write_outputs:
        series.to_csv(os.path.join(cfg.output_dir, "series.csv"))
    return result


# ---------------------------------------------------------------------------
# convergence studies

@dataclass
class ConvergenceTable:
    mode: str
    variables: tuple
    parameters: list  # h or tau per level
    errors: dict      # variable -> list of L-infinity(H1) errors
    rates: dict       # variable -> pairwise EOC array

    def format(self) -> str:
        head = f"{'level':>5} {'param':>12} " + " ".join(
            f"{v:>22}" for v in self.variables
        )
        lines = [head]
        for i, p in enumerate(self.parameters):
            cells = []
            for v in self.variables:
                cell = f"{self.errors[v][i]:.6e}"
                if i > 0:
                    cell += f" ({self.rates[v][i - 1]:5.2f})"
                cells.append(f"{cell:>22}")
            lines.append(f"{i:>5} {p:>12.6g} " + " ".join(cells))
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            cols = ["level", "parameter"]
            for v in self.variables:
                cols += [f"{v}_error", f"{v}_eoc"]
            fh.write(",".join(cols) + "\n")
            for i, p in enumerate(self.parameters):
                row = [str(i), f"{p:.17g}"]
                for v in self.variables:
                    row.append(f"{self.errors[v][i]:.17g}")
                    row.append("" if i == 0 else f"{self.rates[v][i - 1]:.17g}")
                fh.write(",".join(row) + "\n")


def _sphere_errors_over_run(cfg: RunConfig, refinement: int,
                            tau: float) -> tuple[float, dict]:
    """One run against the exact sphere solution; returns (h, per-variable
    L-infinity-in-time H1 errors)."""
    flow = build_flow(cfg)
    mesh = build_mesh(cfg, refinement=refinement)
    h = mesh_width(mesh)
    stepper = Stepper(mesh, flow, stepper_options(cfg))
    p0 = mesh.nodes

    def exact(t: float) -> State:
        return diag.exact_sphere_state(flow, p0, cfg.radius, t)

    history = stepper.startup_exact(exact, cfg.bdf_order, tau)
    n_steps = int(round(cfg.final_time / tau))
    every = max(1, n_steps // 400)
    worst = None
    for n in range(cfg.bdf_order, n_steps + 1):
        state, _ = stepper.step(history)
        history.push(state)
        if n % every == 0 or n == n_steps:
            rec = diag.error_norms(state, exact(state.t), flow,
                                   space=stepper.space, h=h, tau=tau)
            worst = rec if worst is None else worst.max_with(rec)
    return h, worst.h1


def convergence(cfg: RunConfig, mode: str, levels: int) -> ConvergenceTable:
    """EOC study against the exact sphere solution.

    space mode: refinements cfg.refinement .. +levels-1 at fixed tau;
    time mode: tau halved from cfg.tau at the fixed cfg.refinement mesh.
    """
    if cfg.geometry != "sphere":
        raise ConfigError("convergence studies need the sphere geometry")
    flow = build_flow(cfg)
    check_time_horizon(cfg, flow)
    if mode not in ("space", "time"):
        raise ConfigError("mode must be 'space' or 'time'")
    variables = ("position", "normal", "curvature", "velocity",
                 "normal_velocity")
    params, errs = [], {v: [] for v in variables}
    for lev in range(levels):
        if mode == "space":
            h, h1 = _sphere_errors_over_run(cfg, cfg.refinement + lev, cfg.tau)
            params.append(h)
        else:
            tau = cfg.tau / 2**lev
            _, h1 = _sphere_errors_over_run(cfg, cfg.refinement, tau)
            params.append(tau)
        for v in variables:
            errs[v].append(h1[v])
    rates = {
        v: diag.eoc(errs[v], params) if levels > 1 else np.array([])
        for v in variables
    }
    return ConvergenceTable(mode, variables, params, errs, rates)


# ---------------------------------------------------------------------------
# monotone-quantity runs

@dataclass
class MonotoneVerdict:
    quantity: str
    direction: str
    max_violation: float
    passed: bool


def monotone_verdicts(series: diag.TimeSeries,
                      tol_scale: float = 1e-6) -> list[MonotoneVerdict]:
    """Per-quantity monotonicity check with tolerance tol*(1+|m|) per step."""
    out = []
    for name, direction in (("hawking_mass", "non-decreasing"),
                            ("schulze", "non-increasing")):
        vals = series.column(name)
        vals = vals[np.isfinite(vals)]
        worst = 0.0
        for a, b in zip(vals[:-1], vals[1:]):
            step = (a - b) if direction == "non-decreasing" else (b - a)
            allowed = tol_scale * (1.0 + abs(a))
            worst = max(worst, step - allowed)
        out.append(MonotoneVerdict(name, direction, max(worst, 0.0),
                                   worst <= 0.0))
    return out


def monotone(cfg: RunConfig, write_outputs: bool = True):
    result = simulate(cfg, write_outputs=write_outputs)
    verdicts = monotone_verdicts(result.series)
    return result, verdicts
