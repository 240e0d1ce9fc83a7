"""Exact sphere solutions, monotone quantities, error norms and EOC.

Radius formulas for a d-sphere (= surface dimension, default 2):

  inverse flow            R(t) = R0 exp(t/d)
  inverse power, a != 1   R(t) = (R0^(1-a) - (a-1) d^-a t)^(1/(1-a))
  direct power,  a > 0    R(t) = (R0^(1+a) - (1+a) d^a t)^(1/(1+a))

The inverse-power exponent follows from integrating R' = (R/d)^a; each
formula is cross-checked against a high-order ODE integration in the test
suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import (FESpace, discrete_norm, pack_fields, split_u,
                       surface_area, unpack_fields)
from .flows import FlowLaw
from .mesh import SurfaceMesh
from .stepping import State


class DiagnosticsError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# exact sphere radii

def maximal_time(flow: FlowLaw, R0: float, d: int | None = None) -> float:
    """Largest existence time of the exact sphere solution (inf if global)."""
    d = flow.d if d is None else d
    a = flow.alpha
    if flow.kind == "imcf":
        return math.inf
    if flow.kind == "power_imcf":
        if a <= 1.0:
            return math.inf
        return R0 ** (1.0 - a) / ((a - 1.0) * d ** (-a))
    if flow.kind == "power_mcf":
        return R0 ** (1.0 + a) / ((1.0 + a) * d**a)
    if flow.kind == "mcf":
        return R0**2 / (2.0 * d)
    raise DiagnosticsError(f"no closed-form radius for flow '{flow.kind}'")


def sphere_radius(flow: FlowLaw, R0: float, t, d: int | None = None):
    """Exact radius of the evolving sphere at time t (scalar or array)."""
    d = flow.d if d is None else d
    t = np.asarray(t, dtype=float)
    tmax = maximal_time(flow, R0, d)
    if np.any(t >= tmax):
        raise DiagnosticsError(f"t >= maximal existence time {tmax:g}")
    a = flow.alpha
    if flow.kind == "imcf":
        out = R0 * np.exp(t / d)
    elif flow.kind == "power_imcf":
        if a == 1.0:
            out = R0 * np.exp(t / d)
        else:
            out = (R0 ** (1.0 - a) - (a - 1.0) * d ** (-a) * t) ** (1.0 / (1.0 - a))
    elif flow.kind == "power_mcf":
        out = (R0 ** (1.0 + a) - (1.0 + a) * d**a * t) ** (1.0 / (1.0 + a))
    elif flow.kind == "mcf":
        out = np.sqrt(R0**2 - 2.0 * d * t)
    else:
        raise DiagnosticsError(f"no closed-form radius for flow '{flow.kind}'")
    return float(out) if out.ndim == 0 else out


def radius_rate(flow: FlowLaw, R: float, d: int | None = None) -> float:
    """dR/dt = -V(d/R) of the exact sphere solution."""
    d = flow.d if d is None else d
    return -float(flow.V(d / R))


# ---------------------------------------------------------------------------
# monotone quantities

def hawking_mass(mesh: SurfaceMesh, H_nodal: np.ndarray,
                 quad_degree: int | None = None) -> float:
    """sqrt(Area/16pi) (1 - (1/16pi) int H^2); zero for round spheres."""
    space = FESpace(mesh, quad_degree)
    M = space.mass(space.geometry(mesh.nodes))
    area = surface_area(M)
    h2 = float(H_nodal @ (M @ H_nodal))
    return math.sqrt(area / (16.0 * math.pi)) * (1.0 - h2 / (16.0 * math.pi))


def schulze_pointwise(H, Asq, alpha: float):
    """H^(2a) (2|A|^2 - H^2) / (H^2 - |A|^2)^2 at given point values."""
    H = np.asarray(H, dtype=float)
    Asq = np.asarray(Asq, dtype=float)
    return H ** (2.0 * alpha) * (2.0 * Asq - H**2) / (H**2 - Asq) ** 2


def schulze_pointwise_kappa(k1, k2, alpha: float):
    """(k1+k2)^(2a) (k1-k2)^2 / (4 k1^2 k2^2), the principal-curvature form."""
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    return (k1 + k2) ** (2.0 * alpha) * (k1 - k2) ** 2 / (4.0 * k1**2 * k2**2)


@dataclass
class SchulzeResult:
    value: float
    skipped: int


def schulze_quantity(mesh: SurfaceMesh, u: np.ndarray, flow: FlowLaw,
                     alpha: float | None = None,
                     quad_degree: int | None = None) -> SchulzeResult:
    """Maximum of the power-flow monotone quantity over quadrature points.

    |A_h|^2 comes from the tangential gradient of the interpolated normal
    field; H from interpolating the nodal curvatures V^-1(V_j).  Near
    points where H^2 = |A|^2 the principal-curvature form takes over, and
    parabolic points (a principal curvature below 1e-10) are skipped with
    a count.
    """
    alpha = flow.alpha if alpha is None else alpha
    space = FESpace(mesh, quad_degree)
    geo = space.geometry(mesh.nodes)
    nu, V = split_u(u)
    H_nodal = flow.invert(V)
    H = space.scalar_at_q(H_nodal).ravel()
    Asq = space.grad_sq(geo, nu).ravel()
    denom_small = np.abs(H**2 - Asq) < 1e-10 * np.maximum(1.0, H**2)
    values = np.full(H.shape, -np.inf)
    direct = ~denom_small
    values[direct] = schulze_pointwise(H[direct], Asq[direct], alpha)
    disc = np.sqrt(np.maximum(0.0, 2.0 * Asq[denom_small] - H[denom_small] ** 2))
    k1 = 0.5 * (H[denom_small] + disc)
    k2 = 0.5 * (H[denom_small] - disc)
    usable = np.minimum(np.abs(k1), np.abs(k2)) >= 1e-10
    idx = np.flatnonzero(denom_small)[usable]
    values[idx] = schulze_pointwise_kappa(k1[usable], k2[usable], alpha)
    skipped = int(np.count_nonzero(denom_small) - np.count_nonzero(usable))
    if np.count_nonzero(direct) + np.count_nonzero(usable) == 0:
        raise DiagnosticsError("monotone quantity undefined: all points skipped")
    return SchulzeResult(value=float(np.max(values)), skipped=skipped)


# ---------------------------------------------------------------------------
# exact sphere states and error norms

def exact_sphere_state(flow: FlowLaw, initial_nodes: np.ndarray, R0: float,
                       t: float, d: int | None = None) -> State:
    """Nodal interpolation of the exact solution on a radially scaled mesh."""
    d = flow.d if d is None else d
    R = sphere_radius(flow, R0, t, d)
    p = initial_nodes
    nu = p / np.linalg.norm(p, axis=1)[:, None]
    x = (R / R0) * p
    H = d / R
    V = float(flow.V(H))
    v = -V * nu
    u = np.concatenate([pack_fields(nu), np.full(len(p), V)])
    return State(t=t, x=pack_fields(x), v=pack_fields(v), u=u)


@dataclass
class ErrorRecord:
    """Discrete H1 (K-norm) and L2 (M-norm) errors against nodal
    interpolation of an exact solution, per variable."""

    h: float
    tau: float
    t: float
    h1: dict = field(default_factory=dict)
    l2: dict = field(default_factory=dict)

    def max_with(self, other: "ErrorRecord") -> "ErrorRecord":
        """Pointwise maximum, for accumulating L-infinity-in-time errors."""
        rec = ErrorRecord(self.h, self.tau, max(self.t, other.t))
        for key in self.h1:
            rec.h1[key] = max(self.h1[key], other.h1[key])
            rec.l2[key] = max(self.l2[key], other.l2[key])
        return rec


VARIABLES = ("position", "velocity", "normal", "normal_velocity", "curvature")


def error_norms(state: State, exact: State, flow: FlowLaw,
                space: FESpace | None = None, h: float = float("nan"),
                tau: float = float("nan")) -> ErrorRecord:
    """Errors of one state against exact nodal data, measured in discrete
    norms assembled at the exact nodal positions."""
    if space is None:
        raise ValueError("an FESpace on the shared topology is required")
    geo = space.geometry(unpack_fields(exact.x, 3))
    M = space.mass(geo)
    A = space.stiffness(geo)
    rec = ErrorRecord(h=h, tau=tau, t=state.t)
    H_num = flow.invert(split_u(state.u)[1])
    H_ref = flow.invert(split_u(exact.u)[1])
    diffs = {
        "position": state.x - exact.x,
        "velocity": state.v - exact.v,
        "normal": pack_fields(state.normals() - exact.normals()),
        "normal_velocity": state.velocity_values() - exact.velocity_values(),
        "curvature": H_num - H_ref,
    }
    for key, dvec in diffs.items():
        rec.h1[key] = discrete_norm(dvec, "K", M=M, A=A)
        rec.l2[key] = discrete_norm(dvec, "M", M=M)
    return rec


def eoc(errors, parameters) -> np.ndarray:
    """log(e_i/e_{i+1}) / log(p_i/p_{i+1}) for successive levels."""
    e = np.asarray(errors, dtype=float)
    p = np.asarray(parameters, dtype=float)
    if e.shape != p.shape or e.ndim != 1:
        raise ValueError("errors and parameters must be 1d of equal length")
    return np.log(e[:-1] / e[1:]) / np.log(p[:-1] / p[1:])


def eoc_fit(errors, parameters) -> float:
    """Least-squares slope of log(e) against log(p) over all levels."""
    e = np.log(np.asarray(errors, dtype=float))
    p = np.log(np.asarray(parameters, dtype=float))
    return float(np.polyfit(p, e, 1)[0])


# ---------------------------------------------------------------------------
# time series

class TimeSeries:
    """Named scalar diagnostics sampled at strictly increasing times."""

    def __init__(self, columns):
        self.columns = tuple(columns)
        self.times: list[float] = []
        self.rows: list[tuple] = []

    def append(self, t: float, **values) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("times must be strictly increasing")
        if set(values) != set(self.columns):
            raise ValueError("row keys do not match the column set")
        self.times.append(float(t))
        self.rows.append(tuple(float(values[c]) for c in self.columns))

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(",".join(("time",) + self.columns) + "\n")
            for t, row in zip(self.times, self.rows):
                fh.write(",".join(f"{v:.17g}" for v in (t,) + row) + "\n")
