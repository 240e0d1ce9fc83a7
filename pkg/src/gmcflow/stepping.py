"""Linearly implicit q-step BDF time integration of the coupled system.

One step, with all geometry and nonlinearities frozen at the extrapolated
nodal vector xt and field ut:

    K(xt) v  = g(xt, ut)                       (velocity solve, 3 blocks)
    ((d0/tau) Mw(xt,ut) + A(xt)) u = f(xt, ut)
                - Mw(xt,ut) (1/tau) sum_{j>=1} delta_j u^{n-j}
    x = (tau v - sum_{j>=1} delta_j x^{n-j}) / delta_0

Both matrices are symmetric positive definite; the solves use diagonally
preconditioned conjugate gradients on all component blocks at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .assembly import FESpace, split_u, unpack_fields, pack_fields
from .flows import FlowLaw
from .mesh import SurfaceMesh


class SolverError(RuntimeError):
    pass


class NotPositiveDefiniteError(SolverError):
    pass


# ---------------------------------------------------------------------------
# BDF coefficients

def bdf_coefficients_exact(q: int):
    """delta and gamma coefficient lists as exact rationals.

    delta(z) = sum_{l=1..q} (1-z)^l / l   and   gamma(z) = (1-(1-z)^q)/z,
    expanded in powers of z.
    """
    if not 1 <= q <= 5:
        raise ValueError("BDF order must be between 1 and 5")
    delta = [Fraction(0)] * (q + 1)
    for ell in range(1, q + 1):
        # (1-z)^ell = sum_j C(ell,j) (-z)^j
        c = Fraction(1)
        for j in range(ell + 1):
            delta[j] += c / ell
            c = c * (ell - j) // (j + 1) * -1
    gamma = []
    c = 1
    for j in range(1, q + 1):
        c = c * (q - j + 1) // j
        gamma.append(Fraction((-1) ** (j + 1) * c))
    return delta, gamma


def bdf_coefficients(q: int):
    """Float (delta, gamma) arrays; q=1 is backward Euler with constant
    extrapolation (admitted for startup only)."""
    delta, gamma = bdf_coefficients_exact(q)
    return (np.array([float(d) for d in delta]),
            np.array([float(g) for g in gamma]))


@dataclass(frozen=True)
class BDFScheme:
    q: int
    delta: np.ndarray
    gamma: np.ndarray

    @classmethod
    def of_order(cls, q: int) -> "BDFScheme":
        d, g = bdf_coefficients(q)
        return cls(q, d, g)


# ---------------------------------------------------------------------------
# states and history

@dataclass(frozen=True)
class State:
    """One time level: positions, velocities and u = (nu, V), all in the
    component-major flat layout."""

    t: float
    x: np.ndarray  # (3N,)
    v: np.ndarray  # (3N,)
    u: np.ndarray  # (4N,)

    def __post_init__(self):
        for name in ("x", "v", "u"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"state field {name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self) -> int:
        return self.x.size // 3

    def positions(self) -> np.ndarray:
        return unpack_fields(self.x, 3)

    def normals(self) -> np.ndarray:
        return split_u(self.u)[0]

    def velocity_values(self) -> np.ndarray:
        return split_u(self.u)[1]


@dataclass
class History:
    """Ring buffer of the last q states (oldest first) and the step size."""

    scheme: BDFScheme
    tau: float
    states: list = field(default_factory=list)

    def push(self, state: State) -> None:
        self.states.append(state)
        if len(self.states) > self.scheme.q:
            self.states.pop(0)

    @property
    def full(self) -> bool:
        return len(self.states) == self.scheme.q

    @property
    def newest(self) -> State:
        return self.states[-1]


def extrapolate(history: History):
    """(x_tilde, u_tilde) = sum_j gamma_j (x, u)^{n-1-j}."""
    if not history.full:
        raise ValueError("history does not hold q levels")
    gamma = history.scheme.gamma
    xs = history.states[::-1]  # newest first
    xt = sum(g * s.x for g, s in zip(gamma, xs))
    ut = sum(g * s.u for g, s in zip(gamma, xs))
    return xt, ut


def backward_tail(history: History, attr: str) -> np.ndarray:
    """sum_{j=1..q} delta_j y^{n-j} for y = x or u."""
    delta = history.scheme.delta
    xs = history.states[::-1]
    return sum(delta[j + 1] * getattr(s, attr) for j, s in enumerate(xs))


# ---------------------------------------------------------------------------
# SPD solver

def solve_spd(A, rhs: np.ndarray, tol: float = 1e-10, max_iter: int = 20000,
              x0: np.ndarray | None = None) -> np.ndarray:
    """Diagonally preconditioned CG; relative residual <= tol per column.

    rhs may hold several right-hand sides as columns.  Deterministic: fixed
    iteration order, no randomness.  Raises NotPositiveDefiniteError for
    matrices that annihilate constants (a closed-surface stiffness matrix
    alone) or exhibit non-positive curvature, and SolverError when the
    iteration cap is hit.
    """
    n = A.shape[0]
    d = A.diagonal()
    if np.any(d <= 0.0):
        raise NotPositiveDefiniteError("non-positive diagonal entry")
    ones = np.ones(n)
    scale = np.max(np.abs(A @ ones)) if n else 0.0
    if scale <= 1e-12 * float(np.max(np.abs(d))):
        raise NotPositiveDefiniteError(
            "matrix annihilates constant vectors (positive semidefinite only)"
        )
    b = np.asarray(rhs, dtype=float)
    squeeze = b.ndim == 1
    B = b[:, None] if squeeze else b.copy()
    X = np.zeros_like(B) if x0 is None else (
        x0[:, None].copy() if squeeze else np.array(x0, dtype=float)
    )
    bnorm = np.linalg.norm(B, axis=0)
    target = tol * np.where(bnorm > 0, bnorm, 1.0)
    R = B - A @ X
    Z = R / d[:, None]
    P = Z.copy()
    rz = np.einsum("nc,nc->c", R, Z)
    for _ in range(max_iter):
        res = np.linalg.norm(R, axis=0)
        if np.all(res <= target):
            return X[:, 0] if squeeze else X
        Q = A @ P
        pq = np.einsum("nc,nc->c", P, Q)
        live = res > target
        if np.any(pq[live] <= 0.0):
            raise NotPositiveDefiniteError("non-positive curvature in CG")
        alpha = np.where(live, rz / np.where(pq != 0, pq, 1.0), 0.0)
        X += alpha * P
        R -= alpha * Q
        Z = R / d[:, None]
        rz_new = np.einsum("nc,nc->c", R, Z)
        beta = np.where(live, rz_new / np.where(rz != 0, rz, 1.0), 0.0)
        P = Z + beta * P
        rz = rz_new
    raise SolverError(
        f"CG did not reach tol={tol:g} in {max_iter} iterations, "
        f"max relative residual {float(np.max(res / np.maximum(bnorm, 1e-300))):.3e}"
    )


# ---------------------------------------------------------------------------
# stepper

@dataclass
class StepperOptions:
    velocity_mode: str = "ritz"  # or "pointwise"
    cg_tol: float = 1e-10
    cg_max_iter: int = 20000
    quad_degree: int | None = None


@dataclass
class StepReport:
    clamped: int
    max_normal_deviation: float


class Stepper:
    """Advances states on a fixed topology; geometry follows the nodes."""

    def __init__(self, mesh: SurfaceMesh, flow: FlowLaw,
                 options: StepperOptions | None = None):
        self.options = options or StepperOptions()
        if self.options.velocity_mode not in ("ritz", "pointwise"):
            raise ValueError("velocity_mode must be 'ritz' or 'pointwise'")
        self.space = FESpace(mesh, self.options.quad_degree)
        self.flow = flow
        self.n = mesh.n_nodes
        self._warm_v = None
        self._warm_u = None

    def step(self, history: History) -> tuple[State, StepReport]:
        opts = self.options
        scheme = history.scheme
        tau = history.tau
        xt, ut = extrapolate(history)

        geo = self.space.geometry(unpack_fields(xt, 3))
        M = self.space.mass(geo)
        A = self.space.stiffness(geo)
        Mw = self.space.weighted_mass(geo, ut, self.flow)

        # velocity law
        if opts.velocity_mode == "ritz":
            g = self.space.velocity_source(geo, ut)
            K = (M + A).tocsr()
            rhs = g.reshape(3, self.n).T
            v_cols = solve_spd(K, rhs, tol=opts.cg_tol,
                               max_iter=opts.cg_max_iter, x0=self._warm_v)
            self._warm_v = v_cols.copy()
            v = pack_fields(v_cols)
        else:
            nut, Vt = split_u(ut)
            v = pack_fields(-Vt[:, None] * nut)

        # u solve: one matrix, four component blocks
        f = self.space.curvature_source(geo, ut)
        d0 = scheme.delta[0]
        L = ((d0 / tau) * Mw + A).tocsr()
        tail = backward_tail(history, "u") / tau
        rhs_u = f - pack_fields(np.asarray(Mw @ unpack_fields(tail, 4)))
        rhs_cols = rhs_u.reshape(4, self.n).T
        u_cols = solve_spd(L, rhs_cols, tol=opts.cg_tol,
                           max_iter=opts.cg_max_iter, x0=self._warm_u)
        self._warm_u = u_cols.copy()
        u = pack_fields(u_cols)

        x = (tau * v - backward_tail(history, "x")) / scheme.delta[0]
        t = history.newest.t + tau
        state = State(t=t, x=x, v=v, u=u)
        from .assembly import normal_deviation

        report = StepReport(
            clamped=self.flow.clamp_count(split_u(u)[1]),
            max_normal_deviation=normal_deviation(u),
        )
        return state, report

    # -- startup -------------------------------------------------------------

    def startup_exact(self, exact_state, q: int, tau: float) -> History:
        """Fill the q starting levels from a closed-form solution;
        exact_state(t) must return a State."""
        history = History(BDFScheme.of_order(q), tau)
        for i in range(q):
            history.push(exact_state(i * tau))
        return history

    def startup_bootstrap(self, state0: State, q: int, tau: float) -> History:
        """Order ramp-up: level i is reached from level i-1 by the order-i
        scheme with 2^(q-i) substeps, its substep history resampled from the
        coarse levels by polynomial interpolation."""
        levels = [state0]
        for i in range(1, q):
            m = 2 ** (q - i)
            sigma = tau / m
            sub = History(BDFScheme.of_order(i), sigma)
            t_prev = (i - 1) * tau
            for j in range(i - 1, -1, -1):
                t_j = t_prev - j * sigma
                sub.push(_interpolate_states(levels, t_j))
            for _ in range(m):
                nxt, _ = self.step(sub)
                sub.push(nxt)
            levels.append(sub.newest)
        history = History(BDFScheme.of_order(q), tau)
        for s in levels:
            history.push(s)
        return history


def _interpolate_states(levels, t: float) -> State:
    """Lagrange interpolation of the available levels at time t."""
    ts = np.array([s.t for s in levels])
    if len(levels) == 1 or np.min(np.abs(ts - t)) < 1e-14 * max(1.0, abs(t)):
        i = int(np.argmin(np.abs(ts - t)))
        src = levels[i]
        return State(t=t, x=src.x, v=src.v, u=src.u)
    w = np.ones(len(levels))
    for i in range(len(levels)):
        for j in range(len(levels)):
            if i != j:
                w[i] *= (t - ts[j]) / (ts[i] - ts[j])
    x = sum(wi * s.x for wi, s in zip(w, levels))
    v = sum(wi * s.v for wi, s in zip(w, levels))
    u = sum(wi * s.u for wi, s in zip(w, levels))
    return State(t=t, x=x, v=v, u=u)
