"""Curved-element assembly of the surface FEM operators.

For an element parametrized by F(xi) = sum_i X_i phi_i(xi) with Jacobian
J (3x2) and first fundamental form G = J^T J, the area factor is
sqrt(det G) and the tangential gradient of a FE function with reference
gradient ghat is J G^-1 ghat; inner products of tangential gradients
reduce to ghat_u^T G^-1 ghat_w.

Vector fields use the component-major layout: component l of an R^{dN}
vector occupies indices l*N .. (l+1)*N-1.  The combined field
u = (nu, V) in R^{4N} stores the three normal components first.

Assembly is vectorized over elements in a fixed order, so results are
deterministic; assembled matrices are exactly symmetric and immutable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .flows import FlowLaw
from .mesh import SurfaceMesh
from .quadrature import triangle_rule
from .reference import ReferenceElement, make_reference_element


class DegenerateElementError(RuntimeError):
    def __init__(self, element: int, detg: float):
        super().__init__(
            f"element {element} degenerate: det(J^T J) = {detg:.3e} <= 1e-28"
        )
        self.element = element


class InvalidStateError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# field vector layout

def pack_fields(components: np.ndarray) -> np.ndarray:
    """(N, d) nodal components -> component-major flat vector (d*N,)."""
    return np.ascontiguousarray(components.T).ravel()

def unpack_fields(vec: np.ndarray, d: int) -> np.ndarray:
    """Component-major flat vector (d*N,) -> (N, d) nodal components."""
    vec = np.asarray(vec)
    if vec.size % d:
        raise ValueError(f"vector of size {vec.size} is not {d} blocks")
    return vec.reshape(d, -1).T

def split_u(u: np.ndarray):
    """u = (nu, V) in R^{4N} -> (nu as (N,3), V as (N,))."""
    n = np.asarray(u).size // 4
    return unpack_fields(u[: 3 * n], 3), u[3 * n :]


@dataclass(frozen=True)
class Geometry:
    """Per-quadrature-point element geometry for one nodal configuration."""

    J: np.ndarray        # (nE, nq, 3, 2)
    sqrtg: np.ndarray    # (nE, nq) area factors
    Ginv: np.ndarray     # (nE, nq, 2, 2)
    normals: np.ndarray  # (nE, nq, 3), orientation-consistent
    wdet: np.ndarray     # (nE, nq) quadrature weight * area factor
    positions: np.ndarray  # (nE, nq, 3)


class FESpace:
    """Fixed topology + reference tables; geometry varies with the nodes."""

    def __init__(self, mesh: SurfaceMesh, quad_degree: int | None = None):
        self.degree = mesh.degree
        self.conn = mesh.elements
        self.n_nodes = mesh.n_nodes
        if quad_degree is None:
            quad_degree = 2 * mesh.degree + 2
        self.ref: ReferenceElement = make_reference_element(
            mesh.degree, triangle_rule(quad_degree)
        )
        nloc = self.ref.n_local
        self._rows = np.repeat(self.conn, nloc, axis=1).ravel()
        self._cols = np.tile(self.conn, (1, nloc)).ravel()

    def geometry(self, nodes: np.ndarray) -> Geometry:
        ref = self.ref
        Xe = nodes[self.conn]  # (nE, nloc, 3)
        J = np.einsum("elc,qla->eqca", Xe, ref.dphi)
        G = np.einsum("eqca,eqcb->eqab", J, J)
        detg = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] ** 2
        if np.any(detg <= 1e-28):
            e = int(np.argmin(detg.min(axis=1)))
            raise DegenerateElementError(e, float(detg.min()))
        Ginv = np.empty_like(G)
        Ginv[..., 0, 0] = G[..., 1, 1]
        Ginv[..., 1, 1] = G[..., 0, 0]
        Ginv[..., 0, 1] = -G[..., 0, 1]
        Ginv[..., 1, 0] = -G[..., 1, 0]
        Ginv /= detg[..., None, None]
        sqrtg = np.sqrt(detg)
        normals = np.cross(J[..., 0], J[..., 1])
        normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
        wdet = ref.quadrature.weights[None, :] * sqrtg
        positions = np.einsum("ql,elc->eqc", ref.phi, Xe)
        return Geometry(J, sqrtg, Ginv, normals, wdet, positions)

    # nodal -> quadrature-point values
    def scalar_at_q(self, nodal: np.ndarray) -> np.ndarray:
        return np.einsum("qi,ei->eq", self.ref.phi, nodal[self.conn])

    def vector_at_q(self, nodal: np.ndarray) -> np.ndarray:
        return np.einsum("qi,eic->eqc", self.ref.phi, nodal[self.conn])

    def scalar_refgrad(self, nodal: np.ndarray) -> np.ndarray:
        return np.einsum("qia,ei->eqa", self.ref.dphi, nodal[self.conn])

    def vector_refgrad(self, nodal: np.ndarray) -> np.ndarray:
        return np.einsum("qia,eic->eqac", self.ref.dphi, nodal[self.conn])

    def grad_sq(self, geo: Geometry, nodal_vec: np.ndarray) -> np.ndarray:
        """|grad_Gamma w|^2 (Frobenius) at quadrature points, w vector field."""
        g = self.vector_refgrad(nodal_vec)
        return np.einsum("eqac,eqab,eqbc->eq", g, geo.Ginv, g, optimize=True)

    # -- scatter helpers ----------------------------------------------------

    def _to_csr(self, local: np.ndarray) -> sp.csr_matrix:
        local = 0.5 * (local + local.transpose(0, 2, 1))
        mat = sp.coo_matrix(
            (local.ravel(), (self._rows, self._cols)),
            shape=(self.n_nodes, self.n_nodes),
        ).tocsr()
        mat = (0.5 * (mat + mat.T)).tocsr()
        mat.data.setflags(write=False)
        return mat

    def _scatter(self, local: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_nodes)
        np.add.at(out, self.conn.ravel(), local.ravel())
        return out

    # -- operators -----------------------------------------------------------

    def mass(self, geo: Geometry) -> sp.csr_matrix:
        phi = self.ref.phi
        local = np.einsum("eq,qi,qj->eij", geo.wdet, phi, phi, optimize=True)
        return self._to_csr(local)

    def stiffness(self, geo: Geometry) -> sp.csr_matrix:
        dphi = self.ref.dphi
        local = np.einsum(
            "eq,qia,eqab,qjb->eij", geo.wdet, dphi, geo.Ginv, dphi, optimize=True
        )
        return self._to_csr(local)

    def weighted_mass(self, geo: Geometry, u: np.ndarray,
                      flow: FlowLaw) -> sp.csr_matrix:
        """Mass matrix with weight 1/V'_h, where V'_h interpolates the nodal
        values V'(H_j) and H_j inverts the nodal velocities."""
        _, V = split_u(u)
        w_nodal = flow.dV(flow.invert(V))
        bad = ~np.isfinite(w_nodal) | (w_nodal <= 0.0)
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            raise InvalidStateError(
                f"non-positive or non-finite velocity-law weight at node {j}"
            )
        w_q = self.scalar_at_q(w_nodal)
        if np.any(w_q <= 0.0):
            e = int(np.argwhere(w_q <= 0.0)[0, 0])
            raise InvalidStateError(
                f"interpolated velocity-law weight non-positive in element {e}"
            )
        phi = self.ref.phi
        local = np.einsum(
            "eq,eq,qi,qj->eij", geo.wdet, 1.0 / w_q, phi, phi, optimize=True
        )
        return self._to_csr(local)

    def curvature_source(self, geo: Geometry, u: np.ndarray) -> np.ndarray:
        """The 4N vector with |A_h|^2 nu_h phi_j blocks and |A_h|^2 V_h phi_j."""
        nu, V = split_u(u)
        phi = self.ref.phi
        asq = self.grad_sq(geo, nu)
        nu_q = self.vector_at_q(nu)
        V_q = self.scalar_at_q(V)
        base = geo.wdet * asq
        loc_nu = np.einsum("eq,eqc,qj->ejc", base, nu_q, phi, optimize=True)
        loc_V = np.einsum("eq,eq,qj->ej", base, V_q, phi, optimize=True)
        out = np.empty(4 * self.n_nodes)
        for c in range(3):
            out[c * self.n_nodes : (c + 1) * self.n_nodes] = self._scatter(
                loc_nu[:, :, c]
            )
        out[3 * self.n_nodes :] = self._scatter(loc_V)
        return out

    def velocity_source(self, geo: Geometry, u: np.ndarray) -> np.ndarray:
        """The 3N vector -int V nu_l phi_j - int grad(V nu_l).grad(phi_j).

        The gradient of the product of the two FE functions is formed by the
        product rule on their interpolated gradients.
        """
        nu, V = split_u(u)
        phi, dphi = self.ref.phi, self.ref.dphi
        nu_q = self.vector_at_q(nu)
        V_q = self.scalar_at_q(V)
        gnu = self.vector_refgrad(nu)
        gV = self.scalar_refgrad(V)
        gprod = V_q[..., None, None] * gnu + nu_q[:, :, None, :] * gV[..., None]
        loc = np.einsum("eq,eq,eqc,qj->ejc", geo.wdet, V_q, nu_q, phi,
                        optimize=True)
        loc += np.einsum("eq,eqac,eqab,qjb->ejc", geo.wdet, gprod, geo.Ginv,
                         dphi, optimize=True)
        out = np.empty(3 * self.n_nodes)
        for c in range(3):
            out[c * self.n_nodes : (c + 1) * self.n_nodes] = -self._scatter(
                loc[:, :, c]
            )
        return out


# ---------------------------------------------------------------------------
# mesh-level wrappers

def assemble_mass(mesh: SurfaceMesh, quad_degree: int | None = None):
    space = FESpace(mesh, quad_degree)
    return space.mass(space.geometry(mesh.nodes))

def assemble_stiffness(mesh: SurfaceMesh, quad_degree: int | None = None):
    space = FESpace(mesh, quad_degree)
    return space.stiffness(space.geometry(mesh.nodes))

def assemble_weighted_mass(mesh: SurfaceMesh, u: np.ndarray, flow: FlowLaw,
                           quad_degree: int | None = None):
    space = FESpace(mesh, quad_degree)
    return space.weighted_mass(space.geometry(mesh.nodes), u, flow)

def assemble_curvature_source(mesh: SurfaceMesh, u: np.ndarray,
                              quad_degree: int | None = None):
    space = FESpace(mesh, quad_degree)
    return space.curvature_source(space.geometry(mesh.nodes), u)

def assemble_velocity_source(mesh: SurfaceMesh, u: np.ndarray,
                             quad_degree: int | None = None):
    space = FESpace(mesh, quad_degree)
    return space.velocity_source(space.geometry(mesh.nodes), u)


def element_geometry(mesh: SurfaceMesh, element: int,
                     quad_degree: int | None = None) -> dict:
    """Per-quadrature-point geometry of one element: position, tangential
    gradient operator J G^-1 (3x2), area factor and unit normal."""
    space = FESpace(mesh, quad_degree)
    geo = space.geometry(mesh.nodes)
    e = element
    return {
        "position": geo.positions[e],
        "gradient_operator": np.einsum("qca,qab->qcb", geo.J[e], geo.Ginv[e]),
        "area_factor": geo.sqrtg[e],
        "normal": geo.normals[e],
    }


def discrete_norm(w: np.ndarray, which: str, M=None, A=None) -> float:
    """Blockwise matrix norm of a component-major nodal vector.

    which selects the L2 norm ("M"), the H1 seminorm ("A") or the full H1
    norm ("K", requiring both matrices).
    """
    w = np.asarray(w, dtype=float)
    mats = {"M": [M], "A": [A], "K": [M, A]}
    try:
        parts = mats[which]
    except KeyError:
        raise ValueError("which must be 'M', 'A' or 'K'") from None
    if any(B is None for B in parts):
        raise ValueError(f"norm '{which}' needs its matrices")
    n = parts[0].shape[0]
    if w.size % n:
        raise ValueError(f"vector of size {w.size} is not blocks of {n}")
    blocks = w.reshape(-1, n)
    total = 0.0
    for B in parts:
        total += float(np.sum(blocks * (B @ blocks.T).T))
    return np.sqrt(total)


def surface_area(M) -> float:
    """1^T M 1, the discrete area behind the mass matrix."""
    ones = np.ones(M.shape[0])
    return float(ones @ (M @ ones))


def normal_deviation(u: np.ndarray) -> float:
    """max_j | |nu_j| - 1 |, a diagnostic that never alters the state."""
    nu, _ = split_u(u)
    return float(np.max(np.abs(np.linalg.norm(nu, axis=1) - 1.0)))
