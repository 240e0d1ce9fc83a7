"""Lagrange reference element on the unit triangle.

Local node ordering (used by every mesh and every assembly routine):

  1. the 3 vertices V0=(0,0), V1=(1,0), V2=(0,1);
  2. for each edge in the order (V0,V1), (V1,V2), (V2,V0), the k-1 edge
     nodes from the first vertex towards the second;
  3. interior nodes in lexicographic order of their integer lattice
     coordinates (i, j), i.e. nodes (i/k, j/k) with i, j >= 1, i+j <= k-1
     sorted by (i, j).

For k=2 this coincides with the VTK quadratic-triangle ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .quadrature import QuadratureRule


def node_count(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


def reference_nodes(degree: int) -> np.ndarray:
    """Reference node coordinates, shape (n_loc, 2), in the local ordering."""
    k = degree
    verts = [(0, 0), (k, 0), (0, k)]
    nodes = list(verts)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        pa, pb = np.array(verts[a]), np.array(verts[b])
        for i in range(1, k):
            nodes.append(tuple(pa + (pb - pa) * i // k))
    for i in range(1, k):
        for j in range(1, k - i):
            nodes.append((i, j))
    return np.array(nodes, dtype=float) / k


@lru_cache(maxsize=None)
def _basis_coefficients(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Monomial exponents (n_loc, 2) and coefficient matrix C.

    phi_i(x, y) = sum_m C[m, i] * x^a_m * y^b_m with phi_i(node_j) = delta_ij.
    """
    k = degree
    exps = np.array([(a, b) for a in range(k + 1) for b in range(k + 1 - a)])
    nodes = reference_nodes(k)
    V = nodes[:, 0][:, None] ** exps[:, 0] * nodes[:, 1][:, None] ** exps[:, 1]
    C = np.linalg.inv(V)  # acceptable conditioning for the small k used here
    return exps, C


@dataclass(frozen=True)
class ReferenceElement:
    """Basis values and gradients tabulated at a quadrature rule."""

    degree: int
    nodes: np.ndarray  # (n_loc, 2)
    quadrature: QuadratureRule
    phi: np.ndarray  # (nq, n_loc)
    dphi: np.ndarray  # (nq, n_loc, 2)

    @property
    def n_local(self) -> int:
        return len(self.nodes)


def evaluate_basis(degree: int, xy: np.ndarray) -> np.ndarray:
    """Basis values at reference points xy (m, 2); returns (m, n_loc)."""
    exps, C = _basis_coefficients(degree)
    xy = np.atleast_2d(xy)
    mono = xy[:, 0][:, None] ** exps[:, 0] * xy[:, 1][:, None] ** exps[:, 1]
    return mono @ C


def evaluate_basis_gradients(degree: int, xy: np.ndarray) -> np.ndarray:
    """Reference gradients at points xy (m, 2); returns (m, n_loc, 2)."""
    exps, C = _basis_coefficients(degree)
    xy = np.atleast_2d(xy)
    a, b = exps[:, 0], exps[:, 1]
    x, y = xy[:, 0][:, None], xy[:, 1][:, None]
    # d/dx x^a y^b = a x^(a-1) y^b, with the a=0 term dropped
    dx = np.where(a > 0, a * x ** np.maximum(a - 1, 0) * y**b, 0.0)
    dy = np.where(b > 0, b * x**a * y ** np.maximum(b - 1, 0), 0.0)
    return np.stack([dx @ C, dy @ C], axis=-1)


def make_reference_element(degree: int, rule: QuadratureRule) -> ReferenceElement:
    xy = rule.xy
    return ReferenceElement(
        degree=degree,
        nodes=reference_nodes(degree),
        quadrature=rule,
        phi=evaluate_basis(degree, xy),
        dphi=evaluate_basis_gradients(degree, xy),
    )
