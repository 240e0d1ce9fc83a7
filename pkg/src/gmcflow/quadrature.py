"""Quadrature rules on the unit reference triangle {x,y >= 0, x+y <= 1}.

Points are stored in barycentric coordinates (l0, l1, l2) with
l0 = 1-x-y, l1 = x, l2 = y; weights sum to 1/2, the reference area.

`triangle_rule` returns a symmetric rule (Dunavant tables up to degree 8)
and falls back to a collapsed tensor Gauss rule for higher degrees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    degree: int
    points: np.ndarray  # (nq, 3) barycentric
    weights: np.ndarray  # (nq,), sum = 1/2

    @property
    def xy(self) -> np.ndarray:
        """Cartesian reference coordinates, shape (nq, 2)."""
        return self.points[:, 1:]

    def __len__(self) -> int:
        return len(self.weights)


def _orbit3(a: float) -> np.ndarray:
    b = 1.0 - 2.0 * a
    return np.array([[b, a, a], [a, b, a], [a, a, b]])


def _orbit6(a: float, b: float) -> np.ndarray:
    c = 1.0 - a - b
    return np.array(
        [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]
    )


# Symmetric rules; weights in the "sum to one" convention, scaled by 1/2 below.
_DUNAVANT = {
    1: [(1.0, np.array([[1 / 3, 1 / 3, 1 / 3]]))],
    2: [(1 / 3, _orbit3(1 / 6))],
    4: [
        (0.223381589678011, _orbit3(0.445948490915965)),
        (0.109951743655322, _orbit3(0.091576213509771)),
    ],
    6: [
        (0.116786275726379, _orbit3(0.249286745170910)),
        (0.050844906370207, _orbit3(0.063089014491502)),
        (0.082851075618374, _orbit6(0.310352451033785, 0.053145049844816)),
    ],
    8: [
        (0.1443156076777871, np.array([[1 / 3, 1 / 3, 1 / 3]])),
        (0.0950916342672846, _orbit3(0.4592925882927232)),
        (0.1032173705347183, _orbit3(0.1705693077517602)),
        (0.0324584976231980, _orbit3(0.0505472283170310)),
        (0.0272303141744349, _orbit6(0.2631128296346381, 0.7284923929554043)),
    ],
}


def _from_table(degree: int) -> QuadratureRule:
    pts, wts = [], []
    for w, orbit in _DUNAVANT[degree]:
        pts.append(orbit)
        wts.append(np.full(len(orbit), w))
    points = np.vstack(pts)
    weights = 0.5 * np.concatenate(wts)
    return QuadratureRule(degree, points, weights)


def collapsed_gauss(degree: int) -> QuadratureRule:
    """Tensor Gauss-Legendre rule collapsed onto the triangle (Duffy map).

    Exact for polynomials of total degree <= degree; n = ceil((degree+2)/2)
    points per axis.  Used as the high-order fallback and by brute-force
    verification; not symmetric.
    """
    n = (degree + 3) // 2
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (x + 1.0)  # map to [0,1]
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    xs = U.ravel()
    ys = (V * (1.0 - U)).ravel()
    weights = (WU * WV * (1.0 - U)).ravel()
    points = np.column_stack([1.0 - xs - ys, xs, ys])
    return QuadratureRule(degree, points, weights)


def triangle_rule(degree: int) -> QuadratureRule:
    """Rule exact for polynomials of total degree <= degree."""
    if degree < 1:
        degree = 1
    for d in sorted(_DUNAVANT):
        if d >= degree:
            return _from_table(d)
    return collapsed_gauss(degree)
