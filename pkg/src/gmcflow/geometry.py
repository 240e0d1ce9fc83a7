"""Implicit surface presets with hand-coded derivatives.

Each surface is the zero level set of a smooth scalar field phi with
phi < 0 inside, so grad(phi) points outward.  Gradients and Hessians are
coded analytically; the mean curvature follows from

    H = (lap(phi) |grad phi|^2 - grad(phi)^T Hess(phi) grad(phi)) / |grad phi|^3

with the sign convention that a sphere of radius R has H = 2/R.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SingularGradientError(ValueError):
    """Raised when |grad phi| vanishes at an evaluation point."""


@dataclass(frozen=True)
class ImplicitSurface:
    """Base class; subclasses implement value/grad/hess on (n,3) arrays."""

    def value(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def normal_and_curvature(self, p):
        """Outward unit normal and mean curvature at points on the surface.

        Returns (nu, H) with nu of shape (n,3) and H of shape (n,).
        """
        p = np.atleast_2d(np.asarray(p, dtype=float))
        g = self.grad(p)
        ng = np.linalg.norm(g, axis=1)
        if np.any(ng < 1e-12):
            j = int(np.argmin(ng))
            raise SingularGradientError(
                f"gradient of the level set vanishes at point {p[j]}"
            )
        nu = g / ng[:, None]
        Hmat = self.hess(p)
        lap = np.trace(Hmat, axis1=1, axis2=2)
        gHg = np.einsum("ni,nij,nj->n", g, Hmat, g)
        H = (lap * ng**2 - gHg) / ng**3
        return nu, H


@dataclass(frozen=True)
class Sphere(ImplicitSurface):
    radius: float

    def value(self, p):
        p = np.atleast_2d(p)
        return np.einsum("ni,ni->n", p, p) - self.radius**2

    def grad(self, p):
        return 2.0 * np.atleast_2d(p)

    def hess(self, p):
        n = np.atleast_2d(p).shape[0]
        return np.broadcast_to(2.0 * np.eye(3), (n, 3, 3)).copy()


@dataclass(frozen=True)
class Ellipsoid(ImplicitSurface):
    a: float
    b: float
    c: float

    def _inv2(self):
        return np.array([self.a, self.b, self.c], dtype=float) ** -2

    def value(self, p):
        p = np.atleast_2d(p)
        return p**2 @ self._inv2() - 1.0

    def grad(self, p):
        return 2.0 * np.atleast_2d(p) * self._inv2()

    def hess(self, p):
        n = np.atleast_2d(p).shape[0]
        return np.broadcast_to(2.0 * np.diag(self._inv2()), (n, 3, 3)).copy()


@dataclass(frozen=True)
class Dumbbell(ImplicitSurface):
    """x1^2 + x2^2 + 2 x3^2 (x3^2 - 159/200) - 1/2 = 0."""

    def value(self, p):
        p = np.atleast_2d(p)
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        return x**2 + y**2 + 2.0 * z**2 * (z**2 - 159.0 / 200.0) - 0.5

    def grad(self, p):
        p = np.atleast_2d(p)
        g = np.empty_like(p)
        g[:, 0] = 2.0 * p[:, 0]
        g[:, 1] = 2.0 * p[:, 1]
        z = p[:, 2]
        g[:, 2] = 8.0 * z**3 - (159.0 / 50.0) * z
        return g

    def hess(self, p):
        p = np.atleast_2d(p)
        n = p.shape[0]
        h = np.zeros((n, 3, 3))
        h[:, 0, 0] = 2.0
        h[:, 1, 1] = 2.0
        h[:, 2, 2] = 24.0 * p[:, 2] ** 2 - 159.0 / 50.0
        return h


@dataclass(frozen=True)
class Genus5(ImplicitSurface):
    """(x1^2-1)^2 + (x2^2-1)^2 + (x3^2-1)^2 - 1.05 = 0, a genus 5 surface."""

    def value(self, p):
        p = np.atleast_2d(p)
        return np.sum((p**2 - 1.0) ** 2, axis=1) - 1.05

    def grad(self, p):
        p = np.atleast_2d(p)
        return 4.0 * p * (p**2 - 1.0)

    def hess(self, p):
        p = np.atleast_2d(p)
        n = p.shape[0]
        h = np.zeros((n, 3, 3))
        for i in range(3):
            h[:, i, i] = 12.0 * p[:, i] ** 2 - 4.0
        return h


_PRESETS = {
    "dumbbell": Dumbbell,
    "genus5": Genus5,
}


def implicit_preset(name: str) -> ImplicitSurface:
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown implicit preset '{name}'") from None
