"""Initial data: nodal interpolation of the outward normal, the mean
curvature and the normal velocity V(H) from analytic geometry.

Sign convention: the mean curvature of a sphere of radius R is 2/R > 0,
and the initial velocity is v = -V(H) nu at every node.
"""

from __future__ import annotations

import numpy as np

from .assembly import pack_fields
from .flows import FlowLaw
from .geometry import Ellipsoid, ImplicitSurface, Sphere, implicit_preset
from .mesh import SurfaceMesh
from .stepping import State


def analytic_data(surface: ImplicitSurface, points: np.ndarray):
    """Outward unit normal and mean curvature at on-surface points."""
    return surface.normal_and_curvature(points)


def build_initial_state(mesh: SurfaceMesh, surface: ImplicitSurface,
                        flow: FlowLaw) -> State:
    """State at t = 0 with nodal nu, V = V(H) and v = -V nu."""
    nu, H = analytic_data(surface, mesh.nodes)
    V = flow.V(H)
    v = -V[:, None] * nu
    u = np.concatenate([pack_fields(nu), V])
    return State(t=0.0, x=pack_fields(mesh.nodes), v=pack_fields(v), u=u)


def geometry_by_name(name: str, **params) -> ImplicitSurface:
    """Geometry presets used by run configurations."""
    if name == "sphere":
        return Sphere(radius=params["radius"])
    if name == "ellipsoid":
        return Ellipsoid(a=params["a"], b=params["b"], c=params["c"])
    return implicit_preset(name)
