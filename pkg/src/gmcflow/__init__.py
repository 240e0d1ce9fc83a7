"""Evolving surface finite elements + linearly implicit BDF for
generalized mean curvature flows v = -V(H) nu of closed surfaces."""

from .assembly import (assemble_curvature_source, assemble_mass,
                       assemble_stiffness, assemble_velocity_source,
                       assemble_weighted_mass, discrete_norm, element_geometry,
                       pack_fields, split_u, surface_area, unpack_fields)
from .config import RunConfig, parse_config
from .diagnostics import (ErrorRecord, TimeSeries, eoc, eoc_fit, error_norms,
                          exact_sphere_state, hawking_mass, maximal_time,
                          schulze_quantity, sphere_radius)
from .flows import FlowLaw, imcf, log_mcf, make_flow, mcf, power_imcf, power_mcf
from .geometry import Dumbbell, Ellipsoid, Genus5, Sphere
from .initial import analytic_data, build_initial_state
from .mesh import (SurfaceMesh, builtin_ellipsoid, builtin_implicit,
                   builtin_sphere, dumbbell_mesh, elevate_degree, export_vtk,
                   genus5_mesh, import_off, mesh_width, read_vtk_points,
                   validate)
from .stepping import (BDFScheme, History, State, Stepper, StepperOptions,
                       bdf_coefficients, bdf_coefficients_exact, extrapolate,
                       solve_spd)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
