"""Closed degree-k curved surface triangulations.

A mesh stores the nodal vector (N points in R^3) and per-element node
tuples of length (k+1)(k+2)/2 following the local ordering documented in
`reference`: 3 vertices, then k-1 nodes per edge for the edges
(v0,v1), (v1,v2), (v2,v0), then interior nodes lexicographically.
Edge nodes are shared between the two adjacent elements, so the induced
piecewise-polynomial surface is watertight by construction; `validate`
checks this plus consistent orientation.

Meshes are immutable after construction and safe to share read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import ImplicitSurface
from .reference import node_count, reference_nodes


class MeshError(ValueError):
    pass


class ProjectionError(MeshError):
    pass


@dataclass(frozen=True)
class SurfaceMesh:
    degree: int
    nodes: np.ndarray  # (N, 3) float
    elements: np.ndarray  # (M, n_loc) int

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        if elements.ndim != 2 or elements.shape[1] != node_count(self.degree):
            raise MeshError(
                f"elements must have {node_count(self.degree)} nodes for degree "
                f"{self.degree}, got shape {elements.shape}"
            )
        nodes.setflags(write=False)
        elements.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def with_nodes(self, nodes: np.ndarray) -> "SurfaceMesh":
        """Same topology, new nodal positions."""
        if nodes.shape != self.nodes.shape:
            raise MeshError("nodal vector shape mismatch")
        return replace(self, nodes=nodes)


# ---------------------------------------------------------------------------
# validation

def _corner_edges(elements):
    """Directed corner edges (3M, 2) in local edge order (0,1),(1,2),(2,0)."""
    c = elements[:, :3]
    return np.stack(
        [c[:, [0, 1]], c[:, [1, 2]], c[:, [2, 0]]], axis=1
    ).reshape(-1, 2)


def validate(mesh: SurfaceMesh) -> None:
    """Raise MeshError unless the mesh is a watertight, consistently
    oriented closed surface with shared edge nodes."""
    k, elems = mesh.degree, mesh.elements
    if elems.size == 0:
        raise MeshError("empty mesh")
    referenced = np.zeros(mesh.n_nodes, dtype=bool)
    referenced[elems.ravel()] = True
    if not referenced.all():
        raise MeshError(f"{np.count_nonzero(~referenced)} nodes are unreferenced")
    for e, row in enumerate(elems):
        if len(set(row.tolist())) != len(row):
            raise MeshError(f"element {e} repeats a node index")

    directed = _corner_edges(elems)
    keys = {}
    for idx, (a, b) in enumerate(map(tuple, directed)):
        keys.setdefault((min(a, b), max(a, b)), []).append(idx)
    for (a, b), hits in keys.items():
        if len(hits) != 2:
            raise MeshError(
                f"edge ({a},{b}) shared by {len(hits)} elements, expected 2"
            )
        d0, d1 = directed[hits[0]], directed[hits[1]]
        if tuple(d0) != (d1[1], d1[0]):
            raise MeshError(f"edge ({a},{b}) traversed twice in the same direction")
        if k > 1:
            n0 = _edge_interior(elems, hits[0], k)
            n1 = _edge_interior(elems, hits[1], k)
            if not np.array_equal(n0, n1[::-1]):
                raise MeshError(f"edge ({a},{b}) interior nodes not shared")


def _edge_interior(elements, directed_index, k):
    """Edge-interior node ids of one directed corner edge occurrence."""
    e, m = divmod(directed_index, 3)
    lo = 3 + m * (k - 1)
    return elements[e, lo : lo + (k - 1)]


def mesh_width(mesh: SurfaceMesh) -> float:
    """Maximal vertex-pair diameter over all elements."""
    v = mesh.nodes[mesh.elements[:, :3]]
    d01 = np.linalg.norm(v[:, 0] - v[:, 1], axis=1)
    d12 = np.linalg.norm(v[:, 1] - v[:, 2], axis=1)
    d20 = np.linalg.norm(v[:, 2] - v[:, 0], axis=1)
    return float(np.max(np.stack([d01, d12, d20])))


# ---------------------------------------------------------------------------
# flat base meshes

_ICO_T = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array(
    [
        [-1, _ICO_T, 0], [1, _ICO_T, 0], [-1, -_ICO_T, 0], [1, -_ICO_T, 0],
        [0, -1, _ICO_T], [0, 1, _ICO_T], [0, -1, -_ICO_T], [0, 1, -_ICO_T],
        [_ICO_T, 0, -1], [_ICO_T, 0, 1], [-_ICO_T, 0, -1], [-_ICO_T, 0, 1],
    ],
    dtype=float,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [5, 4, 9], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


def _unit_icosahedron():
    verts = _ICO_VERTS / np.linalg.norm(_ICO_VERTS[0])
    faces = orient_outward(verts, _ICO_FACES.copy())
    return verts, faces


def _subdivide(verts, faces):
    """One 4-to-1 subdivision; midpoints pushed to the unit sphere."""
    verts = list(map(tuple, verts))
    cache = {}

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            p = 0.5 * (np.array(verts[a]) + np.array(verts[b]))
            p /= np.linalg.norm(p)
            cache[key] = len(verts)
            verts.append(tuple(p))
        return cache[key]

    new_faces = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.array(verts), np.array(new_faces, dtype=np.int64)


def signed_volume(verts, faces) -> float:
    v = verts[faces]
    return float(np.einsum("fi,fi->", v[:, 0], np.cross(v[:, 1], v[:, 2])) / 6.0)


def orient_outward(verts, faces):
    """Make face orientation globally consistent and outward (positive
    enclosed volume).  Faces are reoriented in place via edge adjacency."""
    faces = np.asarray(faces, dtype=np.int64).copy()
    edge_owner = {}
    for f, (a, b, c) in enumerate(faces):
        for u, v in ((a, b), (b, c), (c, a)):
            edge_owner.setdefault((min(u, v), max(u, v)), []).append(f)
    visited = np.zeros(len(faces), dtype=bool)
    for seed in range(len(faces)):
        if visited[seed]:
            continue
        stack = [seed]
        visited[seed] = True
        while stack:
            f = stack.pop()
            a, b, c = faces[f]
            for u, v in ((a, b), (b, c), (c, a)):
                for g in edge_owner[(min(u, v), max(u, v))]:
                    if g == f or visited[g]:
                        continue
                    gs = faces[g]
                    directed = [(gs[0], gs[1]), (gs[1], gs[2]), (gs[2], gs[0])]
                    if (u, v) in directed:  # same direction: flip neighbour
                        faces[g] = gs[::-1]
                    visited[g] = True
                    stack.append(g)
    if signed_volume(verts, faces) < 0.0:
        faces = faces[:, ::-1]
    return faces


# ---------------------------------------------------------------------------
# degree elevation

def _elevate_connectivity(verts, faces, k):
    """Insert shared edge nodes and per-element interior nodes by linear
    interpolation on each flat triangle.  Returns (nodes, elements)."""
    n_base = len(verts)
    nodes = [np.asarray(p, dtype=float) for p in verts]
    edge_nodes = {}

    def nodes_on_edge(a, b):
        key = (min(a, b), max(a, b))
        if key not in edge_nodes:
            pa, pb = nodes[key[0]], nodes[key[1]]
            ids = []
            for i in range(1, k):
                ids.append(len(nodes))
                nodes.append(pa + (pb - pa) * (i / k))
            edge_nodes[key] = ids
        ids = edge_nodes[key]
        return ids if a < b else ids[::-1]

    ref = reference_nodes(k)
    interior_ref = ref[3 + 3 * (k - 1):]
    elements = []
    for a, b, c in faces:
        row = [a, b, c]
        for u, v in ((a, b), (b, c), (c, a)):
            row += nodes_on_edge(u, v)
        pa, pb, pc = nodes[a], nodes[b], nodes[c]
        for x, y in interior_ref:
            row.append(len(nodes))
            nodes.append(pa * (1 - x - y) + pb * x + pc * y)
        elements.append(row)
    assert len(nodes) == n_base + len(edge_nodes) * (k - 1) + len(faces) * len(
        interior_ref
    )
    return np.array(nodes), np.array(elements, dtype=np.int64)


def newton_project(surface: ImplicitSurface, points: np.ndarray,
                   tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
    """Project points onto {phi = 0} along grad(phi).

    Rejects any point whose iteration has not reached |phi| <= tol after
    max_iter steps.
    """
    p = np.array(points, dtype=float)
    for _ in range(max_iter):
        val = surface.value(p)
        active = np.abs(val) > tol
        if not active.any():
            return p
        g = surface.grad(p[active])
        g2 = np.einsum("ni,ni->n", g, g)
        if np.any(g2 < 1e-24):
            bad = int(np.flatnonzero(active)[np.argmin(g2)])
            raise ProjectionError(f"vanishing level-set gradient at node {bad}")
        p[active] -= (val[active] / g2)[:, None] * g
    bad = int(np.argmax(np.abs(surface.value(p))))
    raise ProjectionError(
        f"node {bad} not projected after {max_iter} iterations, "
        f"|phi| = {abs(surface.value(p)[bad]):.3e}"
    )


# ---------------------------------------------------------------------------
# constructors

def builtin_sphere(radius: float, refinement: int, degree: int) -> SurfaceMesh:
    """Icosahedron-based sphere mesh; every node lies on the sphere."""
    if radius <= 0:
        raise MeshError("radius must be positive")
    verts, faces = _unit_icosahedron()
    for _ in range(refinement):
        verts, faces = _subdivide(verts, faces)
    nodes, elements = _elevate_connectivity(verts, faces, degree)
    nodes *= radius / np.linalg.norm(nodes, axis=1)[:, None]
    mesh = SurfaceMesh(degree, nodes, elements)
    validate(mesh)
    return mesh


def builtin_ellipsoid(a: float, b: float, c: float, refinement: int,
                      degree: int) -> SurfaceMesh:
    """Affine image of the unit sphere mesh; nodes lie on the ellipsoid."""
    unit = builtin_sphere(1.0, refinement, degree)
    return unit.with_nodes(unit.nodes * np.array([a, b, c]))


def builtin_implicit(surface: ImplicitSurface, base_mesh: SurfaceMesh,
                     degree: int) -> SurfaceMesh:
    """Degree-k mesh with every node Newton-projected onto {phi = 0}.

    The base mesh supplies the topology (and must be degree 1 with nodes
    near the zero level set)."""
    if base_mesh.degree != 1:
        raise MeshError("base mesh must have degree 1")
    nodes, elements = _elevate_connectivity(
        base_mesh.nodes, base_mesh.elements, degree
    )
    mesh = SurfaceMesh(degree, newton_project(surface, nodes), elements)
    validate(mesh)
    return mesh


def elevate_degree(mesh: SurfaceMesh, degree: int,
                   levelset: ImplicitSurface | None = None) -> SurfaceMesh:
    """Insert edge/interior Lagrange nodes into a flat (degree-1) mesh.

    Without a level set the new nodes are placed by linear interpolation;
    with one, all nodes are projected onto its zero set.
    """
    if mesh.degree != 1:
        raise MeshError("degree elevation starts from a degree-1 mesh")
    if degree == 1 and levelset is None:
        return mesh
    nodes, elements = _elevate_connectivity(mesh.nodes, mesh.elements, degree)
    if levelset is not None:
        nodes = newton_project(levelset, nodes)
    out = SurfaceMesh(degree, nodes, elements)
    validate(out)
    return out


def marching_cubes_base(surface: ImplicitSurface, resolution: int = 48,
                        half_width: float = 1.6) -> SurfaceMesh:
    """Flat triangulation of {phi = 0} extracted from a sampled grid.

    Provides base topology for implicit presets whose genus rules out a
    sphere base (the nodes are only grid-accurate; project afterwards).
    """
    from skimage import measure

    ax = np.linspace(-half_width, half_width, resolution)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    vol = surface.value(pts).reshape(X.shape)
    spacing = (ax[1] - ax[0],) * 3
    verts, faces, _, _ = measure.marching_cubes(vol, level=0.0, spacing=spacing)
    verts = verts - half_width
    used = np.unique(faces)
    remap = np.full(len(verts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    faces = orient_outward(verts[used], remap[faces])
    mesh = SurfaceMesh(1, verts[used], faces)
    validate(mesh)
    return mesh


def dumbbell_mesh(degree: int, refinement: int = 3) -> SurfaceMesh:
    """Non-convex dumbbell preset; sphere topology, projected nodes."""
    from .geometry import Dumbbell

    base = builtin_sphere(0.9, refinement, 1)
    return builtin_implicit(Dumbbell(), base, degree)


def genus5_mesh(degree: int, resolution: int = 48) -> SurfaceMesh:
    from .geometry import Genus5

    surf = Genus5()
    base = marching_cubes_base(surf, resolution=resolution, half_width=1.8)
    return builtin_implicit(surf, base, degree)


# ---------------------------------------------------------------------------
# OFF import / legacy VTK export

def import_off(path) -> SurfaceMesh:
    """Read an ASCII OFF triangle mesh as a degree-1 surface."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.readlines()

    def stripped(i):
        return lines[i].split("#", 1)[0].strip()

    idx = 0
    while idx < len(lines) and not stripped(idx):
        idx += 1
    if idx >= len(lines):
        raise MeshError(f"{path}: empty file")
    header = stripped(idx)
    if header == "OFF":
        idx += 1
    while idx < len(lines) and not stripped(idx):
        idx += 1
    try:
        nv, nf, _ = (int(t) for t in stripped(idx).split())
    except ValueError:
        raise MeshError(f"{path}:{idx + 1}: malformed counts line") from None
    idx += 1
    verts, faces = [], []
    for i in range(nv):
        try:
            verts.append([float(t) for t in stripped(idx + i).split()[:3]])
        except (ValueError, IndexError):
            raise MeshError(f"{path}:{idx + i + 1}: malformed vertex line") from None
    idx += nv
    for i in range(nf):
        try:
            row = [int(t) for t in stripped(idx + i).split()]
        except (ValueError, IndexError):
            raise MeshError(f"{path}:{idx + i + 1}: malformed face line") from None
        if not row or row[0] != 3 or len(row) < 4:
            raise MeshError(f"{path}:{idx + i + 1}: only triangles are supported")
        faces.append(row[1:4])
    mesh = SurfaceMesh(1, np.array(verts), np.array(faces, dtype=np.int64))
    validate(mesh)
    return mesh


_VTK_CELL_TYPE = {1: 5, 2: 22}  # linear and quadratic triangles


def export_vtk(mesh: SurfaceMesh, fields: dict, path) -> None:
    """Write a legacy ASCII VTK unstructured grid with nodal point data.

    fields maps names to arrays of shape (N,) or (N, 3).
    """
    if mesh.degree not in _VTK_CELL_TYPE:
        raise MeshError("VTK export supports degree 1 and 2 meshes only")
    n_loc = mesh.elements.shape[1]
    out = []
    out.append("# vtk DataFile Version 3.0\n")
    out.append("gmcflow surface\n")
    out.append("ASCII\n")
    out.append("DATASET UNSTRUCTURED_GRID\n")
    out.append(f"POINTS {mesh.n_nodes} double\n")
    for p in mesh.nodes:
        out.append(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
    out.append(f"CELLS {mesh.n_elements} {mesh.n_elements * (n_loc + 1)}\n")
    for row in mesh.elements:
        out.append(f"{n_loc} " + " ".join(str(i) for i in row) + "\n")
    out.append(f"CELL_TYPES {mesh.n_elements}\n")
    out.extend(f"{_VTK_CELL_TYPE[mesh.degree]}\n" for _ in range(mesh.n_elements))
    if fields:
        out.append(f"POINT_DATA {mesh.n_nodes}\n")
        for name, data in fields.items():
            data = np.asarray(data, dtype=float)
            if data.shape == (mesh.n_nodes,):
                out.append(f"SCALARS {name} double 1\n")
                out.append("LOOKUP_TABLE default\n")
                out.extend(f"{v:.17g}\n" for v in data)
            elif data.shape == (mesh.n_nodes, 3):
                out.append(f"VECTORS {name} double\n")
                out.extend(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n" for v in data)
            else:
                raise MeshError(f"field '{name}' has shape {data.shape}")
    with open(path, "w", encoding="ascii") as fh:
        fh.writelines(out)


def read_vtk_points(path) -> np.ndarray:
    """Read back the POINTS block of a legacy ASCII VTK file."""
    with open(path, "r", encoding="ascii") as fh:
        tokens = fh.read().split()
    try:
        at = tokens.index("POINTS")
        n = int(tokens[at + 1])
        vals = [float(t) for t in tokens[at + 3 : at + 3 + 3 * n]]
    except (ValueError, IndexError):
        raise MeshError(f"{path}: no parsable POINTS block") from None
    return np.array(vals).reshape(n, 3)
