"""Structured triangulations of a rectangle and two-subdomain splits.

Nodes are numbered row by row (x fastest).  Every grid cell is cut along
its lower-left to upper-right diagonal, so two meshes built with the same
arguments are identical.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

_GRID_TOL = 1e-9


class NodeClass(enum.IntEnum):
    EXTERIOR = 0
    INTERIOR1 = 1
    INTERIOR2 = 2
    INTERFACE = 3


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray      # (N, 2) coordinates
    triangles: np.ndarray  # (T, 3) node indices, counterclockwise
    h: float
    width: float
    height: float

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def boundary_mask(self) -> np.ndarray:
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        tol = _GRID_TOL * max(self.width, self.height)
        return ((np.abs(x) < tol) | (np.abs(x - self.width) < tol)
                | (np.abs(y) < tol) | (np.abs(y - self.height) < tol))


def _grid_count(length: float, h: float, name: str) -> int:
    ratio = length / h
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > _GRID_TOL:
        raise ValueError(f"{name}={length!r} is not an integer multiple of h={h!r}")
    return n


def build_rect_mesh(width: float, height: float, h: float) -> Mesh:
    """Triangulate ``[0, width] x [0, height]`` with a uniform grid of width ``h``."""
    if width <= 0 or height <= 0 or h <= 0:
        raise ValueError("width, height and h must be positive")
    nx = _grid_count(width, h, "width")
    ny = _grid_count(height, h, "height")

    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    # interleave so each cell's two triangles are adjacent
    triangles = np.empty((2 * len(v00), 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh(nodes, triangles, float(h), float(width), float(height))


def check_mesh(mesh: Mesh) -> None:
    """Raise ``ValueError`` if the mesh is not a conforming tiling of its rectangle."""
    areas = mesh.signed_areas()
    if np.any(areas <= 0):
        raise ValueError("mesh has triangles with non-positive signed area")
    total = mesh.width * mesh.height
    if abs(areas.sum() - total) > 1e-12 * total:
        raise ValueError("triangle areas do not sum to the rectangle area")

    tri = mesh.triangles
    edges = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise ValueError("an edge is shared by more than two triangles")
    mid = mesh.nodes[uniq].mean(axis=1)
    tol = _GRID_TOL * max(mesh.width, mesh.height)
    on_boundary = ((np.abs(mid[:, 0]) < tol) | (np.abs(mid[:, 0] - mesh.width) < tol)
                   | (np.abs(mid[:, 1]) < tol) | (np.abs(mid[:, 1] - mesh.height) < tol))
    if np.any(counts[~on_boundary] != 2) or np.any(counts[on_boundary] != 1):
        raise ValueError("mesh is not conforming")


def dump_mesh(mesh: Mesh, path) -> None:
    """Write a plain-text node listing followed by a triangle listing."""
    with open(path, "w") as fh:
        fh.write(f"# nodes {mesh.n_nodes}\n")
        for x, y in mesh.nodes:
            fh.write(f"{x!r} {y!r}\n")
        fh.write(f"# triangles {mesh.n_triangles}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")


class DofSet:
    """A set of unknowns (mesh nodes, in a fixed local order) over a set of triangles.

    Nodes of the triangles that are not in ``nodes`` carry the homogeneous
    Dirichlet value zero.  ``cache`` holds matrices and factorizations that
    depend only on the geometry.
    """

    def __init__(self, mesh: Mesh, triangle_ids: np.ndarray, nodes: np.ndarray):
        self.mesh = mesh
        self.triangle_ids = np.asarray(triangle_ids, dtype=np.int64)
        self.nodes = np.asarray(nodes, dtype=np.int64)
        self.cache: dict = {}

    def __len__(self) -> int:
        return len(self.nodes)

    @cached_property
    def local_index(self) -> np.ndarray:
        """Global node -> local dof position, -1 for nodes outside the set."""
        loc = np.full(self.mesh.n_nodes, -1, dtype=np.int64)
        loc[self.nodes] = np.arange(len(self.nodes))
        return loc

    @cached_property
    def triangles(self) -> np.ndarray:
        return self.mesh.triangles[self.triangle_ids]

    @cached_property
    def triangle_dofs(self) -> np.ndarray:
        """(T, 3) local dof index per triangle vertex, -1 where the value is pinned to 0."""
        return self.local_index[self.triangles]


@dataclass(frozen=True, eq=False)
class Decomposition:
    mesh: Mesh
    subdomain_of_triangle: np.ndarray  # values in {1, 2}
    node_class: np.ndarray             # NodeClass values
    interface_dofs: np.ndarray
    interior_dofs: tuple               # (interior of 1, interior of 2)
    trace_index: tuple = field(init=False)

    def __post_init__(self):
        # subdomain-local order is interior dofs followed by interface dofs
        idx = tuple(np.arange(len(self.interior_dofs[k]), len(self.interior_dofs[k]) + self.n_interface)
                    for k in range(2))
        object.__setattr__(self, "trace_index", idx)
        object.__setattr__(self, "_dofsets", {})

    @property
    def n_interface(self) -> int:
        return len(self.interface_dofs)

    def n_local(self, i: int) -> int:
        return len(self.interior_dofs[i - 1]) + self.n_interface

    def n_interior(self, i: int) -> int:
        return len(self.interior_dofs[i - 1])

    def subdomain_dofs(self, i: int) -> DofSet:
        _check_subdomain(i)
        cache = self._dofsets
        if i not in cache:
            tris = np.flatnonzero(self.subdomain_of_triangle == i)
            nodes = np.concatenate([self.interior_dofs[i - 1], self.interface_dofs])
            cache[i] = DofSet(self.mesh, tris, nodes)
        return cache[i]

    def global_dofs(self) -> DofSet:
        """All non-exterior nodes over the whole mesh."""
        cache = self._dofsets
        if "global" not in cache:
            nodes = np.flatnonzero(self.node_class != NodeClass.EXTERIOR)
            cache["global"] = DofSet(self.mesh, np.arange(self.mesh.n_triangles), nodes)
        return cache["global"]

    def restrict(self, i: int, u_global: np.ndarray) -> np.ndarray:
        """Subdomain field of a field given over ``global_dofs()``."""
        g = self.global_dofs()
        return np.asarray(u_global)[g.local_index[self.subdomain_dofs(i).nodes]]


def _check_subdomain(i: int) -> None:
    if i not in (1, 2):
        raise ValueError(f"subdomain id must be 1 or 2, got {i!r}")


def decompose(mesh: Mesh, tags: np.ndarray) -> Decomposition:
    """Build a two-subdomain decomposition from per-triangle tags in {1, 2}."""
    tags = np.asarray(tags, dtype=np.int64)
    if tags.shape != (mesh.n_triangles,) or not np.all((tags == 1) | (tags == 2)):
        raise ValueError("triangle tags must be 1 or 2, one per triangle")
    if not (np.any(tags == 1) and np.any(tags == 2)):
        raise ValueError("both subdomains must be non-empty")

    touches = np.zeros((mesh.n_nodes, 2), dtype=bool)
    for k in (1, 2):
        touches[mesh.triangles[tags == k].ravel(), k - 1] = True

    node_class = np.full(mesh.n_nodes, NodeClass.EXTERIOR, dtype=np.int64)
    inner = ~mesh.boundary_mask()
    node_class[inner & touches[:, 0] & ~touches[:, 1]] = NodeClass.INTERIOR1
    node_class[inner & touches[:, 1] & ~touches[:, 0]] = NodeClass.INTERIOR2
    node_class[inner & touches[:, 0] & touches[:, 1]] = NodeClass.INTERFACE

    iface = np.flatnonzero(node_class == NodeClass.INTERFACE)
    order = np.lexsort((mesh.nodes[iface, 0], mesh.nodes[iface, 1]))
    iface = iface[order]
    if len(iface) == 0:
        raise ValueError("decomposition has no interface degrees of freedom")
    int1 = np.flatnonzero(node_class == NodeClass.INTERIOR1)
    int2 = np.flatnonzero(node_class == NodeClass.INTERIOR2)
    return Decomposition(mesh, tags, node_class, iface, (int1, int2))


def _check_grid_line(value: float, h: float, upper: float, name: str) -> None:
    if not 0 < value < upper:
        raise ValueError(f"{name}={value!r} must lie strictly inside (0, {upper!r})")
    ratio = value / h
    if abs(ratio - round(ratio)) > _GRID_TOL:
        raise ValueError(f"{name}={value!r} is not a grid line for h={h!r}")


def decompose_vertical(mesh: Mesh, x_split: float) -> Decomposition:
    """Split along the vertical grid line ``x = x_split``; subdomain 1 is on the left."""
    _check_grid_line(x_split, mesh.h, mesh.width, "x_split")
    return decompose(mesh, np.where(mesh.centroids()[:, 0] < x_split, 1, 2))


def decompose_lshape(mesh: Mesh, x_low: float | None = None, x_high: float | None = None,
                     y_mid: float | None = None) -> Decomposition:
    """Split into two L-shaped subdomains along a staircase interface.

    Subdomain 1 is ``[0, x_high] x [0, y_mid]`` joined with ``[0, x_low] x [y_mid, H]``.
    Defaults put the steps at thirds of the width and half the height.
    """
    x_low = mesh.width / 3 if x_low is None else x_low
    x_high = 2 * mesh.width / 3 if x_high is None else x_high
    y_mid = mesh.height / 2 if y_mid is None else y_mid
    for name, val, upper in (("x_low", x_low, mesh.width), ("x_high", x_high, mesh.width),
                             ("y_mid", y_mid, mesh.height)):
        _check_grid_line(val, mesh.h, upper, name)
    if not x_low < x_high:
        raise ValueError("x_low must be smaller than x_high")
    c = mesh.centroids()
    in1 = np.where(c[:, 1] < y_mid, c[:, 0] < x_high, c[:, 0] < x_low)
    return decompose(mesh, np.where(in1, 1, 2))


def trace(decomp: Decomposition, i: int, u_i: np.ndarray) -> np.ndarray:
    """Interface values of a subdomain field, in interface order."""
    _check_subdomain(i)
    u_i = np.asarray(u_i, dtype=float)
    if u_i.shape != (decomp.n_local(i),):
        raise ValueError(f"field for subdomain {i} must have length {decomp.n_local(i)}, got {u_i.shape}")
    return u_i[decomp.trace_index[i - 1]].copy()


def extension_by_zero(decomp: Decomposition, i: int, eta: np.ndarray) -> np.ndarray:
    """Subdomain field equal to ``eta`` on the interface and zero at interior nodes."""
    _check_subdomain(i)
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (decomp.n_interface,):
        raise ValueError(f"interface vector must have length {decomp.n_interface}, got {eta.shape}")
    u = np.zeros(decomp.n_local(i))
    u[decomp.trace_index[i - 1]] = eta
    return u

