"""Uniform quadrilateral / hexahedral meshes of the unit square / cube and WG dof maps."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """Uniform axis-aligned mesh of ``[0, 1]^dim`` with ``n`` cells per axis.

    Elements are numbered lexicographically with the first axis fastest.
    Facets are grouped by normal axis; within an axis group the facet index
    runs lexicographically over (position along the normal, remaining axes).
    Every facet normal is the positive unit vector of its axis, i.e. it points
    from the lower-index element to the higher-index one.

    ``elem_facets[e, 2*a]`` is the facet on the low side of element ``e`` along
    axis ``a``, ``elem_facets[e, 2*a + 1]`` the one on the high side.
    """

    dim: int
    n: int
    centroids: np.ndarray        # (n_elements, dim)
    facet_midpoints: np.ndarray  # (n_facets, dim)
    facet_axis: np.ndarray       # (n_facets,) normal axis of each facet
    facet_elements: np.ndarray   # (n_facets, 2) [lower, upper], -1 when absent
    elem_facets: np.ndarray      # (n_elements, 2*dim)
    boundary: np.ndarray = field(repr=False)  # (n_facets,) bool

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def n_elements(self) -> int:
        return self.centroids.shape[0]

    @property
    def n_facets(self) -> int:
        return self.facet_midpoints.shape[0]

    @property
    def element_volume(self) -> float:
        return self.h ** self.dim

    @property
    def facet_measure(self) -> float:
        return self.h ** (self.dim - 1)

    def facet_normals(self) -> np.ndarray:
        return np.eye(self.dim)[self.facet_axis]


def build_mesh(n: int, dim: int) -> Mesh:
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim!r}")
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    h = 1.0 / n

    # lexicographic, first axis fastest
    idx = np.array(list(product(range(n), repeat=dim)))[:, ::-1]
    centroids = (idx + 0.5) * h
    strides = n ** np.arange(dim)

    def elem_id(multi):
        return multi @ strides

    midpoints, axes, adjacent = [], [], []
    facet_offset = []
    offset = 0
    per_axis = (n + 1) * n ** (dim - 1)
    for a in range(dim):
        facet_offset.append(offset)
        shape = [n] * dim
        shape[a] = n + 1
        fidx = np.array(list(product(*[range(s) for s in shape[::-1]])))[:, ::-1]
        mid = (fidx + 0.5) * h
        mid[:, a] = fidx[:, a] * h
        lower = fidx.copy()
        lower[:, a] -= 1
        upper = fidx.copy()
        lo_ok = lower[:, a] >= 0
        up_ok = upper[:, a] < n
        lo = np.where(lo_ok, elem_id(np.where(lo_ok[:, None], lower, 0)), -1)
        up = np.where(up_ok, elem_id(np.where(up_ok[:, None], upper, 0)), -1)
        midpoints.append(mid)
        axes.append(np.full(per_axis, a))
        adjacent.append(np.stack([lo, up], axis=1))
        offset += per_axis

    facet_midpoints = np.concatenate(midpoints)
    facet_axis = np.concatenate(axes)
    facet_elements = np.concatenate(adjacent)
    boundary = (facet_elements < 0).any(axis=1)

    # facet index of the low-side facet of each element along axis a
    elem_facets = np.empty((n ** dim, 2 * dim), dtype=np.int64)
    for a in range(dim):
        shape = [n] * dim
        shape[a] = n + 1
        fstrides = np.cumprod([1] + shape[:-1])
        low = facet_offset[a] + idx @ fstrides
        elem_facets[:, 2 * a] = low
        elem_facets[:, 2 * a + 1] = low + fstrides[a]

    for arr in (centroids, facet_midpoints, facet_axis, facet_elements, elem_facets, boundary):
        arr.flags.writeable = False
    return Mesh(dim, n, centroids, facet_midpoints, facet_axis, facet_elements,
                elem_facets, boundary)


@dataclass(frozen=True)
class DofMap:
    """Numbering of WG scalar/vector degrees of freedom.

    Full numbering: all element-interior dofs first, then all facet dofs in
    facet order; vector fields interleave components (``d*k + c``). Free
    numbering drops the boundary-facet dofs, so it is again interior-first.
    """

    mesh: Mesh
    free_facets: np.ndarray      # facet ids of interior facets, ascending
    facet_to_free: np.ndarray    # facet id -> position among free facets, -1 on boundary

    @property
    def n_interior(self) -> int:
        return self.mesh.n_elements

    @property
    def n_free_facets(self) -> int:
        return self.free_facets.size

    @property
    def n_scalar_full(self) -> int:
        return self.mesh.n_elements + self.mesh.n_facets

    @property
    def n_scalar_free(self) -> int:
        return self.n_interior + self.n_free_facets

    @property
    def n_vector_full(self) -> int:
        return self.mesh.dim * self.n_scalar_full

    @property
    def n_vector_free(self) -> int:
        return self.mesh.dim * self.n_scalar_free

    def scalar_free(self) -> np.ndarray:
        """Full-numbering indices of the free scalar dofs (in free order)."""
        return np.concatenate([np.arange(self.n_interior),
                               self.n_interior + self.free_facets])

    def scalar_constrained(self) -> np.ndarray:
        return self.n_interior + np.flatnonzero(self.mesh.boundary)

    def vector_free(self) -> np.ndarray:
        d = self.mesh.dim
        return (d * self.scalar_free()[:, None] + np.arange(d)).ravel()

    def vector_constrained(self) -> np.ndarray:
        d = self.mesh.dim
        return (d * self.scalar_constrained()[:, None] + np.arange(d)).ravel()

    def scalar_local(self) -> np.ndarray:
        """(n_elements, 1 + 2*dim) full scalar dof indices: interior, then facets."""
        m = self.mesh
        return np.concatenate([np.arange(m.n_elements)[:, None],
                               m.n_elements + m.elem_facets], axis=1)

    def vector_local(self) -> np.ndarray:
        """(n_elements, dim*(1 + 2*dim)), ordered local scalar dof major, component minor."""
        d = self.mesh.dim
        s = self.scalar_local()
        return (d * s[:, :, None] + np.arange(d)).reshape(s.shape[0], -1)

    @property
    def pressure_interior(self) -> slice:
        return slice(0, self.n_interior)

    @property
    def pressure_facet(self) -> slice:
        return slice(self.n_interior, self.n_scalar_free)


def build_dof_maps(mesh: Mesh) -> DofMap:
    free_facets = np.flatnonzero(~mesh.boundary)
    facet_to_free = np.full(mesh.n_facets, -1, dtype=np.int64)
    facet_to_free[free_facets] = np.arange(free_facets.size)
    return DofMap(mesh, free_facets, facet_to_free)
