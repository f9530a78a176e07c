"""Problem instances: rest mesh, initial map, locks and per-corner precomputation.

The optimization variables are the map-space vertex positions, stored as a
flat vector U of length d * #V (vertex-major: x0, y0, [z0,] x1, ...).  Every
triangle or tetrahedron contributes one corner simplex; every quad contributes
four (one per corner, built from the corner vertex and its two neighbours).
A corner simplex carries the shape matrix of its target element, an
integration weight, and the constant matrix that maps stacked vertex
positions to the Jacobian of the affine map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Edge length 1 equilateral triangle / regular tetrahedron, first vertex at
# the origin.  Columns are the edge vectors from vertex 0.
_REGULAR_SHAPE = {
    2: np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]]),
    3: np.array(
        [
            [1.0, 0.5, 0.5],
            [0.0, math.sqrt(3.0) / 2.0, math.sqrt(3.0) / 6.0],
            [0.0, 0.0, math.sqrt(6.0) / 3.0],
        ]
    ),
}

SIMPLEX = "simplex"
QUAD = "quad"

# Fraction of the corner-triangle volume that enters a quad corner's weight.
# Summing (1/2) * det(S_corner)/2 over the four corners of a planar quad
# reproduces the quad area exactly, which is what the corner-sampled
# (trapezoidal) quadrature must do for constant integrands.
QUAD_CORNER_FRACTION = 0.5


class MeshError(ValueError):
    """Invalid mesh data (bad connectivity, orientation, lock table...)."""


class InstanceError(ValueError):
    """A problem instance could not be built from an otherwise valid mesh."""


@dataclass
class MeshPair:
    """Rest-domain geometry plus the initial map: one untangling problem.

    dimension   : 2 or 3
    rest_vertices : (#V, d) rest-space coordinates
    elements    : list of vertex-index tuples (3 for triangles, 4 for quads
                  and tetrahedra)
    element_kinds : "simplex" or "quad" per element; quads only for d == 2
    locked      : (#V,) bool, True for pinned vertices
    initial_map : (#V, d) map-space coordinates
    """

    dimension: int
    rest_vertices: np.ndarray
    elements: list[tuple[int, ...]]
    element_kinds: list[str]
    locked: np.ndarray
    initial_map: np.ndarray

    def __post_init__(self):
        self.rest_vertices = np.ascontiguousarray(self.rest_vertices, dtype=float)
        self.initial_map = np.ascontiguousarray(self.initial_map, dtype=float)
        self.locked = np.asarray(self.locked, dtype=bool)
        self.validate()

    @property
    def n_vertices(self) -> int:
        return self.rest_vertices.shape[0]

    @property
    def free_boundary(self) -> bool:
        """True when fewer than d vertices are locked (rigid motions possible)."""
        return int(self.locked.sum()) < self.dimension

    def validate(self) -> None:
        d = self.dimension
        if d not in (2, 3):
            raise MeshError(f"dimension must be 2 or 3, got {d}")
        nv = self.rest_vertices.shape[0]
        if self.rest_vertices.shape != (nv, d):
            raise MeshError(f"rest_vertices must be (#V, {d})")
        if self.initial_map.shape != (nv, d):
            raise MeshError("initial_map shape differs from rest_vertices")
        if self.locked.shape != (nv,):
            raise MeshError("locked must be one flag per vertex")
        if len(self.elements) != len(self.element_kinds):
            raise MeshError("elements and element_kinds length mismatch")
        for t, (elem, kind) in enumerate(zip(self.elements, self.element_kinds)):
            if kind == SIMPLEX:
                want = d + 1
            elif kind == QUAD:
                if d != 2:
                    raise MeshError(f"element {t}: quads are only valid in 2D")
                want = 4
            else:
                raise MeshError(f"element {t}: unknown kind {kind!r}")
            if len(elem) != want:
                raise MeshError(f"element {t}: expected {want} vertices, got {len(elem)}")
            if len(set(elem)) != len(elem):
                raise MeshError(f"element {t}: repeated vertex index")
            for v in elem:
                if not (0 <= v < nv):
                    raise MeshError(f"element {t}: vertex index {v} out of range")

    def initial_state(self) -> "MapState":
        return MapState(U=self.initial_map.reshape(-1).copy())

    def bbox_diagonal(self) -> float:
        span = self.rest_vertices.max(axis=0) - self.rest_vertices.min(axis=0)
        return float(np.linalg.norm(span))


@dataclass
class MapState:
    """Current map-space positions as a flat vector, plus loop bookkeeping."""

    U: np.ndarray
    k: int = 0
    eps: float = 0.0

    def positions(self, d: int) -> np.ndarray:
        return self.U.reshape(-1, d)


@dataclass
class CornerSimplex:
    """One quadrature site: a (d+1)-vertex simplex with its target shape.

    shape_matrix : d x d, columns are target edge vectors from corner 0,
                   det > 0
    weight       : quadrature_fraction * det(shape_matrix) / d!
    grad_matrix  : (d+1) x d constant matrix Z with J = (u_0 ... u_d) Z;
                   rows sum to zero (translation invariance)
    """

    element_id: int
    corner_id: int
    vertex_ids: tuple[int, ...]
    shape_matrix: np.ndarray
    weight: float
    grad_matrix: np.ndarray


def _grad_matrix(shape_matrix: np.ndarray) -> np.ndarray:
    d = shape_matrix.shape[0]
    top = np.vstack([-np.ones((1, d)), np.eye(d)])
    return top @ np.linalg.inv(shape_matrix)


def _simplex_edges(points: np.ndarray) -> np.ndarray:
    """Columns of edge vectors from vertex 0; points is ((d+1), d)."""
    return (points[1:] - points[0]).T


class Instance:
    """Immutable per-corner precomputation for one MeshPair.

    Iterable / indexable as a sequence of CornerSimplex; also carries packed
    arrays used by the vectorized evaluation paths:

    vert_ids : (n_corners, d+1) int
    grads    : (n_corners, d+1, d) stacked grad matrices
    weights  : (n_corners,)
    """

    def __init__(self, mesh: MeshPair, corners: list[CornerSimplex]):
        self.mesh = mesh
        self.d = mesh.dimension
        self.corners = corners
        self.vert_ids = np.array([c.vertex_ids for c in corners], dtype=np.int64)
        self.grads = np.array([c.grad_matrix for c in corners])
        self.weights = np.array([c.weight for c in corners])
        self.element_ids = np.array([c.element_id for c in corners], dtype=np.int64)
        self.free_vertices = np.flatnonzero(~mesh.locked)
        free = np.repeat(~mesh.locked, self.d)
        self.free_dofs = np.flatnonzero(free)

    def __len__(self) -> int:
        return len(self.corners)

    def __iter__(self):
        return iter(self.corners)

    def __getitem__(self, i: int) -> CornerSimplex:
        return self.corners[i]

    @property
    def n_corners(self) -> int:
        return len(self.corners)


def _corner_for_simplex(mesh, t, elem, policy, det_tol):
    pts = mesh.rest_vertices[list(elem)]
    d = mesh.dimension
    if policy == "regular":
        shape = _REGULAR_SHAPE[d].copy()
    else:
        shape = _simplex_edges(pts)
        det = float(np.linalg.det(shape))
        if abs(det) < det_tol:
            raise InstanceError(f"element {t}: degenerate rest shape (|det| = {abs(det):.3e})")
        if det < 0.0:
            # Mirror the target, never the map: swap target vertices 1 and 2.
            shape[:, [0, 1]] = shape[:, [1, 0]]
    det = float(np.linalg.det(shape))
    if det < det_tol:
        raise InstanceError(f"element {t}: degenerate target shape (det = {det:.3e})")
    w = det / math.factorial(d)
    return CornerSimplex(
        element_id=t,
        corner_id=0,
        vertex_ids=tuple(elem),
        shape_matrix=shape,
        weight=w,
        grad_matrix=_grad_matrix(shape),
    )


def _corners_for_quad(mesh, t, elem, policy, det_tol):
    corners = []
    pts = mesh.rest_vertices[list(elem)]
    for c in range(4):
        ids = (elem[c], elem[(c + 1) % 4], elem[(c + 3) % 4])
        if policy == "regular":
            shape = np.eye(2)
        else:
            nxt = pts[(c + 1) % 4] - pts[c]
            prv = pts[(c + 3) % 4] - pts[c]
            shape = np.column_stack([nxt, prv])
            det = float(np.linalg.det(shape))
            if abs(det) < det_tol:
                raise InstanceError(
                    f"element {t}: degenerate rest corner {c} (|det| = {abs(det):.3e})"
                )
            if det < 0.0:
                shape[:, [0, 1]] = shape[:, [1, 0]]
        det = float(np.linalg.det(shape))
        if det < det_tol:
            raise InstanceError(f"element {t}: degenerate target corner {c}")
        w = QUAD_CORNER_FRACTION * det / 2.0
        corners.append(
            CornerSimplex(
                element_id=t,
                corner_id=c,
                vertex_ids=ids,
                shape_matrix=shape,
                weight=w,
                grad_matrix=_grad_matrix(shape),
            )
        )
    return corners


def build_instance(mesh: MeshPair, target_shape_policy: str = "rest") -> Instance:
    """Precompute corner simplices for every element of the mesh.

    target_shape_policy:
      "rest"    target shapes are the rest elements themselves (untangling)
      "regular" unit equilateral simplex / unit square corner (mapping quality)

    Targets are always positively oriented: a negatively oriented rest element
    gets a mirrored target.  Raises InstanceError for degenerate rest shapes.
    """
    if target_shape_policy not in ("rest", "regular"):
        raise ValueError(f"unknown target shape policy {target_shape_policy!r}")
    d = mesh.dimension
    det_tol = 1e-12 * mesh.bbox_diagonal() ** d
    corners: list[CornerSimplex] = []
    for t, (elem, kind) in enumerate(zip(mesh.elements, mesh.element_kinds)):
        if kind == SIMPLEX:
            corners.append(_corner_for_simplex(mesh, t, elem, target_shape_policy, det_tol))
        else:
            corners.extend(_corners_for_quad(mesh, t, elem, target_shape_policy, det_tol))
    return Instance(mesh, corners)


def compute_jacobian(corner: CornerSimplex, U: np.ndarray | MapState) -> np.ndarray:
    """Jacobian of the affine map on one corner simplex; linear in U."""
    if isinstance(U, MapState):
        U = U.U
    d = corner.shape_matrix.shape[0]
    pos = np.asarray(U, dtype=float).reshape(-1, d)[list(corner.vertex_ids)]
    return pos.T @ corner.grad_matrix


def all_jacobians(U: np.ndarray, instance: Instance) -> np.ndarray:
    """(n_corners, d, d) Jacobians for the packed instance, linear in U."""
    pos = U.reshape(-1, instance.d)[instance.vert_ids]
    return np.einsum("cva,cvb->cab", pos, instance.grads)
