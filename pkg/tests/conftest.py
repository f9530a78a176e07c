import numpy as np
import pytest

from foldfree.energy import dets
from foldfree.fixtures import point_swap_square, tet_cube
from foldfree.mesh import MeshPair, all_jacobians


@pytest.fixture
def rng():
    return np.random.default_rng(20240814)


def unlock(mesh: MeshPair, identity_map: bool = True) -> MeshPair:
    """Copy of a mesh with no locks and (optionally) the identity initial map."""
    return MeshPair(
        dimension=mesh.dimension,
        rest_vertices=mesh.rest_vertices.copy(),
        elements=list(mesh.elements),
        element_kinds=list(mesh.element_kinds),
        locked=np.zeros(mesh.n_vertices, dtype=bool),
        initial_map=mesh.rest_vertices.copy() if identity_map else mesh.initial_map.copy(),
    )


def tri_grid(n: int) -> MeshPair:
    """Unlocked triangulated unit square with the identity initial map."""
    return unlock(point_swap_square(max(n, 5)))


def small_mesh(d: int) -> MeshPair:
    return tri_grid(3) if d == 2 else unlock(tet_cube(2))


def two_triangle_square() -> MeshPair:
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return MeshPair(
        dimension=2,
        rest_vertices=verts,
        elements=[(0, 1, 2), (0, 2, 3)],
        element_kinds=["simplex", "simplex"],
        locked=np.zeros(4, dtype=bool),
        initial_map=verts.copy(),
    )


def unit_triangle() -> MeshPair:
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return MeshPair(
        dimension=2,
        rest_vertices=verts,
        elements=[(0, 1, 2)],
        element_kinds=["simplex"],
        locked=np.zeros(3, dtype=bool),
        initial_map=verts.copy(),
    )


def random_rotation(d: int, rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_state(mesh: MeshPair, rng, amp: float = 0.3) -> np.ndarray:
    return mesh.rest_vertices.reshape(-1) + amp * rng.standard_normal(
        mesh.n_vertices * mesh.dimension
    )


def foldfree_state(mesh: MeshPair, instance, rng, rel_amp: float = 0.3,
                   det_floor: float = 0.2) -> np.ndarray:
    """Random perturbation of the rest map, rejection-sampled to keep all
    corner determinants comfortably positive (keeps FD oracles well posed).
    The amplitude is relative to the typical element edge length."""
    d = mesh.dimension
    scale = float(np.mean(np.abs(np.linalg.det(instance.grads[:, 1:, :])) ** (-1.0 / d)))
    amp = rel_amp * scale
    for attempt in range(400):
        if attempt and attempt % 50 == 0:
            amp *= 0.5
        U = random_state(mesh, rng, amp)
        if dets(all_jacobians(U, instance)).min() >= det_floor:
            return U
    raise AssertionError("could not sample a fold-free state")


def fd_gradient(fun, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function."""
    g = np.zeros_like(x)
    for i in range(len(x)):
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        g[i] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g


def fd_hessian(fun, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central second differences of a scalar function (symmetric by design)."""
    n = len(x)
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            xpp = x.copy()
            xpp[i] += h
            xpp[j] += h
            xmm = x.copy()
            xmm[i] -= h
            xmm[j] -= h
            xpm = x.copy()
            xpm[i] += h
            xpm[j] -= h
            xmp = x.copy()
            xmp[i] -= h
            xmp[j] += h
            H[i, j] = (fun(xpp) - fun(xpm) - fun(xmp) + fun(xmm)) / (4.0 * h * h)
            H[j, i] = H[i, j]
    return H
