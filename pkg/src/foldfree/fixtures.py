"""Built-in problem generators used by tests, docs and the fixture CLI.

point_swap_square  n x n triangulated unit square; the boundary and two
                   interior vertices are locked, the two interior vertices
                   trade places in the initial map (the classic injectivity
                   sanity check -- the initial map is always tangled).
triangle_fan_12    a 12-triangle fan around one vertex, nothing locked;
                   meant to be solved with the "regular" target policy.
cavity_cube        tetrahedralized cube with a cubic cavity; outer and cavity
                   boundaries locked, the cavity boundary rotated about the
                   vertical axis in the initial map (large-deformation test).
stretched_bar      triangulated bar whose locked ends are pulled apart in the
                   initial map (shape/area trade-off demo, fold-free start).
"""

from __future__ import annotations

import math

import numpy as np

from .mesh import MeshPair, SIMPLEX

# Even permutations keep the reference orientation; odd ones get vertex swaps.
_KUHN_PATHS = [
    (0, 1, 2),
    (0, 2, 1),
    (1, 0, 2),
    (1, 2, 0),
    (2, 0, 1),
    (2, 1, 0),
]


def _perm_sign(p) -> int:
    inv = sum(1 for i in range(3) for j in range(i + 1, 3) if p[i] > p[j])
    return 1 if inv % 2 == 0 else -1


def point_swap_square(n: int) -> MeshPair:
    # the swapped pair keeps two cells of clearance from the locked boundary;
    # with less clearance no locally injective configuration exists at all
    if n < 5:
        raise ValueError("point_swap_square needs n >= 5")
    side = n + 1
    xs = np.linspace(0.0, 1.0, side)
    verts = np.array([(xs[i], xs[j]) for j in range(side) for i in range(side)])

    def vid(i, j):
        return j * side + i

    tris = []
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))

    locked = np.zeros(len(verts), dtype=bool)
    for j in range(side):
        for i in range(side):
            if i in (0, n) or j in (0, n):
                locked[vid(i, j)] = True

    off = max(2, n // 4)
    a = vid(off, n // 2)
    b = vid(n - off, n // 2)
    locked[a] = locked[b] = True
    initial = verts.copy()
    initial[[a, b]] = initial[[b, a]]
    return MeshPair(
        dimension=2,
        rest_vertices=verts,
        elements=tris,
        element_kinds=[SIMPLEX] * len(tris),
        locked=locked,
        initial_map=initial,
    )


def triangle_fan_12() -> MeshPair:
    angles = [2.0 * math.pi * k / 12.0 for k in range(12)]
    verts = np.vstack([[0.0, 0.0], [[math.cos(t), math.sin(t)] for t in angles]])
    tris = [(0, 1 + k, 1 + (k + 1) % 12) for k in range(12)]
    return MeshPair(
        dimension=2,
        rest_vertices=verts,
        elements=tris,
        element_kinds=[SIMPLEX] * 12,
        locked=np.zeros(13, dtype=bool),
        initial_map=verts.copy(),
    )


def _kuhn_tets(n: int, skip):
    """6-tet subdivision of every cell of an n^3 grid; skip(ci,cj,ck) drops cells.

    Returns (used lattice coordinates scaled to [0,1]^3, tets, integer grid
    coords of the used vertices), with unused lattice points pruned.
    """
    side = n + 1

    def vid(i, j, k):
        return (k * side + j) * side + i

    lattice = np.array(
        [(i / n, j / n, k / n) for k in range(side) for j in range(side) for i in range(side)]
    )
    tets = []
    for ck in range(n):
        for cj in range(n):
            for ci in range(n):
                if skip(ci, cj, ck):
                    continue
                base = np.array([ci, cj, ck])
                for path in _KUHN_PATHS:
                    steps = [base.copy()]
                    for axis in path:
                        nxt = steps[-1].copy()
                        nxt[axis] += 1
                        steps.append(nxt)
                    ids = [vid(*p) for p in steps]
                    if _perm_sign(path) < 0:
                        ids[1], ids[2] = ids[2], ids[1]
                    tets.append(tuple(ids))
    used = sorted({v for t in tets for v in t})
    remap = {old: new for new, old in enumerate(used)}
    verts = lattice[used]
    tets = [tuple(remap[v] for v in t) for t in tets]
    grid = np.array([(i, j, k) for k in range(side) for j in range(side) for i in range(side)])
    return verts, tets, grid[used]


def tet_cube(n: int = 2) -> MeshPair:
    """Plain tetrahedralized cube, nothing locked (small 3D test meshes)."""
    verts, tets, _ = _kuhn_tets(n, lambda ci, cj, ck: False)
    return MeshPair(
        dimension=3,
        rest_vertices=verts,
        elements=tets,
        element_kinds=[SIMPLEX] * len(tets),
        locked=np.zeros(len(verts), dtype=bool),
        initial_map=verts.copy(),
    )


def cavity_cube(n: int = 8, angle_deg: float = 45.0) -> MeshPair:
    if n < 4:
        raise ValueError("cavity_cube needs n >= 4")
    cav = max(1, round(n / 4))
    lo = (n - cav) // 2
    hi = lo + cav
    verts, tets, g = _kuhn_tets(
        n, lambda ci, cj, ck: lo <= ci < hi and lo <= cj < hi and lo <= ck < hi
    )
    outer = (g == 0).any(axis=1) | (g == n).any(axis=1)
    inner = ((g >= lo) & (g <= hi)).all(axis=1)
    locked = outer | inner

    initial = verts.copy()
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    cx = cy = 0.5
    x, y = initial[inner, 0] - cx, initial[inner, 1] - cy
    initial[inner, 0] = cx + c * x - s * y
    initial[inner, 1] = cy + s * x + c * y
    return MeshPair(
        dimension=3,
        rest_vertices=verts,
        elements=tets,
        element_kinds=[SIMPLEX] * len(tets),
        locked=locked,
        initial_map=initial,
    )


def stretched_bar(nx: int = 12, ny: int = 3, stretch: float = 2.0) -> MeshPair:
    if nx < 2 or ny < 1:
        raise ValueError("stretched_bar needs nx >= 2 and ny >= 1")
    length = nx / ny
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    verts = np.array([(x, y) for y in ys for x in xs])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))

    locked = np.zeros(len(verts), dtype=bool)
    for j in range(ny + 1):
        locked[vid(0, j)] = True
        locked[vid(nx, j)] = True
    initial = verts.copy()
    initial[:, 0] *= stretch
    return MeshPair(
        dimension=2,
        rest_vertices=verts,
        elements=tris,
        element_kinds=[SIMPLEX] * len(tris),
        locked=locked,
        initial_map=initial,
    )


def unit_square_quads(n: int = 1) -> MeshPair:
    """n x n quad grid on the unit square, nothing locked (quad-path tests)."""
    side = n + 1
    xs = np.linspace(0.0, 1.0, side)
    verts = np.array([(xs[i], xs[j]) for j in range(side) for i in range(side)])

    def vid(i, j):
        return j * side + i

    quads = [
        (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1))
        for j in range(n)
        for i in range(n)
    ]
    return MeshPair(
        dimension=2,
        rest_vertices=verts,
        elements=quads,
        element_kinds=["quad"] * len(quads),
        locked=np.zeros(len(verts), dtype=bool),
        initial_map=verts.copy(),
    )


_GENERATORS = {
    "point_swap_square": point_swap_square,
    "triangle_fan_12": triangle_fan_12,
    "cavity_cube": cavity_cube,
    "stretched_bar": stretched_bar,
    "unit_square_quads": unit_square_quads,
    "tet_cube": tet_cube,
}


def generate_fixture(name: str, **params) -> MeshPair:
    """Build a named fixture; unknown names or bad parameters raise ValueError."""
    try:
        gen = _GENERATORS[name]
    except KeyError:
        raise ValueError(
            f"unknown fixture {name!r}; available: {', '.join(sorted(_GENERATORS))}"
        ) from None
    return gen(**params)
