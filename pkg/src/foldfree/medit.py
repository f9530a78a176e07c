"""Medit ASCII .mesh reader/writer and lock-list handling.

Supported sections: MeshVersionFormatted, Dimension, Vertices, Edges (read and
ignored), Triangles, Quadrilaterals, Tetrahedra, Corners/RequiredVertices
(ignored), End.  Indices are 1-based in the file, 0-based in memory.  Vertex
reference marks > 0 in the rest mesh lock the vertex; an explicit lock-list
file (one 0-based index per line, '#' comments) takes precedence.

A problem is a pair of .mesh files with identical connectivity: the rest
domain and the initial map.  2D problems may be stored with Dimension 3 and a
constant z-coordinate, which is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import QUAD, SIMPLEX, MeshPair


class MeshParseError(ValueError):
    """Malformed .mesh or lock-list content; message carries the line number."""


@dataclass
class MeditData:
    """Raw sections of one .mesh file."""

    dimension: int
    vertices: np.ndarray
    vertex_refs: np.ndarray
    triangles: list[tuple[int, int, int]] = field(default_factory=list)
    quads: list[tuple[int, int, int, int]] = field(default_factory=list)
    tets: list[tuple[int, int, int, int]] = field(default_factory=list)


class _Tokens:
    def __init__(self, path: str):
        self.path = path
        self.items: list[tuple[str, int]] = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                body = line.split("#", 1)[0]
                for tok in body.split():
                    self.items.append((tok, lineno))
        self.pos = 0

    def done(self) -> bool:
        return self.pos >= len(self.items)

    def peek_line(self) -> int:
        return self.items[self.pos][1] if not self.done() else -1

    def next(self) -> tuple[str, int]:
        if self.done():
            raise MeshParseError(f"{self.path}: unexpected end of file")
        item = self.items[self.pos]
        self.pos += 1
        return item

    def next_int(self, what: str) -> tuple[int, int]:
        tok, line = self.next()
        try:
            return int(tok), line
        except ValueError:
            raise MeshParseError(
                f"{self.path}:{line}: expected integer {what}, got {tok!r}"
            ) from None

    def next_float(self, what: str) -> tuple[float, int]:
        tok, line = self.next()
        try:
            return float(tok), line
        except ValueError:
            raise MeshParseError(
                f"{self.path}:{line}: expected number {what}, got {tok!r}"
            ) from None


def _read_elements(toks: _Tokens, nverts: int, arity: int, what: str):
    count, _ = toks.next_int(f"{what} count")
    out = []
    for _ in range(count):
        ids = []
        for i in range(arity):
            v, line = toks.next_int(f"{what} vertex index")
            if not (1 <= v <= nverts):
                raise MeshParseError(
                    f"{toks.path}:{line}: {what} index {v} out of range 1..{nverts}"
                )
            ids.append(v - 1)
        toks.next_int(f"{what} reference")
        out.append(tuple(ids))
    return out


def read_mesh(path: str) -> MeditData:
    """Parse one Medit ASCII .mesh file."""
    toks = _Tokens(path)
    dimension = None
    vertices = None
    refs = None
    triangles: list = []
    quads: list = []
    tets: list = []
    while not toks.done():
        kw, line = toks.next()
        if kw == "MeshVersionFormatted":
            toks.next_int("format version")
        elif kw == "Dimension":
            dimension, _ = toks.next_int("dimension")
            if dimension not in (2, 3):
                raise MeshParseError(f"{path}:{line}: unsupported dimension {dimension}")
        elif kw == "Vertices":
            if dimension is None:
                raise MeshParseError(f"{path}:{line}: Vertices before Dimension")
            count, _ = toks.next_int("vertex count")
            vertices = np.empty((count, dimension))
            refs = np.empty(count, dtype=np.int64)
            for i in range(count):
                for a in range(dimension):
                    vertices[i, a], _ = toks.next_float("coordinate")
                refs[i], _ = toks.next_int("vertex reference")
        elif kw in ("Triangles", "Quadrilaterals", "Tetrahedra", "Edges"):
            if vertices is None:
                raise MeshParseError(f"{path}:{line}: {kw} before Vertices")
            arity = {"Triangles": 3, "Quadrilaterals": 4, "Tetrahedra": 4, "Edges": 2}[kw]
            elems = _read_elements(toks, len(vertices), arity, kw)
            if kw == "Triangles":
                triangles = elems
            elif kw == "Quadrilaterals":
                quads = elems
            elif kw == "Tetrahedra":
                tets = elems
        elif kw in ("Corners", "RequiredVertices", "Ridges", "RequiredEdges"):
            count, _ = toks.next_int(f"{kw} count")
            for _ in range(count):
                toks.next_int(f"{kw} entry")
        elif kw == "End":
            break
        else:
            raise MeshParseError(f"{path}:{line}: unknown section {kw!r}")
    if vertices is None:
        raise MeshParseError(f"{path}: no Vertices section")
    return MeditData(
        dimension=dimension,
        vertices=vertices,
        vertex_refs=refs,
        triangles=triangles,
        quads=quads,
        tets=tets,
    )


def _planarize(data: MeditData, path: str) -> np.ndarray:
    """Return 2D coordinates, dropping a constant z when Dimension is 3."""
    if data.dimension == 2:
        return data.vertices
    z = data.vertices[:, 2]
    span = float(z.max() - z.min()) if len(z) else 0.0
    scale = 1.0 + float(np.abs(z).max()) if len(z) else 1.0
    if span > 1e-12 * scale:
        raise MeshParseError(
            f"{path}: 2D connectivity with non-constant z (spread {span:.3e})"
        )
    return data.vertices[:, :2]


def _effective(data: MeditData, path: str):
    """(d, coords, elements, kinds) with surface sections dropped for 3D."""
    if data.tets:
        if data.dimension != 3:
            raise MeshParseError(f"{path}: Tetrahedra in a Dimension {data.dimension} file")
        return 3, data.vertices, list(data.tets), [SIMPLEX] * len(data.tets)
    if not data.triangles and not data.quads:
        raise MeshParseError(f"{path}: no elements (Triangles/Quadrilaterals/Tetrahedra)")
    coords = _planarize(data, path)
    elements = list(data.triangles) + list(data.quads)
    kinds = [SIMPLEX] * len(data.triangles) + [QUAD] * len(data.quads)
    return 2, coords, elements, kinds


def read_lock_list(path: str, n_vertices: int) -> np.ndarray:
    """Boolean lock mask from a text file of 0-based vertex indices."""
    locked = np.zeros(n_vertices, dtype=bool)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            try:
                idx = int(body)
            except ValueError:
                raise MeshParseError(
                    f"{path}:{lineno}: expected a vertex index, got {body!r}"
                ) from None
            if not (0 <= idx < n_vertices):
                raise MeshParseError(
                    f"{path}:{lineno}: vertex index {idx} out of range 0..{n_vertices - 1}"
                )
            locked[idx] = True
    return locked


def load_problem(rest_path: str, init_path: str, locks_path: str | None = None) -> MeshPair:
    """Assemble a MeshPair from rest/init .mesh files and an optional lock list."""
    rest = read_mesh(rest_path)
    init = read_mesh(init_path)
    d, rest_coords, elements, kinds = _effective(rest, rest_path)
    d2, init_coords, elements2, kinds2 = _effective(init, init_path)
    if d != d2 or elements != elements2 or kinds != kinds2:
        raise MeshParseError(
            f"{init_path}: connectivity differs from {rest_path} "
            f"({len(elements2)} vs {len(elements)} elements)"
        )
    if len(init_coords) != len(rest_coords):
        raise MeshParseError(
            f"{init_path}: vertex count differs from {rest_path}"
        )
    if locks_path is not None:
        locked = read_lock_list(locks_path, len(rest_coords))
    else:
        locked = rest.vertex_refs > 0
    return MeshPair(
        dimension=d,
        rest_vertices=rest_coords,
        elements=elements,
        element_kinds=kinds,
        locked=locked,
        initial_map=init_coords,
    )


def write_mesh(path: str, dimension: int, vertices: np.ndarray,
               elements: list[tuple[int, ...]], kinds: list[str],
               locked: np.ndarray) -> None:
    """Write a Medit ASCII .mesh; locked vertices get reference mark 1."""
    vertices = np.asarray(vertices, dtype=float).reshape(-1, dimension)
    groups = {"Triangles": [], "Quadrilaterals": [], "Tetrahedra": []}
    for elem, kind in zip(elements, kinds):
        if kind == QUAD:
            groups["Quadrilaterals"].append(elem)
        elif dimension == 2:
            groups["Triangles"].append(elem)
        else:
            groups["Tetrahedra"].append(elem)
    lines = ["MeshVersionFormatted 2", f"Dimension {dimension}", "Vertices", str(len(vertices))]
    for i, v in enumerate(vertices):
        coords = " ".join("%.17g" % c for c in v)
        lines.append(f"{coords} {1 if locked[i] else 0}")
    for kw, elems in groups.items():
        if not elems:
            continue
        lines.append(kw)
        lines.append(str(len(elems)))
        for elem in elems:
            lines.append(" ".join(str(v + 1) for v in elem) + " 0")
    lines.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_mesh_pair(rest_path: str, init_path: str, mesh: MeshPair,
                    locks_path: str | None = None) -> None:
    """Write a MeshPair as rest/init files (locks as reference marks), plus an
    optional explicit lock list."""
    write_mesh(rest_path, mesh.dimension, mesh.rest_vertices, mesh.elements,
               mesh.element_kinds, mesh.locked)
    write_mesh(init_path, mesh.dimension, mesh.initial_map, mesh.elements,
               mesh.element_kinds, mesh.locked)
    if locks_path is not None:
        with open(locks_path, "w", encoding="utf-8") as fh:
            fh.write("# locked vertex indices (0-based)\n")
            for idx in np.flatnonzero(mesh.locked):
                fh.write(f"{idx}\n")
