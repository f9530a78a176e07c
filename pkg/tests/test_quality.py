import numpy as np
import pytest

from conftest import random_rotation, unit_triangle
from foldfree.mesh import MeshPair, build_instance
from foldfree.quality import report, singular_ratio, singular_values, trimmed_extreme


def test_singular_ratio_basics():
    assert singular_ratio(np.eye(2)) == pytest.approx(1.0)
    assert singular_ratio(np.eye(3)) == pytest.approx(1.0)
    assert singular_ratio(np.diag([2.0, 0.5])) == pytest.approx(4.0)
    assert singular_ratio(np.diag([1.0, 0.0])) == np.inf


def test_singular_ratio_rotated_3d(rng):
    R = random_rotation(3, rng)
    Q = random_rotation(3, rng)
    J = R @ np.diag([3.0, 1.0, 1.0]) @ Q
    assert singular_ratio(J) == pytest.approx(3.0, rel=1e-10)


def test_singular_values_match_lapack_oracle(rng):
    for d in (2, 3):
        for _ in range(50):
            J = rng.standard_normal((d, d)) * rng.uniform(0.1, 5.0)
            sv = singular_values(J)
            ref = np.linalg.svd(J, compute_uv=False)
            assert np.allclose(sv, ref, rtol=1e-10, atol=1e-12)


def test_orthogonal_invariance(rng):
    for d in (2, 3):
        for _ in range(20):
            J = rng.standard_normal((d, d))
            r = singular_ratio(J)
            R = random_rotation(d, rng)
            Q = random_rotation(d, rng)
            assert singular_ratio(R @ J @ Q) == pytest.approx(r, rel=1e-10)


def test_det_equals_signed_singular_product(rng):
    for d in (2, 3):
        for _ in range(20):
            J = rng.standard_normal((d, d))
            det = np.linalg.det(J)
            sv = singular_values(J)
            assert np.prod(sv) == pytest.approx(abs(det), rel=1e-10, abs=1e-12)


def _disjoint_triangles(jacobians):
    """One mesh of disjoint unit right triangles whose map realizes the given
    per-element Jacobians exactly (rest-shape targets)."""
    rest = []
    mapped = []
    elements = []
    for t, J in enumerate(jacobians):
        off = np.array([2.0 * t, 0.0])
        rest.extend([off, off + (1.0, 0.0), off + (0.0, 1.0)])
        mapped.extend([off, off + J[:, 0], off + J[:, 1]])
        elements.append((3 * t, 3 * t + 1, 3 * t + 2))
    rest = np.array(rest)
    mapped = np.array(mapped)
    return MeshPair(
        dimension=2,
        rest_vertices=rest,
        elements=elements,
        element_kinds=["simplex"] * len(elements),
        locked=np.zeros(len(rest), dtype=bool),
        initial_map=mapped,
    )


def test_report_identity():
    mesh = unit_triangle()
    inst = build_instance(mesh, "rest")
    rep = report(mesh.initial_map.reshape(-1), inst)
    assert rep.min_det == pytest.approx(1.0)
    assert rep.max_stretch == pytest.approx(1.0)
    assert rep.min_det_p95 == rep.min_det
    assert rep.max_stretch_p95 == rep.max_stretch


def test_report_one_stretched_element():
    mesh = _disjoint_triangles([np.eye(2), np.diag([2.0, 0.5]), np.eye(2)])
    inst = build_instance(mesh, "rest")
    rep = report(mesh.initial_map.reshape(-1), inst)
    assert rep.min_det == pytest.approx(1.0)
    assert rep.max_stretch == pytest.approx(4.0)


def test_percentiles_drop_exactly_worst_five_of_hundred():
    bad = np.diag([0.1, 0.01])  # det 0.001, stretch 10
    jacobians = [np.eye(2)] * 95 + [bad] * 5
    mesh = _disjoint_triangles(jacobians)
    inst = build_instance(mesh, "rest")
    rep = report(mesh.initial_map.reshape(-1), inst)
    assert rep.min_det == pytest.approx(0.001)
    assert rep.max_stretch == pytest.approx(10.0)
    assert rep.min_det_p95 == pytest.approx(1.0)
    assert rep.max_stretch_p95 == pytest.approx(1.0)
    # sort-based oracle: drop floor(0.05 n) worst per metric independently
    det = np.sort(rep.det_j)
    stretch = np.sort(rep.stretch)
    k = int(np.floor(0.05 * len(det)))
    assert rep.min_det_p95 == pytest.approx(det[k])
    assert rep.max_stretch_p95 == pytest.approx(stretch[len(det) - 1 - k])


def test_percentiles_never_worse_than_absolute(rng):
    vals = rng.uniform(0.1, 3.0, size=37)
    assert trimmed_extreme(vals, 0.05, "low") >= vals.min()
    assert trimmed_extreme(vals, 0.05, "high") <= vals.max()
