"""Acceptance gate: every release criterion, one printed pass/fail line each.

Run with `pytest tests/test_acceptance.py -s` to see the lines as they pass.
Tolerances and budgets are pinned here and nowhere else.
"""

import json
import time

import numpy as np
import pytest

from conftest import fd_gradient, fd_hessian, foldfree_state, small_mesh
from foldfree.cli import fixture_main, main
from foldfree.energy import EnergyParams, chi, eval_jacobian, gradient, total_energy
from foldfree.fixtures import cavity_cube, point_swap_square, stretched_bar, triangle_fan_12
from foldfree.hessian import assemble_H_plus, corner_M_indefinite, corner_M_plus
from foldfree.mesh import build_instance
from foldfree.solver import SolverConfig, untangle, update_epsilon_theory
from foldfree.quality import report


def _criterion(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def swap_runs():
    """point_swap_square(8) under both schemes and both width rules."""
    runs = {}
    for scheme in ("quasi_newton", "newton"):
        for rule in ("theory", "heuristic"):
            t0 = time.perf_counter()
            res = untangle(point_swap_square(8),
                           SolverConfig(scheme=scheme, eps_rule=rule, lam=1.0))
            runs[(scheme, rule)] = (res, time.perf_counter() - t0)
    return runs


@pytest.fixture(scope="module")
def theory_runs(swap_runs):
    """All theory-rule runs whose traces back the schedule guarantees."""
    runs = [swap_runs[("quasi_newton", "theory")][0], swap_runs[("newton", "theory")][0]]
    runs.append(untangle(cavity_cube(6, 90.0),
                         SolverConfig(scheme="quasi_newton", eps_rule="theory")))
    return runs


def test_gradient_correctness(rng):
    t0 = time.perf_counter()
    worst = 0.0
    per_dim = 102  # 17 states x 6 (eps, lambda) combinations
    for d in (2, 3):
        mesh = small_mesh(d)
        inst = build_instance(mesh, "rest")
        for eps in (1.0, 1e-3):
            for lam in (0.0, 1.0, 1e4):
                params = EnergyParams(lam=lam, eps=eps, d=d)
                for _ in range(per_dim // 6):
                    U = foldfree_state(mesh, inst, rng)
                    g = gradient(U, inst, params)
                    gfd = fd_gradient(lambda x: total_energy(x, inst, params), U)
                    rel = np.linalg.norm(g - gfd) / np.linalg.norm(gfd)
                    worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    _criterion(
        "gradient matches central finite differences (rel <= 1e-6)",
        worst <= 1e-6 and elapsed <= 10.0,
        f"worst rel {worst:.2e}, {elapsed:.1f}s",
    )


def test_hessian_decomposition(rng):
    t0 = time.perf_counter()
    worst = 0.0
    saw_inverted = 0

    def phi_of_a(a, params):
        return eval_jacobian(np.asarray(a).reshape(params.d, params.d).T, params).phi

    for d in (2, 3):
        for k in range(50):
            J = rng.standard_normal((d, d))
            params = EnergyParams(lam=(0.0, 1.0, 1e4)[k % 3], eps=(0.5, 0.25, 0.1)[k % 3], d=d)
            ev = eval_jacobian(J, params)
            saw_inverted += ev.D < 0.0
            M = corner_M_plus(ev, params) + corner_M_indefinite(ev, params)
            Hfd = fd_hessian(lambda a: phi_of_a(a, params), J.T.reshape(-1), h=1e-4)
            rel = np.linalg.norm(M - Hfd) / np.linalg.norm(Hfd)
            worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    _criterion(
        "kept + neglected parts reproduce the FD Hessian (rel <= 1e-5)",
        worst <= 1e-5 and saw_inverted > 0 and elapsed <= 10.0,
        f"worst rel {worst:.2e}, {saw_inverted} inverted samples, {elapsed:.1f}s",
    )


def test_positive_definiteness(rng):
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(200):
        d = 2 if k % 2 == 0 else 3
        J = rng.standard_normal((d, d)) * rng.uniform(0.2, 3.0)
        params = EnergyParams(lam=10.0 ** rng.uniform(-2, 4),
                              eps=10.0 ** rng.uniform(-3, 0.5), d=d)
        M = corner_M_plus(eval_jacobian(J, params), params)
        w = np.linalg.eigvalsh(M)
        worst = min(worst, w[0] / max(abs(w[0]), abs(w[-1])))
    psd_ok = worst >= -1e-10

    quad_ok = True
    for mesh in (point_swap_square(8), cavity_cube(4, 30.0)):
        d = mesh.dimension
        assert int(mesh.locked.sum()) >= d
        inst = build_instance(mesh, "rest")
        system = assemble_H_plus(mesh.initial_map.reshape(-1), inst,
                                 EnergyParams(1.0, 0.5, d))
        for _ in range(100):
            x = rng.standard_normal(system.n_free_dofs)
            quad_ok = quad_ok and float(x @ (system.matrix @ x)) > 0.0
    elapsed = time.perf_counter() - t0
    _criterion(
        "kept Hessian parts PSD; assembled system PD with >= d locks",
        psd_ok and quad_ok and elapsed <= 10.0,
        f"worst normalized eig {worst:.2e}, {elapsed:.1f}s",
    )


def test_epsilon_rule_conformance(theory_runs):
    exact_ok = (update_epsilon_theory(4.0, -3.0, 0.1) == 3.75
                and update_epsilon_theory(1.0, 0.2, 0.1) == 0.9)
    cond_ok = True
    checked = 0
    for res in theory_runs:
        for r in res.trace:
            lhs = (1.0 - r.sigma) * chi(r.min_det, r.eps)
            rhs = chi(r.min_det, r.eps_next)
            cond_ok = cond_ok and lhs <= rhs * (1.0 + 1e-12)
            checked += 1
    _criterion(
        "width schedule: hand values exact, per-iteration sufficient condition",
        exact_ok and cond_ok and checked > 0,
        f"{checked} iterations checked",
    )


def test_sanity_point_swap(swap_runs):
    ok = True
    details = []
    for (scheme, rule), (res, dt) in swap_runs.items():
        good = res.success and res.report.min_det > 0.0 and dt <= 60.0
        ok = ok and good
        details.append(f"{scheme}/{rule}: det {res.report.min_det:.2e} in {dt:.1f}s")
    _criterion("point swap square untangles under all scheme/rule combinations",
               ok, "; ".join(details))


def test_fan_free_boundary():
    mesh = triangle_fan_12()
    res = untangle(mesh, SolverConfig(scheme="quasi_newton", eps_rule="heuristic",
                                      lam=1.0, target_policy="regular"))
    inst = res.instance
    F = total_energy(res.state.U, inst, EnergyParams(1.0, 1e-9, 2))
    _criterion(
        "free-boundary fan reaches positive determinants with finite energy",
        res.success and res.report.min_det > 0.0 and np.isfinite(F),
        f"min det {res.report.min_det:.3f}, F(eps=1e-9) = {F:.3f}",
    )


def test_stress_cavity_cube(theory_runs):
    t0 = time.perf_counter()
    res = untangle(cavity_cube(8, 45.0), SolverConfig(scheme="auto", eps_rule="heuristic"))
    elapsed = time.perf_counter() - t0
    growth_ok = True
    checked = 0
    for run in theory_runs:
        recs = list(run.trace)
        for prev, nxt in zip(recs, recs[1:]):
            if prev.descent_certified:
                growth_ok = growth_ok and nxt.f_before <= prev.f_before * (1.0 + 1e-12)
                checked += 1
    _criterion(
        "cavity cube 45deg untangles under auto scheme; certified iterations never grow F",
        res.success and res.report.min_det > 0.0 and elapsed <= 300.0
        and growth_ok and checked > 0,
        f"min det {res.report.min_det:.2e} in {elapsed:.1f}s; {checked} certified steps",
    )


def test_lambda_tradeoff_direction():
    bar = stretched_bar(12, 3, 2.0)
    med = {}
    for lam in (0.0, 1e4):
        res = untangle(bar, SolverConfig(scheme="quasi_newton", eps_rule="heuristic", lam=lam))
        assert res.success
        med[lam] = (
            float(np.median(res.report.stretch)),
            float(np.median(np.abs(res.report.det_j - 1.0))),
        )
    shape_ok = abs(med[0.0][0] - 1.0) < abs(med[1e4][0] - 1.0)
    area_ok = med[1e4][1] < med[0.0][1]
    _criterion(
        "lambda steers shape vs scale preservation in the right directions",
        shape_ok and area_ok,
        f"median stretch {med[0.0][0]:.3f} vs {med[1e4][0]:.3f}; "
        f"median |det-1| {med[0.0][1]:.4f} vs {med[1e4][1]:.4f}",
    )


def test_determinism(tmp_path):
    rest = str(tmp_path / "rest.mesh")
    init = str(tmp_path / "init.mesh")
    assert fixture_main(["point_swap_square", "--n", "8",
                         "--out-rest", rest, "--out-init", init]) == 0
    meshes = []
    traces = []
    for tag in ("a", "b"):
        out = str(tmp_path / f"out_{tag}.mesh")
        rep = str(tmp_path / f"rep_{tag}.json")
        rc = main(["--rest", rest, "--init", init, "--out", out, "--report", rep,
                   "--threads", "1"])
        assert rc == 0
        meshes.append(open(out, "rb").read())
        trace = json.loads(open(rep).read())["trace"]
        for r in trace:
            r.pop("wall_time_s")  # wall clock is measurement metadata
        traces.append(trace)
    _criterion(
        "identical config and thread count give bit-identical maps and traces",
        meshes[0] == meshes[1] and traces[0] == traces[1],
        f"{len(traces[0])} trace records compared",
    )
