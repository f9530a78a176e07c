"""Continuation solver: drive the regularization width to zero while minimizing.

Outer loop: pick the regularization width eps_k, minimize F(., eps_k) from the
current map, repeat until every corner determinant is positive and F has
stagnated.  Two width schedules are provided:

  theory    eps^0 = 1, then a contraction whose factor is derived from the
            relative energy decrease sigma_k and the worst determinant; it
            guarantees F(U^{k+1}, eps^{k+1}) <= F(U^k, eps^k) whenever the
            inner solve achieved sigma_k >= sigma_floor.
  heuristic eps_k = sqrt(1e-12 + 4e-2 * min(0, worst determinant)^2),
            recomputed from the current map every outer iteration.

Two inner minimizers: L-BFGS-B over the free DOFs, and a Newton step using
the PSD Hessian approximation with block-Jacobi preconditioned conjugate
gradients and a golden-section line search.  "auto" starts quasi-Newton and
switches to Newton after two consecutive outer iterations that fail the
descent condition while folds remain.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .energy import EnergyParams, dets, energy_and_gradient, total_energy
from .hessian import assemble_H_plus
from .mesh import Instance, MapState, MeshPair, all_jacobians, build_instance
from .quality import QualityReport, report


@dataclass
class SolverConfig:
    scheme: str = "auto"  # quasi_newton | newton | auto
    eps_rule: str = "heuristic"  # theory | heuristic
    lam: float = 1.0
    target_policy: str = "rest"  # rest | regular
    sigma_floor: float = 0.1
    stagnation: float = 1e-3
    max_outer: int = 500
    eps_floor: float = 1e-12
    lbfgs_memory: int = 10
    inner_budget: int = 500
    inner_ftol: float = 1e-10
    inner_gtol_rel: float = 1e-10
    cg_tol: float = 1e-8
    cg_budget_factor: int = 10
    newton_inner_steps: int = 50
    armijo_c1: float = 1e-4
    linesearch_iters: int = 48
    step_cap: float = 64.0

    def __post_init__(self):
        if self.scheme not in ("quasi_newton", "newton", "auto"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.eps_rule not in ("theory", "heuristic"):
            raise ValueError(f"unknown eps rule {self.eps_rule!r}")
        if not 0.0 < self.sigma_floor < 1.0:
            raise ValueError("sigma_floor must be in (0, 1)")
        if not 0.0 < self.stagnation < 1.0:
            raise ValueError("stagnation factor must be in (0, 1)")


@dataclass
class IterationRecord:
    k: int
    scheme: str
    eps: float
    f_before: float
    f_after: float
    sigma_raw: float
    sigma: float
    min_det: float  # after the inner solve
    eps_next: float
    inner_iterations: int
    wall_time_s: float
    descent_certified: bool
    cg_fallback: bool = False
    stalled: bool = False

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "scheme": self.scheme,
            "eps": self.eps,
            "f_before": self.f_before,
            "f_after": self.f_after,
            "sigma_raw": self.sigma_raw,
            "sigma": self.sigma,
            "min_det": self.min_det,
            "eps_next": self.eps_next,
            "inner_iterations": self.inner_iterations,
            "wall_time_s": self.wall_time_s,
            "descent_certified": self.descent_certified,
            "cg_fallback": self.cg_fallback,
            "stalled": self.stalled,
        }


class IterationTrace:
    """Append-only record of the outer loop."""

    def __init__(self):
        self.records: list[IterationRecord] = []

    def append(self, record: IterationRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def to_list(self) -> list[dict]:
        return [r.to_dict() for r in self.records]


@dataclass
class UntangleResult:
    state: MapState
    trace: IterationTrace
    report: QualityReport
    success: bool
    instance: Instance = field(repr=False, default=None)


def min_det(U, instance: Instance) -> float:
    """Smallest Jacobian determinant over all corner simplices."""
    if isinstance(U, MapState):
        U = U.U
    J = all_jacobians(np.asarray(U, dtype=float).reshape(-1), instance)
    return float(dets(J).min())


def sigma_k(F_prev: float, F_next: float, sigma_floor: float = 0.1) -> float:
    """Relative decrease achieved by an inner solve, floored at sigma_floor."""
    return max(sigma_floor, 1.0 - F_next / F_prev)


def update_epsilon_theory(eps_k: float, d_minus: float, sigma: float) -> float:
    """Contract eps so the regularizer loses at most a (1 - sigma) factor at
    the worst determinant; keeps the energy sequence non-growing when the
    inner solve achieved sigma."""
    if d_minus < 0.0:
        root = math.hypot(d_minus, eps_k)
        return (1.0 - sigma * root / (abs(d_minus) + root)) * eps_k
    return (1.0 - sigma) * eps_k


def heuristic_epsilon_from_det(d_minus: float) -> float:
    """sqrt(1e-12 + 4e-2 * min(0, d_minus)^2): ~0.2 |d_minus| while tangled,
    1e-6 once fold-free."""
    m = min(0.0, d_minus)
    return math.sqrt(1e-12 + 4e-2 * m * m)


def update_epsilon_heuristic(U, instance: Instance) -> float:
    """Heuristic width computed from the current map's worst determinant."""
    return heuristic_epsilon_from_det(min_det(U, instance))


def golden_section(f, lo: float, hi: float, iters: int) -> tuple[float, float]:
    """Minimize a unimodal-ish 1D function on [lo, hi]; returns (x, f(x))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def pcg(matvec, b: np.ndarray, precond, tol: float, maxiter: int):
    """Preconditioned conjugate gradients to relative residual tol.

    Returns (x, iterations, converged).  Bails out (converged=False) on a
    nonpositive curvature direction, which signals a (numerically) singular
    system; the caller falls back to steepest descent.
    """
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x, 0, True
    z = precond(r)
    p = z.copy()
    rz = float(r @ z)
    it = 0
    while it < maxiter:
        it += 1
        Ap = matvec(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0 or not np.isfinite(pAp):
            return x, it, False
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if float(np.linalg.norm(r)) <= tol * bnorm:
            return x, it, True
        z = precond(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, it, False


def _project_translations(vec: np.ndarray, d: int) -> np.ndarray:
    """Remove the per-coordinate mean (centroid gauge for fully free meshes)."""
    v = vec.reshape(-1, d)
    return (v - v.mean(axis=0)).reshape(-1)


def lbfgs_minimize(U: np.ndarray, instance: Instance, params: EnergyParams,
                   config: SolverConfig):
    """Inner quasi-Newton solve over the free DOFs at fixed eps.

    Returns (U_new, f_after, iterations, clean) where clean is False when the
    library stopped abnormally (line-search failure or budget exhaustion); the
    best-so-far point is returned either way and never increases F.
    """
    free = instance.free_dofs
    if len(free) == 0:
        return U.copy(), total_energy(U, instance, params), 0, True
    work = U.copy()

    def fun_split(x):
        work[free] = x
        F, g = energy_and_gradient(work, instance, params)
        return F, g[free]

    x0 = U[free].copy()
    f0, _ = fun_split(x0)
    gtol = config.inner_gtol_rel * (1.0 + abs(f0)) if np.isfinite(f0) else config.inner_gtol_rel
    res = _scipy_minimize(
        fun_split,
        x0,
        jac=True,
        method="L-BFGS-B",
        options={
            "maxcor": config.lbfgs_memory,
            "maxiter": config.inner_budget,
            "maxfun": 4 * config.inner_budget,
            "ftol": config.inner_ftol,
            "gtol": gtol,
        },
    )
    f_after = float(res.fun)
    U_new = U.copy()
    U_new[free] = res.x
    if not np.isfinite(f_after) or f_after > f0:
        return U.copy(), f0, int(res.nit), False
    return U_new, f_after, int(res.nit), bool(res.success)


def newton_step(U: np.ndarray, instance: Instance, params: EnergyParams,
                config: SolverConfig):
    """One Newton iteration: solve the PSD system, line-search along the step.

    Returns (U_new, f_after, info) with info = {cg_iterations, cg_fallback,
    stalled}.  Guarantees f_after <= F(U); a stalled line search returns U
    unchanged.
    """
    d = instance.d
    if len(instance.free_dofs) == 0:
        return U.copy(), total_energy(U, instance, params), {
            "cg_iterations": 0, "cg_fallback": False, "stalled": True}
    f0, g = energy_and_gradient(U, instance, params)
    system = assemble_H_plus(U, instance, params)
    gf = g[instance.free_dofs]
    fully_free = len(instance.free_vertices) == instance.mesh.n_vertices
    if fully_free:
        gf = _project_translations(gf, d)

    Minv = system.block_jacobi_inverse()

    def precond(r):
        return np.einsum("vab,vb->va", Minv, r.reshape(-1, d)).reshape(-1)

    budget = max(1, config.cg_budget_factor * len(gf))
    delta, cg_iters, converged = pcg(
        lambda x: system.matrix @ x, gf, precond, config.cg_tol, budget
    )
    fallback = not converged
    if fallback or float(gf @ delta) <= 0.0:
        delta = gf.copy()
        fallback = True
    if fully_free:
        delta = _project_translations(delta, d)
    slope = float(gf @ delta)  # directional decrease rate along -delta
    info = {"cg_iterations": cg_iters, "cg_fallback": fallback, "stalled": False}
    dnorm = float(np.linalg.norm(delta))
    if dnorm == 0.0 or slope <= 0.0:
        info["stalled"] = True
        return U.copy(), f0, info

    work = U.copy()
    free = instance.free_dofs

    def f1d(t):
        work[free] = U[free] - t * delta
        return total_energy(work, instance, params)

    hi = 1.0
    f_hi = f1d(hi)
    if f_hi < f0:
        while hi < config.step_cap:
            f_next = f1d(2.0 * hi)
            if f_next >= f_hi:
                break
            hi, f_hi = 2.0 * hi, f_next
        hi *= 2.0
    tau, f_tau = golden_section(f1d, 0.0, hi, config.linesearch_iters)
    # Armijo acceptance, halving from the golden-section point if needed
    while tau > 1e-16 and f_tau > f0 - config.armijo_c1 * tau * slope:
        tau *= 0.5
        f_tau = f1d(tau)
    if tau <= 1e-16 or f_tau >= f0:
        info["stalled"] = True
        return U.copy(), f0, info
    U_new = U.copy()
    U_new[free] = U[free] - tau * delta
    return U_new, float(f_tau), info


def _newton_inner(U: np.ndarray, instance: Instance, params: EnergyParams,
                  config: SolverConfig, f_before: float):
    """Newton steps at fixed eps until per-step stagnation or budget.

    The width schedules assume each outer iterate approximately minimizes
    F(., eps_k); a single modified-Newton step is not enough for that when
    the heuristic schedule re-tightens eps aggressively, so the Newton scheme
    iterates steps the same way the quasi-Newton scheme runs an L-BFGS loop.
    """
    f_cur = f_before
    steps = 0
    fallback = False
    stalled = False
    for _ in range(config.newton_inner_steps):
        U_new, f_after, info = newton_step(U, instance, params, config)
        steps += 1
        fallback = fallback or info["cg_fallback"]
        if info["stalled"]:
            stalled = steps == 1
            break
        drop = 1.0 - f_after / f_cur if f_cur > 0 else 0.0
        U, f_cur = U_new, f_after
        if drop < config.stagnation:
            break
    return U, f_cur, steps, fallback, stalled


def untangle(mesh: MeshPair, config: SolverConfig | None = None) -> UntangleResult:
    """Run the full continuation loop on a mesh.

    Stops when the worst determinant is positive and the energy decreased by
    less than the stagnation factor relative to the previous outer iteration
    (each measured at its own eps), or when the outer budget is exhausted; in
    the latter case success reflects whether the final map is fold-free.
    """
    config = config or SolverConfig()
    instance = build_instance(mesh, config.target_policy)
    d = mesh.dimension
    U = mesh.initial_map.reshape(-1).copy()
    trace = IterationTrace()
    start = time.perf_counter()

    scheme_now = "newton" if config.scheme == "newton" else "quasi_newton"
    fail_streak = 0
    d_last = min_det(U, instance)
    if config.eps_rule == "theory":
        eps = 1.0
    else:
        eps = heuristic_epsilon_from_det(d_last)
    f_prev_pair = None
    success = False

    for k in range(config.max_outer):
        params = EnergyParams(lam=config.lam, eps=eps, d=d)
        f_before = total_energy(U, instance, params)
        if (
            k > 0
            and d_last > 0.0
            and f_before > (1.0 - config.stagnation) * f_prev_pair
        ):
            success = True
            break

        t0 = time.perf_counter()
        cg_fallback = False
        stalled = False
        if scheme_now == "quasi_newton":
            U_new, f_after, inner_iters, clean = lbfgs_minimize(U, instance, params, config)
            stalled = not clean
        else:
            U_new, f_after, inner_iters, cg_fallback, stalled = _newton_inner(
                U, instance, params, config, f_before
            )
        dt = time.perf_counter() - t0

        sigma_raw = 1.0 - f_after / f_before if np.isfinite(f_before) and f_before > 0 else 0.0
        sigma = max(config.sigma_floor, sigma_raw)
        d_last = min_det(U_new, instance)

        if config.eps_rule == "theory":
            eps_next = max(update_epsilon_theory(eps, d_last, sigma), config.eps_floor)
        else:
            eps_next = heuristic_epsilon_from_det(d_last)

        trace.append(
            IterationRecord(
                k=k,
                scheme=scheme_now,
                eps=eps,
                f_before=f_before,
                f_after=f_after,
                sigma_raw=sigma_raw,
                sigma=sigma,
                min_det=d_last,
                eps_next=eps_next,
                inner_iterations=inner_iters,
                wall_time_s=dt,
                descent_certified=sigma_raw >= config.sigma_floor,
                cg_fallback=cg_fallback,
                stalled=stalled,
            )
        )

        if config.scheme == "auto" and scheme_now == "quasi_newton":
            if sigma_raw < config.sigma_floor and d_last <= 0.0:
                fail_streak += 1
            else:
                fail_streak = 0
            if fail_streak >= 2:
                scheme_now = "newton"
                fail_streak = 0

        f_prev_pair = f_before
        U = U_new
        eps = eps_next
    else:
        success = d_last > 0.0

    wall = time.perf_counter() - start
    state = MapState(U=U, k=len(trace), eps=eps)
    rep = report(U, instance)
    rep.iterations = len(trace)
    rep.wall_time_s = wall
    return UntangleResult(state=state, trace=trace, report=rep, success=success,
                          instance=instance)
