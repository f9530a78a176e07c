"""Regularized distortion energy: per-corner terms, total functional, gradient.

Two competing per-corner measures of an affine map with Jacobian J:

    shape term  f = tr(J^T J) / chi(det J, eps)^(2/d)
    scale term  g = (det^2 J + 1) / chi(det J, eps)

where chi(D, eps) = (D + sqrt(eps^2 + D^2)) / 2 smoothly replaces the
determinant in the denominators so that both terms stay finite on inverted
elements.  For eps -> 0+, chi(D, eps) -> D when D > 0 and -> 0+ when D < 0,
recovering the exact (infinite-on-foldovers) energy.

The total functional is F(U, eps) = sum over corners of w * (f + lambda * g).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Instance, MapState, all_jacobians, compute_jacobian


@dataclass
class EnergyParams:
    """lam >= 0 trades shape preservation (0) against scale preservation (large).

    eps >= 0 is the regularization width; eps == 0 is only meaningful on
    fold-free states and otherwise yields the +inf sentinel.
    """

    lam: float
    eps: float
    d: int

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError("lam must be nonnegative")
        if self.eps < 0.0:
            raise ValueError("eps must be nonnegative")
        if self.d not in (2, 3):
            raise ValueError("d must be 2 or 3")


def chi(D: float, eps: float) -> float:
    """Smooth positive surrogate for the determinant: (D + sqrt(eps^2 + D^2))/2.

    Strictly positive for eps > 0; equals D for eps == 0, D > 0.  For D < 0 the
    equivalent conjugate form eps^2 / (2 (sqrt(eps^2 + D^2) - D)) is used, which
    does not cancel to zero when eps^2 underflows next to D^2.
    """
    if eps == 0.0 and D <= 0.0:
        raise ValueError("chi undefined at eps = 0 for nonpositive determinant")
    r = np.hypot(eps, D)
    if D >= 0.0:
        return float(0.5 * (D + r))
    return float(0.5 * eps * eps / (r - D))


def chi_prime(D: float, eps: float) -> float:
    """d(chi)/dD = (1 + D / sqrt(eps^2 + D^2)) / 2, in (0, 1)."""
    if eps == 0.0 and D <= 0.0:
        raise ValueError("chi_prime undefined at eps = 0 for nonpositive determinant")
    if eps == 0.0:
        return 1.0
    r = np.hypot(eps, D)
    if D >= 0.0:
        return float(0.5 * (1.0 + D / r))
    return float(0.5 * eps * eps / (r * (r - D)))


def chi_second(D: float, eps: float) -> float:
    """d^2(chi)/dD^2 = eps^2 / (2 (eps^2 + D^2)^(3/2)); 0 in the eps = 0 limit."""
    if eps == 0.0:
        return 0.0
    r = np.hypot(eps, D)
    return 0.5 * eps * eps / (r * r * r)


def _chi_arr(D: np.ndarray, eps: float) -> np.ndarray:
    r = np.hypot(eps, D)
    with np.errstate(divide="ignore", invalid="ignore"):
        neg = 0.5 * eps * eps / (r - D)
    return np.where(D >= 0.0, 0.5 * (D + r), neg)


def _chi_prime_arr(D: np.ndarray, eps: float) -> np.ndarray:
    r = np.hypot(eps, D)
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = 0.5 * (1.0 + D / r)
        neg = 0.5 * eps * eps / (r * (r - D))
    return np.where(D >= 0.0, pos, neg)


def dets(J: np.ndarray) -> np.ndarray:
    """Determinants of a (n, d, d) stack, closed form."""
    d = J.shape[-1]
    if d == 2:
        return J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    c0 = J[..., 1, 1] * J[..., 2, 2] - J[..., 2, 1] * J[..., 1, 2]
    c1 = J[..., 2, 1] * J[..., 0, 2] - J[..., 0, 1] * J[..., 2, 2]
    c2 = J[..., 0, 1] * J[..., 1, 2] - J[..., 1, 1] * J[..., 0, 2]
    return J[..., 0, 0] * c0 + J[..., 1, 0] * c1 + J[..., 2, 0] * c2


def cofactors(J: np.ndarray) -> np.ndarray:
    """Cofactor matrices of a (n, d, d) stack.

    Column i is the dual basis vector b_i with a_i . b_j = delta_ij det J,
    i.e. the gradient of det J with respect to column a_i.  Built without
    inverting J so it stays exact through singular configurations.
    """
    d = J.shape[-1]
    B = np.empty_like(J)
    if d == 2:
        B[..., 0, 0] = J[..., 1, 1]
        B[..., 1, 0] = -J[..., 0, 1]
        B[..., 0, 1] = -J[..., 1, 0]
        B[..., 1, 1] = J[..., 0, 0]
        return B
    a1, a2, a3 = J[..., :, 0], J[..., :, 1], J[..., :, 2]
    B[..., :, 0] = np.cross(a2, a3)
    B[..., :, 1] = np.cross(a3, a1)
    B[..., :, 2] = np.cross(a1, a2)
    return B


@dataclass
class ElementEval:
    """All per-corner quantities at one Jacobian."""

    J: np.ndarray
    D: float
    chi: float
    chi_prime: float
    f: float
    g: float
    phi: float
    dual: np.ndarray  # cofactor matrix; columns are the dual basis b_i

    @property
    def tangent(self) -> np.ndarray:
        return self.J


def eval_jacobian(J: np.ndarray, params: EnergyParams) -> ElementEval:
    """Energy terms of a single Jacobian (any orientation for eps > 0)."""
    J = np.asarray(J, dtype=float)
    d = params.d
    D = float(dets(J[None])[0])
    x = chi(D, params.eps)
    xp = chi_prime(D, params.eps)
    f = float(np.sum(J * J)) / x ** (2.0 / d)
    g = (D * D + 1.0) / x
    return ElementEval(
        J=J,
        D=D,
        chi=x,
        chi_prime=xp,
        f=f,
        g=g,
        phi=f + params.lam * g,
        dual=cofactors(J[None])[0],
    )


def element_energy(corner, U, params: EnergyParams) -> ElementEval:
    """Evaluate one corner simplex of an instance at map positions U."""
    return eval_jacobian(compute_jacobian(corner, U), params)


def _unwrap(U) -> np.ndarray:
    if isinstance(U, MapState):
        return U.U
    return np.asarray(U, dtype=float)


def total_energy(U, instance: Instance, params: EnergyParams) -> float:
    """F(U, eps) = sum w * (f + lam * g) over all corner simplices.

    Fixed summation order (numpy pairwise reduction over the corner array),
    so repeated evaluations are bit-identical.  Returns +inf when eps == 0 on
    a state with a nonpositive determinant, or when any term overflows.
    """
    U = _unwrap(U)
    d = instance.d
    J = all_jacobians(U, instance)
    D = dets(J)
    if params.eps == 0.0 and D.min() <= 0.0:
        return float("inf")
    x = _chi_arr(D, params.eps)
    trJJ = np.einsum("cab,cab->c", J, J)
    phi = trJJ / x ** (2.0 / d) + params.lam * ((D * D + 1.0) / x)
    F = float(np.sum(instance.weights * phi))
    return F if np.isfinite(F) else float("inf")


def gradient(U, instance: Instance, params: EnergyParams) -> np.ndarray:
    """Exact gradient of total_energy with respect to U.

    Per corner, dphi/da_i = (2 / chi^(2/d)) a_i + dPhi_dD * b_i with
    dPhi_dD = -(1/chi) ((2/d) f chi' - 2 lam D + lam g chi'); the result is
    scattered through the corner grad matrices with the corner weights.
    Entries of locked vertices are zeroed.
    """
    _, grad = energy_and_gradient(U, instance, params)
    return grad


def energy_and_gradient(U, instance: Instance, params: EnergyParams) -> tuple[float, np.ndarray]:
    """total_energy and gradient sharing one Jacobian sweep (solver hot path)."""
    U = _unwrap(U)
    d = instance.d
    J = all_jacobians(U, instance)
    D = dets(J)
    if params.eps == 0.0:
        if D.min() <= 0.0:
            raise ValueError("gradient at eps = 0 requires a fold-free state")
    x = _chi_arr(D, params.eps)
    xp = _chi_prime_arr(D, params.eps)
    B = cofactors(J)
    trJJ = np.einsum("cab,cab->c", J, J)
    pw = x ** (2.0 / d)
    f = trJJ / pw
    g = (D * D + 1.0) / x
    phi = f + params.lam * g
    F = float(np.sum(instance.weights * phi))
    if not np.isfinite(F):
        F = float("inf")

    dPhi_dD = -((2.0 / d) * f * xp - 2.0 * params.lam * D + params.lam * g * xp) / x
    G = (2.0 / pw)[:, None, None] * J + dPhi_dD[:, None, None] * B
    contrib = np.einsum("c,cab,cvb->cva", instance.weights, G, instance.grads)
    grad = np.zeros((instance.mesh.n_vertices, d))
    np.add.at(grad, instance.vert_ids, contrib)
    grad[instance.mesh.locked] = 0.0
    return F, grad.reshape(-1)
