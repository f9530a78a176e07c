"""Positive-semidefinite Hessian approximation, assembled from per-corner blocks.

The exact Hessian of the per-corner energy phi with respect to the flattened
Jacobian splits into a kept part M_plus and a neglected part M_indef.  M_plus
comes from a convex extension of phi in (a, det) coordinates, obtained by
freezing the denominator regularizer to its first-order Taylor expansion, and
is therefore positive semidefinite for every Jacobian, inverted ones included.
M_indef collects the terms in the second derivative of the regularizer and the
second derivative of the determinant; it is only used by tests.

Flattening is columnwise: a[i*d + r] = J[r, i].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .energy import (
    ElementEval,
    EnergyParams,
    _chi_arr,
    _chi_prime_arr,
    chi,
    chi_prime,
    chi_second,
    cofactors,
    dets,
)
from .mesh import Instance, all_jacobians


def _flatten(J: np.ndarray) -> np.ndarray:
    """Columnwise flattening of one d x d matrix."""
    return J.T.reshape(-1)


def _cross_matrix(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def det_hessian(J: np.ndarray) -> np.ndarray:
    """Exact second derivative of det J with respect to the flattened entries.

    Constant antisymmetric-block structure in 2D; cross-product blocks (linear
    in J) in 3D.  Symmetric as a whole.
    """
    d = J.shape[0]
    H = np.zeros((d * d, d * d))
    if d == 2:
        rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
        H[0:2, 2:4] = rot
        H[2:4, 0:2] = -rot
        return H
    a1, a2, a3 = J[:, 0], J[:, 1], J[:, 2]
    H[0:3, 3:6] = -_cross_matrix(a3)
    H[0:3, 6:9] = _cross_matrix(a2)
    H[3:6, 6:9] = -_cross_matrix(a1)
    H[3:6, 0:3] = _cross_matrix(a3)
    H[6:9, 0:3] = -_cross_matrix(a2)
    H[6:9, 3:6] = _cross_matrix(a1)
    return H


def _second_derivative_coeffs(D, x, xp, trJJ, d, lam):
    """Coefficients of the convex-extension Hessian blocks at (a, D).

    Returns (c_aa, c_aD, c_DD) with
      d2Phi/da da^T = c_aa * I
      d2Phi/da dD   = c_aD * a
      d2Phi/dD^2    = c_DD
    Vectorized over leading axes.
    """
    p = 2.0 / d
    c_aa = 2.0 / x**p
    c_aD = -2.0 * p * xp / x ** (1.0 + p)
    c_DD = p * (1.0 + p) * trJJ * xp * xp / x ** (2.0 + p) + lam * (
        2.0 / x - 4.0 * D * xp / x**2 + 2.0 * (1.0 + D * D) * xp * xp / x**3
    )
    return c_aa, c_aD, c_DD


def corner_M_plus(ev: ElementEval, params: EnergyParams) -> np.ndarray:
    """Kept (positive-semidefinite) part of the per-corner Hessian, d^2 x d^2."""
    d = params.d
    a = _flatten(ev.J)
    b = _flatten(ev.dual)
    trJJ = float(a @ a)
    c_aa, c_aD, c_DD = _second_derivative_coeffs(
        ev.D, ev.chi, ev.chi_prime, trJJ, d, params.lam
    )
    v = c_aD * a
    M = c_aa * np.eye(d * d)
    M += np.outer(v, b) + np.outer(b, v)
    M += c_DD * np.outer(b, b)
    return M


def corner_M_indefinite(ev: ElementEval, params: EnergyParams) -> np.ndarray:
    """Neglected part: exact Hessian of phi minus corner_M_plus (test oracle)."""
    d = params.d
    b = _flatten(ev.dual)
    dPhi_dD = -((2.0 / d) * ev.f * ev.chi_prime - 2.0 * params.lam * ev.D
                + params.lam * ev.g * ev.chi_prime) / ev.chi
    xpp = chi_second(ev.D, params.eps)
    M = dPhi_dD * det_hessian(ev.J)
    M -= (xpp / ev.chi) * ((2.0 / d) * ev.f + params.lam * ev.g) * np.outer(b, b)
    return M


def lifted_hessian(a: np.ndarray, D: float, eps: float, lam: float, d: int) -> np.ndarray:
    """(d^2+1) x (d^2+1) Hessian of the convex extension Phi(a, D).

    Phi treats D as an independent variable and freezes the regularizer to its
    tangent line at D, so this matrix must be positive semidefinite for every
    sample (the basis of the M_plus construction).
    """
    a = np.asarray(a, dtype=float)
    n = d * d
    q = chi(D, eps)
    qp = chi_prime(D, eps)
    c_aa, c_aD, c_DD = _second_derivative_coeffs(D, q, qp, float(a @ a), d, lam)
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = c_aa * np.eye(n)
    H[:n, n] = c_aD * a
    H[n, :n] = c_aD * a
    H[n, n] = c_DD
    return H


@dataclass
class SparseSystem:
    """Reduced (locked DOFs eliminated) PSD system with d x d block structure.

    matrix        : CSR over the free DOFs, vertex-major block layout
    free_vertices : original vertex ids of the reduced blocks, in order
    diag_blocks   : (n_free, d, d) leading diagonal blocks (always PD for
                    vertices that belong to at least one corner)
    """

    d: int
    n_vertices: int
    free_vertices: np.ndarray
    matrix: sp.csr_matrix
    diag_blocks: np.ndarray

    @property
    def n_free_dofs(self) -> int:
        return self.matrix.shape[0]

    def block_jacobi_inverse(self) -> np.ndarray:
        """(n_free, d, d) inverses of the diagonal blocks; identity for
        untouched (all-zero) blocks so the preconditioner is always usable."""
        blocks = self.diag_blocks.copy()
        zero = np.abs(blocks).sum(axis=(1, 2)) == 0.0
        blocks[zero] = np.eye(self.d)
        return np.linalg.inv(blocks)


def assemble_H_plus(U, instance: Instance, params: EnergyParams) -> SparseSystem:
    """Assemble the global PSD Hessian approximation from corner M_plus blocks.

    Each corner contributes w * (Z kron I) M_plus (Z kron I)^T scattered on its
    vertex pairs; rows/columns of locked vertices are eliminated.
    """
    d = instance.d
    nv = instance.mesh.n_vertices
    J = all_jacobians(np.asarray(U, dtype=float).reshape(-1), instance)
    D = dets(J)
    if params.eps == 0.0 and D.min() <= 0.0:
        raise ValueError("Hessian at eps = 0 requires a fold-free state")
    x = _chi_arr(D, params.eps)
    xp = _chi_prime_arr(D, params.eps)
    B = cofactors(J)
    trJJ = np.einsum("cab,cab->c", J, J)
    n = len(instance)
    dd = d * d

    a = J.transpose(0, 2, 1).reshape(n, dd)
    b = B.transpose(0, 2, 1).reshape(n, dd)
    c_aa, c_aD, c_DD = _second_derivative_coeffs(D, x, xp, trJJ, d, params.lam)
    v = c_aD[:, None] * a
    M = c_aa[:, None, None] * np.eye(dd)[None]
    M += v[:, :, None] * b[:, None, :] + b[:, :, None] * v[:, None, :]
    M += c_DD[:, None, None] * (b[:, :, None] * b[:, None, :])

    # Chain rule to vertex positions: E[j,r, i,s] = sum_ml Z[j,m] Z[i,l] M[(m,r),(l,s)]
    M5 = M.reshape(n, d, d, d, d)
    E = np.einsum("cjm,cil,cmrls->cjris", instance.grads, instance.grads, M5)
    E *= instance.weights[:, None, None, None, None]

    k = d + 1
    r = np.arange(d)
    rows = (d * instance.vert_ids)[:, :, None, None, None] + r[None, None, :, None, None]
    cols = (d * instance.vert_ids)[:, None, None, :, None] + r[None, None, None, None, :]
    rows = np.broadcast_to(rows, (n, k, d, k, d))
    cols = np.broadcast_to(cols, (n, k, d, k, d))
    H = sp.coo_matrix(
        (E.reshape(-1), (rows.reshape(-1), cols.reshape(-1))), shape=(d * nv, d * nv)
    ).tocsr()
    H.sum_duplicates()

    diag = np.zeros((nv, d, d))
    np.add.at(diag, instance.vert_ids, np.einsum("cjrjs->cjrs", E))

    free_v = instance.free_vertices
    free_dofs = instance.free_dofs
    H_red = H[free_dofs][:, free_dofs].tocsr()
    return SparseSystem(
        d=d,
        n_vertices=nv,
        free_vertices=free_v,
        matrix=H_red,
        diag_blocks=diag[free_v],
    )
