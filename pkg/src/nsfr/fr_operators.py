"""Flux-reconstruction operators: correction operator K, FR projection,
weight-adjusted inverse, and the hybridized skew-symmetric stiffness operator.

FR is realized as DG with a modified mass matrix M + K, so correction
functions are never built explicitly.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .basis import Basis1D
from .tensor_kernels import apply_tensor_product, kron_operator


def correction_index_set(d: int):
    """Derivative orders (in units of p) per direction: entries in {0, 1} with
    at least one nonzero, i.e. s + v + w >= p with s, v, w in {0, p}."""
    return [combo for combo in itertools.product((0, 1), repeat=d) if any(combo)]


def correction_coefficient(c_1d: float, combo: Sequence[int]) -> float:
    if c_1d < 0:
        raise ValueError("correction parameter must be nonnegative")
    return c_1d ** sum(combo)


def _check_positive(J: np.ndarray):
    if np.any(~np.isfinite(J)) or np.any(J <= 0):
        raise ValueError("metric Jacobian must be positive at every volume node")


def element_mass(basis: Basis1D, J: np.ndarray, d: int) -> np.ndarray:
    """Dense M_m = chi^T W J chi for one element (J at volume quadrature nodes)."""
    chi = kron_operator([basis.interp] * d)
    w = kron_operator([basis.weights[:, None]] * d)[:, 0]
    return chi.T @ ((w * np.ravel(J))[:, None] * chi)


def build_correction_operator(basis: Basis1D, J: np.ndarray, c_1d: float,
                              d: int) -> np.ndarray:
    """K_m = sum c_(s,v,w) (D^s D^v D^w)^T M_m (D^s D^v D^w)."""
    _check_positive(np.asarray(J))
    n = basis.n_sol ** d
    if c_1d == 0.0:
        return np.zeros((n, n))
    M = element_mass(basis, J, d)
    Dp = np.linalg.matrix_power(basis.deriv, basis.p)
    eye = np.eye(basis.n_sol)
    K = np.zeros((n, n))
    for combo in correction_index_set(d):
        B = kron_operator([Dp if c else eye for c in combo])
        K += correction_coefficient(c_1d, combo) * (B.T @ M @ B)
    return 0.5 * (K + K.T)


def reference_modified_mass_1d(basis: Basis1D, c_1d: float) -> np.ndarray:
    """1D M + c (D^p)^T M D^p on the reference interval."""
    if c_1d < 0:
        raise ValueError("correction parameter must be nonnegative")
    Dp = np.linalg.matrix_power(basis.deriv, basis.p)
    return basis.mass + c_1d * (Dp.T @ basis.mass @ Dp)


def build_fr_projection(basis: Basis1D, c_1d: float) -> np.ndarray:
    """Pi~ = (M + K)^{-1} chi^T W, the 1D factor of the FR projection."""
    MK = reference_modified_mass_1d(basis, c_1d)
    if np.linalg.cond(MK) > 1e14:
        raise np.linalg.LinAlgError("modified mass matrix is singular")
    return np.linalg.solve(MK, basis.interp.T * basis.weights[None, :])


def tensor_weights(weights_1d: np.ndarray, d: int) -> np.ndarray:
    """Tensor-product quadrature weights shaped (n,)*d with xi on the last axis."""
    w = np.ones(())
    for _ in range(d):
        w = np.multiply.outer(weights_1d, w)
    return w


def weight_adjusted_inverse_apply(proj_1d: np.ndarray, J: np.ndarray,
                                  weights_1d: np.ndarray, rhs: np.ndarray,
                                  d: int = 3) -> np.ndarray:
    """Pi~ (W J)^{-1} Pi~^T rhs by sum-factorization.

    ``rhs`` has trailing axes (n_s,)*d; ``J`` holds the Jacobian at volume
    nodes with trailing axes (n_q,)*d and broadcasts over the leading axes
    of ``rhs`` (for a batch of elements give J the element axis and a
    singleton state axis).
    """
    J = np.asarray(J)
    _check_positive(J)
    P = proj_1d
    y = apply_tensor_product([P.T] * d, rhs)
    y = y / (tensor_weights(weights_1d, d) * J)
    return apply_tensor_product([P] * d, y)


def weight_adjusted_inverse_apply_full(basis: Basis1D, c_1d: float, J: np.ndarray,
                                       rhs: np.ndarray, d: int = 3) -> np.ndarray:
    """(M+K)^{-1} (M_{1/J} + K_{1/J}) (M+K)^{-1} rhs, exact for constant J.

    Same sum-factorized structure as :func:`weight_adjusted_inverse_apply`
    but the 1/J-weighted correction terms are kept, one extra pair of passes
    per correction index.
    """
    J = np.asarray(J)
    _check_positive(J)
    MK_inv = np.linalg.inv(reference_modified_mass_1d(basis, c_1d))
    Dp = np.linalg.matrix_power(basis.deriv, basis.p)
    chi = basis.interp
    wJ = tensor_weights(basis.weights, d) / J
    y = apply_tensor_product([MK_inv] * d, rhs)
    combos = [(0,) * d] + (correction_index_set(d) if c_1d > 0 else [])
    out = 0.0
    for combo in combos:
        B = [chi @ Dp if c else chi for c in combo]
        z = apply_tensor_product(B, y) * wJ
        out = out + correction_coefficient(c_1d, combo) * apply_tensor_product(
            [b.T for b in B], z)
    return apply_tensor_product([MK_inv] * d, out)


@dataclass(frozen=True)
class HybridStiffness:
    """Dense hybridized operator on volume + face quadrature nodes.

    ``Q[k]`` is Q~ for reference direction k and ``B[k]`` the diagonal
    boundary block W_f diag(n_f,k) over all face nodes.  Faces are ordered
    2k + side (side 0 at xi_k = -1), nodes within a face xi-fastest over the
    remaining directions.
    """

    n_volume: int
    n_face_nodes: int
    Q: np.ndarray          # (d, N, N)
    B: np.ndarray          # (d, N_f)
    skew_1d: tuple         # per direction W D - D^T W

    @property
    def skew(self) -> np.ndarray:
        """Q~ - Q~^T stacked as (N, N, d)."""
        return np.moveaxis(self.Q - np.swapaxes(self.Q, 1, 2), 0, -1)


def _face_extraction(interp_face_1d: np.ndarray, n: int, d: int, k: int, side: int):
    ops = [np.eye(n)] * d
    ops = list(ops)
    ops[k] = interp_face_1d[side][None, :]
    return kron_operator(ops)


def build_hybrid_stiffness(basis: Basis1D, d: int) -> HybridStiffness:
    """Assemble Q~ = [[Q - E^T B E / 2, E^T B / 2], [-B E / 2, B / 2]] densely.

    Q = W grad(phi) is built from the flux basis collocated on the volume
    quadrature; Q~ + Q~^T equals blockdiag(0, B) whenever the 1D operators
    satisfy summation by parts.
    """
    n = basis.n_quad
    w = basis.weights
    Dphi = basis.flux_diff
    Nv = n ** d
    Wv = kron_operator([np.diag(w)] * d)
    E_blocks, b_blocks = [], [[] for _ in range(d)]
    for k in range(d):
        wf = np.ones(1)
        for j in range(d):
            if j != k:
                wf = np.kron(w, wf)
        for side in (0, 1):
            E_blocks.append(_face_extraction(basis.flux_face, n, d, k, side))
            for j in range(d):
                sign = (1.0 if side else -1.0) if j == k else 0.0
                b_blocks[j].append(sign * wf)
    E = np.vstack(E_blocks)
    Nf = E.shape[0]
    Q = np.zeros((d, Nv + Nf, Nv + Nf))
    B = np.zeros((d, Nf))
    skew_1d = []
    for k in range(d):
        ops = [np.eye(n)] * d
        ops = list(ops)
        ops[k] = Dphi
        Qv = Wv @ kron_operator(ops)
        Bk = np.concatenate(b_blocks[k])
        EtB = E.T * Bk[None, :]
        Q[k, :Nv, :Nv] = Qv - 0.5 * EtB @ E
        Q[k, :Nv, Nv:] = 0.5 * EtB
        Q[k, Nv:, :Nv] = -0.5 * Bk[:, None] * E
        Q[k, Nv:, Nv:] = 0.5 * np.diag(Bk)
        B[k] = Bk
        WD = w[:, None] * Dphi
        skew_1d.append(WD - WD.T)
    return HybridStiffness(Nv, Nf, Q, B, tuple(skew_1d))


def sbp_residual(basis: Basis1D) -> float:
    """max |W D + D^T W - E^T B E| for the 1D flux basis."""
    w = basis.weights
    WD = w[:, None] * basis.flux_diff
    E = basis.flux_face
    EtBE = np.outer(E[1], E[1]) - np.outer(E[0], E[0])
    return float(np.max(np.abs(WD + WD.T - EtBE)))


# c+ of Castonguay et al. in this code's normalization (half the published
# values); tabulated only where the literature gives them
_C_PLUS = {2: 9.3e-2, 3: 1.835e-3, 4: 2.395e-5, 5: 2.12e-7}


def _legendre_leading_factor(p: int) -> float:
    """(a_p p!)^2 with a_p the leading coefficient of the Legendre polynomial."""
    a_p = math.factorial(2 * p) / (2 ** p * math.factorial(p) ** 2)
    return (a_p * math.factorial(p)) ** 2


def correction_parameter(name: str, p: int) -> float:
    """Named 1D correction parameters: c_DG, c_SD, c_HU, c_plus."""
    if p < 1:
        raise ValueError("p must be at least 1")
    key = name.lower().replace("_", "").replace("+", "plus")
    if key == "cdg":
        return 0.0
    if key == "csd":
        return p / ((2 * p + 1) * (p + 1) * _legendre_leading_factor(p))
    if key == "chu":
        return (p + 1) / (p * (2 * p + 1) * _legendre_leading_factor(p))
    if key == "cplus":
        if p not in _C_PLUS:
            raise ValueError(f"c_plus is tabulated for p in {sorted(_C_PLUS)} only")
        return _C_PLUS[p]
    raise ValueError(f"unknown correction parameter {name!r}")
