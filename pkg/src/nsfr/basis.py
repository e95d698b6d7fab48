"""One-dimensional quadrature rules and Lagrange operators.

Every multi-dimensional operator in the package is a tensor product of the
1D matrices assembled here.  Solution nodes are always Gauss-Lobatto-Legendre
points; the volume quadrature (and therefore the collocated flux basis) may be
Gauss-Legendre or Gauss-Lobatto-Legendre with any number of points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEWTON_TOL = 1e-15
NEWTON_MAXITER = 100

GL = "GL"
LGL = "LGL"


@dataclass(frozen=True)
class QuadratureRule:
    kind: str
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.nodes.size


def _legendre(n: int, x: np.ndarray):
    """Return P_n(x) and P_{n-1}(x) from the three-term recurrence."""
    p_prev, p = np.zeros_like(x), np.ones_like(x)
    for k in range(1, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    return p, p_prev


def _legendre_and_derivative(n: int, x: np.ndarray):
    # derivative from P_n and P_{n-1}; only valid away from x = +-1
    p, p_prev = _legendre(n, x)
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp, p_prev


def _newton(update, x0: np.ndarray) -> np.ndarray:
    x = x0.copy()
    for _ in range(NEWTON_MAXITER):
        dx = update(x)
        x = x - dx
        if np.max(np.abs(dx)) < NEWTON_TOL:
            break
    return x


def _gauss_legendre(n: int) -> QuadratureRule:
    k = np.arange(1, n + 1)
    x0 = -np.cos(np.pi * (4 * k - 1) / (4 * n + 2))

    def update(x):
        p, dp, _ = _legendre_and_derivative(n, x)
        return p / dp

    x = _newton(update, x0)
    _, dp, _ = _legendre_and_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    return QuadratureRule(GL, x, w)


def _gauss_lobatto_legendre(n: int) -> QuadratureRule:
    N = n - 1
    x0 = -np.cos(np.pi * np.arange(n) / N)

    # Newton on (1 - x^2) P_N'(x) written with P_N and P_{N-1}; the
    # endpoints are fixed points of this update.
    def update(x):
        pN, pNm1 = _legendre(N, x)
        return (x * pN - pNm1) / (n * pN)

    x = _newton(update, x0)
    x[0], x[-1] = -1.0, 1.0
    pN, _ = _legendre(N, x)
    w = 2.0 / (N * n * pN * pN)
    return QuadratureRule(LGL, x, w)


def quadrature_rule(kind: str, n: int) -> QuadratureRule:
    """Gauss-Legendre ("GL") or Gauss-Lobatto-Legendre ("LGL") rule on [-1, 1]."""
    if kind == GL:
        if n < 1:
            raise ValueError(f"GL rule needs n >= 1, got {n}")
        if n == 1:
            return QuadratureRule(GL, np.zeros(1), np.full(1, 2.0))
        return _gauss_legendre(n)
    if kind == LGL:
        if n < 2:
            raise ValueError(f"LGL rule needs n >= 2, got {n}")
        if n == 2:
            return QuadratureRule(LGL, np.array([-1.0, 1.0]), np.ones(2))
        return _gauss_lobatto_legendre(n)
    raise ValueError(f"unknown quadrature kind {kind!r}")


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def lagrange_interpolation(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Matrix whose (i, j) entry is the j-th Lagrange polynomial at x[i]."""
    x = np.atleast_1d(np.asarray(x, dtype=np.result_type(nodes, x, float)))
    lam = barycentric_weights(nodes)
    diff = x[:, None] - nodes[None, :]
    exact = diff == 0.0
    diff[exact] = 1.0
    terms = lam[None, :] / diff
    out = terms / terms.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    out[rows] = exact[rows]
    return out


def lagrange_differentiation(nodes: np.ndarray) -> np.ndarray:
    """Nodal differentiation matrix of the Lagrange basis on ``nodes``."""
    lam = barycentric_weights(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (lam[None, :] / lam[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    # negative-sum trick keeps row sums at zero to rounding
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


@dataclass(frozen=True)
class Basis1D:
    """Lagrange basis on LGL solution nodes evaluated on a quadrature rule.

    ``interp`` is chi(xi_v) (n_q x n_s), ``diff`` its derivative at the
    quadrature nodes, ``mass`` = chi^T W chi and ``stiffness`` =
    chi^T W dchi.  ``deriv`` is the strong derivative M^{-1} S acting on
    solution coefficients.  The flux basis is the Lagrange basis on the
    quadrature nodes, with derivative ``flux_diff`` and face values
    ``flux_face`` (rows: xi = -1, xi = +1).
    """

    p: int
    solution_nodes: np.ndarray
    quad: QuadratureRule
    interp: np.ndarray
    diff: np.ndarray
    mass: np.ndarray
    stiffness: np.ndarray
    deriv: np.ndarray
    face: np.ndarray
    flux_diff: np.ndarray
    flux_face: np.ndarray

    @property
    def n_sol(self) -> int:
        return self.solution_nodes.size

    @property
    def n_quad(self) -> int:
        return self.quad.n

    @property
    def weights(self) -> np.ndarray:
        return self.quad.weights

    @property
    def collocated(self) -> bool:
        return self.quad.n == self.solution_nodes.size and np.allclose(
            self.quad.nodes, self.solution_nodes, rtol=0.0, atol=1e-15)


def lagrange_matrices(p: int, solution_rule: QuadratureRule,
                      eval_rule: QuadratureRule) -> Basis1D:
    if solution_rule.n != p + 1:
        raise ValueError("solution rule must have p+1 nodes")
    xs = solution_rule.nodes
    chi = lagrange_interpolation(xs, eval_rule.nodes)
    D_sol = lagrange_differentiation(xs)
    dchi = chi @ D_sol
    W = eval_rule.weights
    mass = chi.T @ (W[:, None] * chi)
    stiffness = chi.T @ (W[:, None] * dchi)
    deriv = np.linalg.solve(mass, stiffness)
    face = lagrange_interpolation(xs, np.array([-1.0, 1.0]))
    flux_diff = lagrange_differentiation(eval_rule.nodes)
    flux_face = lagrange_interpolation(eval_rule.nodes, np.array([-1.0, 1.0]))
    return Basis1D(p, xs, eval_rule, chi, dchi, mass, stiffness, deriv, face,
                   flux_diff, flux_face)


def build_basis(p: int, quad_kind: str = GL, overintegration: int = 0) -> Basis1D:
    """LGL(p+1) solution basis on a (p+1+overintegration)-point rule."""
    return lagrange_matrices(p, quadrature_rule(LGL, p + 1),
                             quadrature_rule(quad_kind, p + 1 + overintegration))


def l2_projection(basis: Basis1D) -> np.ndarray:
    """Pi = M^{-1} chi^T W, mapping quadrature values to solution coefficients."""
    rhs = basis.interp.T * basis.weights[None, :]
    cond = np.linalg.cond(basis.mass)
    if not np.isfinite(cond) or cond > 1e14:
        raise np.linalg.LinAlgError("mass matrix is singular")
    return np.linalg.solve(basis.mass, rhs)
