"""Periodic structured hexahedral meshes with a smooth warping map, and their
metric terms.

The cofactor matrix is stored as C[n, i] = J a^i_n, so the reference flux in
direction i is sum_n f_n C[n, i].  It is built in conservative-curl form,
J a^i_n = -(curl (x_l grad x_m))_i for (n, m, l) cyclic, from a polynomial
representation whose degree the volume quadrature resolves exactly.  That
makes the discrete divergence of C vanish to rounding and keeps the
face-normal metric identical on both sides of every face.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import LGL, Basis1D, lagrange_differentiation, lagrange_interpolation, quadrature_rule
from .tensor_kernels import _line_tables, apply_tensor_product

CURL = "conservative_curl"
CROSS = "cross_product"


class InvalidMeshError(ValueError):
    pass


def warp_map(a, b, c, beta: float, length_scale: float):
    l = length_scale
    x = a + beta * np.sin(a / l) * np.sin(b / l) * np.sin(2 * c / l)
    y = b + beta * np.sin(4 * a / l) * np.sin(b / l) * np.sin(3 * c / l)
    z = c + beta * np.sin(2 * a / l) * np.sin(5 * b / l) * np.sin(c / l)
    return np.stack([x, y, z])


@dataclass(frozen=True)
class CurvilinearMapping:
    """Tensor-product mapping of an M_x x M_y x M_z periodic box.

    ``control`` holds physical coordinates at LGL(degree+1) points of each
    element, shape (E, 3, g, g, g) with xi on the last axis.  Elements are
    numbered ex + M_x (ey + M_y ez).
    """

    n_elem: tuple
    lower: np.ndarray
    upper: np.ndarray
    beta: float
    length_scale: float
    degree: int
    nodes_1d: np.ndarray
    control: np.ndarray
    neighbors: np.ndarray = field(repr=False)   # (E, 3, 2)

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.n_elem))

    @property
    def element_size(self) -> np.ndarray:
        return (self.upper - self.lower) / np.asarray(self.n_elem)

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))


def _neighbors(n_elem) -> np.ndarray:
    Mx, My, Mz = n_elem
    ez, ey, ex = np.meshgrid(np.arange(Mz), np.arange(My), np.arange(Mx), indexing="ij")
    idx = np.stack([ex.ravel(), ey.ravel(), ez.ravel()], axis=1)
    out = np.empty((idx.shape[0], 3, 2), dtype=np.int64)
    for k in range(3):
        for side, step in ((0, -1), (1, 1)):
            nb = idx.copy()
            nb[:, k] = (nb[:, k] + step) % n_elem[k]
            out[:, k, side] = nb[:, 0] + Mx * (nb[:, 1] + My * nb[:, 2])
    return out


def warp_grid_3d(M_per_dir, beta: float, x_L, x_R, degree: int,
                 length_scale: float | None = None) -> CurvilinearMapping:
    """Warped periodic box; ``length_scale`` defaults to (x_R - x_L) / (2 pi)."""
    if beta < 0:
        raise ValueError("warping amplitude must be nonnegative")
    n_elem = tuple(int(m) for m in np.broadcast_to(M_per_dir, (3,)))
    lower = np.broadcast_to(np.asarray(x_L, dtype=float), (3,)).copy()
    upper = np.broadcast_to(np.asarray(x_R, dtype=float), (3,)).copy()
    if length_scale is None:
        length_scale = float((upper[0] - lower[0]) / (2 * np.pi))
    g = quadrature_rule(LGL, degree + 1).nodes
    h = (upper - lower) / np.asarray(n_elem)
    E = int(np.prod(n_elem))
    ids = np.arange(E)
    ex = ids % n_elem[0]
    ey = (ids // n_elem[0]) % n_elem[1]
    ez = ids // (n_elem[0] * n_elem[1])
    s = 0.5 * (g + 1.0)
    a = lower[0] + h[0] * (ex[:, None, None, None] + s[None, None, None, :])
    b = lower[1] + h[1] * (ey[:, None, None, None] + s[None, None, :, None])
    c = lower[2] + h[2] * (ez[:, None, None, None] + s[None, :, None, None])
    a, b, c = np.broadcast_arrays(a, b, c)
    X = np.moveaxis(warp_map(a, b, c, beta, length_scale), 0, 1)
    return CurvilinearMapping(n_elem, lower, upper, float(beta), float(length_scale),
                              degree, g, np.ascontiguousarray(X), _neighbors(n_elem))


@dataclass(frozen=True)
class MetricData:
    """Metric terms at volume quadrature nodes and face nodes.

    Face arrays are lists over faces 2k + side with node axis last (flat,
    xi-fastest over the tangential directions).
    """

    form: str
    J: np.ndarray            # (E, n, n, n)
    C: np.ndarray            # (E, 3, 3, n, n, n)
    x: np.ndarray            # (E, 3, n, n, n)
    C_face: list             # [(E, 3, 3, n*n)] * 6
    x_face: list             # [(E, 3, n*n)] * 6

    def face_normal_metric(self, face: int) -> np.ndarray:
        """C n^r at face nodes, shape (E, 3, n*n): J^Gamma times unit normal."""
        k, side = divmod(face, 2)
        sign = 1.0 if side else -1.0
        return sign * self.C_face[face][:, :, k]


def _interp_face(values: np.ndarray, face_1d: np.ndarray, face: int) -> np.ndarray:
    """Interpolate (..., n, n, n) volume values to a face, returning (..., n*n)."""
    k, side = divmod(face, 2)
    n = values.shape[-1]
    lines = _line_tables((n, n, n), k)
    flat = values.reshape(values.shape[:-3] + (n ** 3,))
    return np.einsum("...al,a->...l", flat[..., lines], face_1d[side])


def build_metrics_conservative_curl(mapping: CurvilinearMapping, basis: Basis1D,
                                    form: str = CURL) -> MetricData:
    """Metric Jacobian, cofactor matrix and face metrics on ``basis`` nodes.

    ``form="cross_product"`` evaluates C from the analytic cross products of
    the mapping derivatives instead; it is provided as a negative control
    that does not satisfy the discrete metric identities.
    """
    g_nodes = mapping.nodes_1d
    xq = basis.quad.nodes
    nq = xq.size
    X = mapping.control
    I_gq = lagrange_interpolation(g_nodes, xq)
    dI_gq = I_gq @ lagrange_differentiation(g_nodes)

    # covariant vectors a_i = dx/dxi_i at volume nodes, shape (E, 3 comp, 3 dir, ...)
    a = np.stack([apply_tensor_product([dI_gq if i == k else I_gq for k in range(3)], X)
                  for i in range(3)], axis=2)
    J = a[:, 0, 0] * (a[:, 1, 1] * a[:, 2, 2] - a[:, 2, 1] * a[:, 1, 2]) \
        - a[:, 0, 1] * (a[:, 1, 0] * a[:, 2, 2] - a[:, 2, 0] * a[:, 1, 2]) \
        + a[:, 0, 2] * (a[:, 1, 0] * a[:, 2, 1] - a[:, 2, 0] * a[:, 1, 1])
    if np.any(~np.isfinite(J)) or np.any(J <= 0):
        raise InvalidMeshError("non-positive metric Jacobian; the warping is too strong")

    if form == CURL:
        # The curl of products loses several digits to cancellation, so it is
        # evaluated in extended precision (where the platform provides it) and
        # rounded once at the end.
        ext = np.longdouble
        q = min(mapping.degree, nq - 1)
        y_nodes = quadrature_rule(LGL, q + 1).nodes.astype(ext)
        I_gy = lagrange_interpolation(g_nodes.astype(ext), y_nodes)
        Dy = lagrange_differentiation(y_nodes)
        Xe = X.astype(ext)
        # element-local origin: curl(c grad x_m) = 0 and small coordinates
        # keep the double differentiation from amplifying rounding
        origin = Xe.mean(axis=(2, 3, 4), keepdims=True)
        Xy = apply_tensor_product([I_gy] * 3, Xe - origin)

        def d(field, i):
            return apply_tensor_product([Dy if k == i else None for k in range(3)], field)

        grad = [[d(Xy[:, m], i) for i in range(3)] for m in range(3)]
        Cy = np.empty((X.shape[0], 3, 3) + Xy.shape[2:], dtype=ext)
        for nn in range(3):
            m, l = (nn + 1) % 3, (nn + 2) % 3
            Y = [Xy[:, l] * grad[m][i] for i in range(3)]
            Cy[:, nn, 0] = -(d(Y[2], 1) - d(Y[1], 2))
            Cy[:, nn, 1] = -(d(Y[0], 2) - d(Y[2], 0))
            Cy[:, nn, 2] = -(d(Y[1], 0) - d(Y[0], 1))
        I_yq = lagrange_interpolation(y_nodes, xq.astype(ext))
        C_ext = apply_tensor_product([I_yq] * 3, Cy)
        face_ext = lagrange_interpolation(xq.astype(ext), np.array([-1.0, 1.0], dtype=ext))
        C = C_ext.astype(float)
        C_face = [_interp_face(C_ext, face_ext, f).astype(float) for f in range(6)]
    elif form == CROSS:
        C = np.empty((X.shape[0], 3, 3) + J.shape[1:])
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            C[:, :, i] = np.cross(a[:, :, j], a[:, :, k], axis=1)
        C_face = [_interp_face(C, basis.flux_face, f) for f in range(6)]
    else:
        raise ValueError(f"unknown metric form {form!r}")

    x = apply_tensor_product([I_gq] * 3, X)
    x_face = [_interp_face(x, basis.flux_face, f) for f in range(6)]
    return MetricData(form, J, C, x, C_face, x_face)


def gcl_residual(metric: MetricData, basis: Basis1D) -> float:
    """max |sum_i d/dxi_i C[n, i]| at volume nodes using the flux basis."""
    D = basis.flux_diff
    div = sum(apply_tensor_product([D if k == i else None for k in range(3)],
                                   metric.C[:, :, i]) for i in range(3))
    return float(np.max(np.abs(div)))


def physical_normals(metric: MetricData, face: int):
    """Unit outward normals (E, 3, n*n) and surface Jacobian (E, n*n)."""
    Cn = metric.face_normal_metric(face)
    JG = np.linalg.norm(Cn, axis=1)
    if np.any(JG <= 0):
        raise InvalidMeshError("degenerate face with zero-length normal")
    return Cn / JG[:, None], JG


def export_grid_csv(metric: MetricData, path) -> None:
    """Write volume node coordinates as ``element,node,x,y,z`` rows."""
    E = metric.x.shape[0]
    pts = metric.x.reshape(E, 3, -1)
    with open(path, "w") as fh:
        fh.write("element,node,x,y,z\n")
        for e in range(E):
            for i in range(pts.shape[2]):
                fh.write(f"{e},{i},{pts[e, 0, i]:.17g},{pts[e, 1, i]:.17g},{pts[e, 2, i]:.17g}\n")
