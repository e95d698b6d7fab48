"""Residual assembly, time integration and the periodic-box driver.

Arrays carry the five conservative states on axis 0 and elements on axis 1,
followed by the tensor-grid axes (zeta, eta, xi).  Solution coefficients are
nodal values at LGL(p+1) points.

Two residuals are provided:

* NSFR: entropy-projected two-point flux differencing on the hybridized
  volume/face operator, plus surface numerical fluxes, premultiplied by the
  inverse of the FR-modified mass matrix.
* Conservative strong-form DG with the flux basis collocated on the volume
  quadrature (overintegration gives the usual polynomial dealiasing).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import euler
from .basis import Basis1D, build_basis, l2_projection
from .euler import FluxState, InadmissibleStateError
from .fr_operators import (build_correction_operator, build_fr_projection,
                           element_mass, tensor_weights, weight_adjusted_inverse_apply)
from .geometry import CURL, CurvilinearMapping, MetricData, build_metrics_conservative_curl
from .tensor_kernels import (_line_tables, _upper_pairs, apply_tensor_product,
                             kron_operator, line_weights)

NSFR_EC = "NSFR_EC"
DG_CONSERVATIVE = "DG_conservative"
SURFACE_EC = "EC"
SURFACE_EC_ROE = "EC_plus_Roe"
SURFACE_ROE = "Roe"


class SimulationFailure(RuntimeError):
    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t = {t:.17g})")
        self.t = t


@dataclass(frozen=True)
class SolverConfig:
    p: int = 3
    scheme: str = NSFR_EC
    c_1d: float = 0.0
    quadrature: str = "GL"
    overintegration: int = 0
    volume_flux: str = euler.CHANDRASHEKAR_RANOCHA
    surface_flux: str = SURFACE_EC
    cfl: float = 0.1
    use_weight_adjusted: bool = True
    metric_form: str = CURL
    gamma: float = euler.GAMMA

    def __post_init__(self):
        if self.scheme not in (NSFR_EC, DG_CONSERVATIVE):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == NSFR_EC and self.volume_flux not in euler.EC_FLUX_KINDS + (euler.CENTRAL,):
            raise ValueError(f"unknown volume flux {self.volume_flux!r}")
        if self.surface_flux not in (SURFACE_EC, SURFACE_EC_ROE, SURFACE_ROE):
            raise ValueError(f"unknown surface flux {self.surface_flux!r}")
        if self.c_1d < 0:
            raise ValueError("c_1d must be nonnegative")
        if self.p < 1 or self.overintegration < 0:
            raise ValueError("need p >= 1 and overintegration >= 0")


def _flux_along(kind: str, L: FluxState, R: FluxState, nvec: np.ndarray,
                gamma: float) -> np.ndarray:
    """Two-point flux contracted with a (non-unit) direction vector, (5, ...)."""
    if kind == euler.CENTRAL:
        fL = L.flux if L.flux is not None else euler.physical_flux(L.u, gamma)
        fR = R.flux if R.flux is not None else euler.physical_flux(R.u, gamma)
        return 0.5 * np.einsum("ik...,k...->i...", fL + fR, nvec)
    if kind == euler.ISMAIL_ROE:
        return np.einsum("ik...,k...->i...", euler._ismail_roe(L, R, gamma), nvec)
    rho_ln = euler.log_mean(L.rho, R.rho, L.log_rho, R.log_rho)
    beta_ln = euler.log_mean(L.beta, R.beta, L.log_beta, R.log_beta)
    vel = 0.5 * (L.vel + R.vel)
    vn = vel[0] * nvec[0] + vel[1] * nvec[1] + vel[2] * nvec[2]
    f_rho = rho_ln * vn
    internal = 1.0 / (2.0 * (gamma - 1.0) * beta_ln)
    out = np.empty((5,) + f_rho.shape)
    out[0] = f_rho
    if kind == euler.CHANDRASHEKAR_RANOCHA:
        p_avg = 0.5 * (L.p + R.p)
        out[1:4] = f_rho * vel + p_avg * nvec
        kin = 0.5 * (L.vel[0] * R.vel[0] + L.vel[1] * R.vel[1] + L.vel[2] * R.vel[2])
        vnL = L.vel[0] * nvec[0] + L.vel[1] * nvec[1] + L.vel[2] * nvec[2]
        vnR = R.vel[0] * nvec[0] + R.vel[1] * nvec[1] + R.vel[2] * nvec[2]
        out[4] = f_rho * (internal + kin) + 0.5 * (L.p * vnR + R.p * vnL)
    elif kind == euler.CHANDRASHEKAR:
        p_hat = 0.5 * (L.rho + R.rho) / (L.beta + R.beta)
        out[1:4] = f_rho * vel + p_hat * nvec
        kin = 0.25 * (L.ke2 + R.ke2)
        out[4] = f_rho * (internal - kin) + vel[0] * out[1] + vel[1] * out[2] + vel[2] * out[3]
    else:
        raise ValueError(f"unknown two-point flux kind {kind!r}")
    return out


def _pressure_along(L: FluxState, R: FluxState, nvec: np.ndarray, gamma: float) -> np.ndarray:
    """Pressure-only two-point term (0, (p_L + p_R)/2 n, 0)."""
    out = np.zeros((5,) + np.shape(nvec[0] * L.p))
    out[1:4] = 0.5 * (L.p + R.p) * nvec
    return out


@dataclass
class ResidualParts:
    """Intermediate quantities of one residual evaluation, for diagnostics."""

    dudt: np.ndarray
    bracket: np.ndarray                 # (M+K) dudt = -bracket (+ source)
    u_quad: np.ndarray | None = None    # interpolated states at volume nodes
    v_hat: np.ndarray | None = None     # projected entropy variables
    u_face: np.ndarray | None = None    # face states (5, E, 6 Nf), face-major
    v_face: np.ndarray | None = None
    face_flux: np.ndarray | None = None # f* . (C n^r) with each element's own sign
    source: np.ndarray | None = None


class Discretization:
    """Operators, metrics and residuals for one mesh and configuration."""

    def __init__(self, config: SolverConfig, mapping: CurvilinearMapping,
                 source: Callable | None = None):
        self.config = config
        self.mapping = mapping
        self.source = source
        self.gamma = config.gamma
        self.basis: Basis1D = build_basis(config.p, config.quadrature, config.overintegration)
        b = self.basis
        self.n_sol = b.n_sol
        self.n_quad = b.n_quad
        self.E = mapping.n_elements
        self.metric: MetricData = build_metrics_conservative_curl(mapping, b, config.metric_form)
        m = self.metric
        n = self.n_quad
        self.Nv = n ** 3
        self.Nf = n * n
        self.proj = l2_projection(b)
        self.fr_proj = build_fr_projection(b, config.c_1d)
        self.W = tensor_weights(b.weights, 3)
        self.J = m.J
        self.WJ = self.W[None] * m.J
        # state-first layouts: (3, 3, E, N) and per face (3, 3, E, Nf)
        self.C_flat = np.ascontiguousarray(np.moveaxis(m.C, 0, 2).reshape(3, 3, self.E, -1))
        self.C_face = [np.ascontiguousarray(np.moveaxis(cf, 0, 2)) for cf in m.C_face]
        self.face_w = [line_weights([b.weights] * 3, f // 2) for f in range(6)]
        self.neighbors = mapping.neighbors
        self.skew_1d = b.weights[:, None] * b.flux_diff - (b.weights[:, None] * b.flux_diff).T
        self.x_quad = m.x
        h = mapping.upper - mapping.lower
        self.dx = float(np.min(h / (np.asarray(mapping.n_elem) * (config.p + 1))))
        self.provider_calls = 0
        self._dense_mass_chol = None
        self._conserved_weights = None
        self._tables_built = False
        self._build_face_tables()

    def _build_face_tables(self):
        n, E, Nf = self.n_quad, self.E, self.Nf
        self.vol_lines = [_line_tables((n, n, n), k) for k in range(3)]
        self.face_w_all = np.concatenate(self.face_w)
        # interface pairing on the flattened (E * 6 Nf) face layout: plus faces
        # of each element against the minus faces of its upper neighbours
        e = np.arange(E)[:, None]
        j = np.arange(Nf)[None, :]
        left, right = [], []
        for k in range(3):
            nb = self.neighbors[:, k, 1][:, None]
            left.append(e * 6 * Nf + (2 * k + 1) * Nf + j)
            right.append(nb * 6 * Nf + 2 * k * Nf + j)
        self.if_left = np.concatenate(left, axis=1)      # (E, 3 Nf)
        self.if_right = np.concatenate(right, axis=1)
        self.if_Cn = np.concatenate([self.C_face[2 * k + 1][:, k] for k in range(3)], axis=-1)

    def _build_pair_tables(self):
        """Index tables and metric averages for the batched Hadamard kernels.

        Volume pairs of all three directions sit side by side on the line
        axis; face nodes of the six faces are concatenated face-major.
        """
        if self._tables_built:
            return
        self._tables_built = True
        n, E, Nv, Nf = self.n_quad, self.E, self.Nv, self.Nf
        b = self.basis
        a, bb, incidence = _upper_pairs(n)
        self.incidence = incidence
        I = np.concatenate([ln[a] for ln in self.vol_lines], axis=1)
        J = np.concatenate([ln[bb] for ln in self.vol_lines], axis=1)
        self.vol_I, self.vol_J = I, J
        self.vol_coef = np.concatenate(
            [self.skew_1d[a, bb][:, None] * line_weights([b.weights] * 3, k)[None, :]
             for k in range(3)], axis=1)
        dir_offset = np.repeat(np.arange(3) * Nv, Nf)[None, :]
        # C[:, k] for each direction stacked direction-major: (3, E, 3 Nv)
        Cdir = np.concatenate([self.C_flat[:, k] for k in range(3)], axis=-1)
        self.vol_Cavg = 0.5 * (Cdir[:, :, I + dir_offset] + Cdir[:, :, J + dir_offset])

        self.surf_vol = np.concatenate([self.vol_lines[f // 2] for f in range(6)], axis=1)
        self.surf_face = np.concatenate(
            [np.broadcast_to(np.arange(Nf) + f * Nf, (n, Nf)) for f in range(6)], axis=1)
        self.surf_coef = np.concatenate(
            [(1.0 if f % 2 else -1.0) * b.flux_face[f % 2][:, None] * self.face_w[f][None, :]
             for f in range(6)], axis=1)
        Cf_dir = np.concatenate([self.C_face[f][:, f // 2] for f in range(6)], axis=-1)
        face_dir = np.repeat(np.arange(6) // 2, Nf)
        vol_side = Cdir[:, :, self.surf_vol + face_dir[None, :] * Nv]
        self.surf_Cavg = 0.5 * (vol_side + Cf_dir[:, :, None, :])

    def interpolate(self, uhat: np.ndarray) -> np.ndarray:
        return _apply_about_reference([self.basis.interp] * 3, uhat)

    def project(self, q: np.ndarray) -> np.ndarray:
        return _apply_about_reference([self.proj] * 3, q)

    def face_values(self, coeffs: np.ndarray, face: int) -> np.ndarray:
        """Solution-basis coefficients evaluated at one face's nodes, (..., Nf)."""
        k, side = divmod(face, 2)
        ops = [self.basis.interp] * 3
        ops[k] = self.basis.face[side][None, :]
        out = _apply_about_reference(ops, coeffs)
        return out.reshape(out.shape[:-3] + (self.Nf,))

    def all_face_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Values at the nodes of all six faces, (..., 6 Nf) face-major."""
        ref = coeffs[..., :1, :1, :1]
        dev = coeffs - ref
        lead = coeffs.shape[:-3]
        blocks = []
        for k in range(3):
            ops = [self.basis.interp] * 3
            ops[k] = self.basis.face
            out = np.moveaxis(apply_tensor_product(ops, dev), -1 - k, -3)
            blocks.append(out.reshape(lead + (2 * self.Nf,)))
        return ref[..., 0, 0] + np.concatenate(blocks, axis=-1)

    def face_transpose(self, values: np.ndarray, face: int) -> np.ndarray:
        """chi(xi_f)^T applied to face-node values (..., Nf)."""
        k, side = divmod(face, 2)
        n = self.n_quad
        shape = [n, n, n]
        shape[2 - k] = 1
        arr = values.reshape(values.shape[:-1] + tuple(shape))
        ops = [self.basis.interp.T] * 3
        ops[k] = self.basis.face[side][:, None]
        return apply_tensor_product(ops, arr)

    def all_faces_transpose(self, values: np.ndarray) -> np.ndarray:
        """sum_f chi(xi_f)^T values_f for face-major values (..., 6 Nf)."""
        n = self.n_quad
        lead = values.shape[:-1]
        out = 0.0
        for k in range(3):
            blk = values[..., 2 * k * self.Nf:(2 * k + 2) * self.Nf].reshape(lead + (2, n, n))
            blk = np.moveaxis(blk, -3, -1 - k)
            ops = [self.basis.interp.T] * 3
            ops[k] = self.basis.face.T
            out = out + apply_tensor_product(ops, blk)
        return out

    def volume_transpose(self, values: np.ndarray) -> np.ndarray:
        n = self.n_quad
        arr = values.reshape(values.shape[:-1] + (n, n, n))
        return apply_tensor_product([self.basis.interp.T] * 3, arr)

    # ------------------------------------------------------------ mass matrix
    def element_modified_mass(self, e: int) -> np.ndarray:
        b, c = self.basis, self.config.c_1d
        return element_mass(b, self.J[e], 3) + build_correction_operator(b, self.J[e], c, 3)

    def _cholesky(self):
        if self._dense_mass_chol is None:
            self._dense_mass_chol = np.stack([np.linalg.cholesky(self.element_modified_mass(e))
                                              for e in range(self.E)])
        return self._dense_mass_chol

    def apply_inverse_mass(self, rhs: np.ndarray) -> np.ndarray:
        """(M_m + K_m)^{-1} rhs, weight-adjusted or exact per configuration."""
        if self.config.use_weight_adjusted:
            return weight_adjusted_inverse_apply(self.fr_proj, self.J, self.basis.weights, rhs, 3)
        L = self._cholesky()
        s = self.n_sol
        flat = np.moveaxis(rhs.reshape(rhs.shape[0], self.E, s ** 3), 0, -1)  # (E, Np, 5)
        y = np.linalg.solve(L, flat)
        x = np.linalg.solve(np.swapaxes(L, 1, 2), y)
        return np.moveaxis(x, -1, 0).reshape(rhs.shape)

    def conserved_weights(self) -> np.ndarray:
        """z_m with z_m . u_hat_m = 1^T (mass) u_hat_m for the scheme's mass."""
        if self._conserved_weights is None:
            s = self.n_sol
            Np = s ** 3
            if self.config.use_weight_adjusted:
                eye = np.eye(Np).reshape(Np, 1, s, s, s)
                cols = np.stack([weight_adjusted_inverse_apply(
                    self.fr_proj, self.J[e], self.basis.weights, eye, 3).reshape(Np, Np)
                    for e in range(self.E)])
                z = np.linalg.solve(cols, np.ones((self.E, Np, 1)))[..., 0]
            else:
                z = np.stack([self.element_modified_mass(e) @ np.ones(Np) for e in range(self.E)])
            self._conserved_weights = z.reshape(self.E, s, s, s)
        return self._conserved_weights

    def conserved_totals(self, uhat: np.ndarray) -> np.ndarray:
        z = self.conserved_weights()
        return np.sum(uhat * z[None], axis=(1, 2, 3, 4))

    # ----------------------------------------------------------- flux kernels
    def volume_hadamard(self, S: FluxState, flux_fn: Callable) -> np.ndarray:
        """Volume-volume block of [(Q~ - Q~^T) o F] 1 at volume nodes, (5, E, Nv).

        ``flux_fn(L, R, nvec)`` returns the two-point flux contracted with
        the averaged metric column; only pairs a < b along lines are formed.
        """
        self._build_pair_tables()
        vals = flux_fn(S.take(self.vol_I), S.take(self.vol_J), self.vol_Cavg)
        contrib = self.incidence @ (vals * self.vol_coef)
        out = np.zeros((vals.shape[0], self.E, self.Nv))
        NL = self.Nf
        for k in range(3):
            out[..., self.vol_lines[k]] += contrib[..., k * NL:(k + 1) * NL]
        self.provider_calls += self.E * self.vol_I.size
        return out

    def surface_hadamard(self, S: FluxState, S_face: FluxState, flux_fn: Callable):
        """Volume-face blocks: volume part (5, E, Nv) and face part (5, E, 6 Nf)."""
        self._build_pair_tables()
        vals = flux_fn(S.take(self.surf_vol), S_face.take(self.surf_face), self.surf_Cavg)
        prod = vals * self.surf_coef
        vol = np.zeros((vals.shape[0], self.E, self.Nv))
        Nf = self.Nf
        for f in range(6):
            vol[..., self.vol_lines[f // 2]] += prod[..., f * Nf:(f + 1) * Nf]
        self.provider_calls += self.E * self.surf_vol.size
        return vol, -prod.sum(axis=-2)

    def _gather_faces(self, arr: np.ndarray, idx: np.ndarray) -> np.ndarray:
        lead = arr.shape[:-2]
        return arr.reshape(lead + (-1,))[..., idx]

    def interface_fluxes(self, u_face: np.ndarray, S_face: FluxState, kind: str,
                         flux_fn: Callable | None = None) -> np.ndarray:
        """f* . (C n^r) on all faces, (5, E, 6 Nf), each element with its own sign.

        Each interface is evaluated once with the left element's normal
        metric and scattered with opposite signs to both sides.
        """
        SL = FluxState(None)
        SL.data = self._gather_faces(S_face.data, self.if_left)
        SR = FluxState(None)
        SR.data = self._gather_faces(S_face.data, self.if_right)
        Cn = self.if_Cn
        if flux_fn is not None:
            fs = flux_fn(SL, SR, Cn)
        else:
            uL = self._gather_faces(u_face, self.if_left)
            uR = self._gather_faces(u_face, self.if_right)
            fs = self._numerical_flux(kind, uL, uR, SL, SR, Cn)
        out = np.empty((fs.shape[0], self.E * 6 * self.Nf))
        out[:, self.if_left.ravel()] = fs.reshape(fs.shape[0], -1)
        out[:, self.if_right.ravel()] = -fs.reshape(fs.shape[0], -1)
        return out.reshape(fs.shape[0], self.E, 6 * self.Nf)

    def _numerical_flux(self, kind: str, uL, uR, SL: FluxState, SR: FluxState, Cn):
        """Interface flux f* . Cn for left/right states."""
        cfg = self.config
        if cfg.surface_flux == SURFACE_ROE:
            JG = np.linalg.norm(Cn, axis=0)
            return JG * euler.roe_flux(uL, uR, Cn / JG, self.gamma)
        f = _flux_along(kind, SL, SR, Cn, self.gamma)
        if cfg.surface_flux == SURFACE_EC_ROE:
            f = f + self._roe_entropy_dissipation(SL, SR, uL, uR, Cn)
        return f

    def _roe_entropy_dissipation(self, SL, SR, uL, uR, Cn):
        JG = np.linalg.norm(Cn, axis=0)
        rho = euler.log_mean(SL.rho, SR.rho, SL.log_rho, SR.log_rho)
        vel = 0.5 * (SL.vel + SR.vel)
        p = 0.5 * (SL.rho + SR.rho) / (SL.beta + SR.beta)
        D = euler.entropy_jump_dissipation_matrix(rho, vel, p, Cn / JG, self.gamma)
        jump = euler.entropy_variables(uR, self.gamma) - euler.entropy_variables(uL, self.gamma)
        return -0.5 * JG * np.einsum("ij...,j...->i...", D, jump)

    def face_slice(self, arr: np.ndarray, face: int) -> np.ndarray:
        return arr[..., face * self.Nf:(face + 1) * self.Nf]

    def assemble_bracket(self, vol: np.ndarray, faces: np.ndarray) -> np.ndarray:
        """chi^T vol + sum_f chi_f^T faces_f for volume/face-node values."""
        return self.volume_transpose(vol) + self.all_faces_transpose(faces)

    # -------------------------------------------------------------- residuals
    def entropy_project(self, uhat: np.ndarray):
        """Interpolated states, projected entropy variables and the
        entropy-projected states at volume (5, E, Nv) and face (5, E, 6 Nf) nodes."""
        uq = self.interpolate(uhat)
        v = euler.entropy_variables(uq, self.gamma)
        vhat = self.project(v)
        vq = self.interpolate(vhat).reshape(5, self.E, self.Nv)
        vf = self.all_face_values(vhat)
        try:
            ut = euler.entropy_to_conservative(vq, self.gamma)
            uf = euler.entropy_to_conservative(vf, self.gamma)
        except InadmissibleStateError as exc:
            raise InadmissibleStateError(f"entropy projection failed: {exc}") from exc
        return uq, vhat, ut, uf, vq, vf

    def _source_term(self, t: float) -> np.ndarray | None:
        if self.source is None:
            return None
        x = self.x_quad
        q = self.source(x[:, 0], x[:, 1], x[:, 2], t)     # (5, E, n, n, n)
        return apply_tensor_product([self.basis.interp.T] * 3, q * self.WJ[None])

    def nsfr_residual(self, uhat: np.ndarray, t: float = 0.0, parts: bool = False):
        cfg = self.config
        uq, vhat, ut, uf, vq, vf = self.entropy_project(uhat)
        need = cfg.volume_flux == euler.CENTRAL
        S = FluxState(ut, self.gamma, need_flux=need)
        Sf = FluxState(uf, self.gamma, need_flux=need)
        kind = cfg.volume_flux

        def fs(L, R, nvec):
            return _flux_along(kind, L, R, nvec, self.gamma)

        vol = self.volume_hadamard(S, fs)
        vol_s, faces = self.surface_hadamard(S, Sf, fs)
        vol += vol_s
        fstar = self.interface_fluxes(uf, Sf, kind)
        bracket = self.assemble_bracket(vol, faces + self.face_w_all * fstar)
        src = self._source_term(t)
        rhs = -bracket if src is None else src - bracket
        dudt = self.apply_inverse_mass(rhs)
        if not parts:
            return dudt
        return ResidualParts(dudt, bracket, uq, vhat, uf, vf, fstar, src)

    def dg_conservative_residual(self, uhat: np.ndarray, t: float = 0.0, parts: bool = False):
        cfg = self.config
        b = self.basis
        uq = self.interpolate(uhat)
        euler.check_admissible(uq, self.gamma)
        f = euler.physical_flux(uq, self.gamma)                      # (5, 3, E, n, n, n)
        C = np.moveaxis(self.metric.C, 0, 2)                          # (3, 3, E, n, n, n)
        vol = np.zeros_like(uq)
        fref = []
        for k in range(3):
            fk = np.einsum("vi...,i...->v...", f, C[:, k])
            fref.append(fk.reshape(5, self.E, self.Nv))
            vol += apply_tensor_product([b.flux_diff if j == k else None for j in range(3)], fk)
        uf = self.all_face_values(uhat)
        euler.check_admissible(uf, self.gamma)
        Sf = FluxState(uf, self.gamma)
        fstar = self.interface_fluxes(uf, Sf, cfg.volume_flux)
        # interpolated interior normal flux at the face nodes
        interior = np.empty_like(fstar)
        for fc in range(6):
            k, side = divmod(fc, 2)
            sign = 1.0 if side else -1.0
            vals = np.einsum("veal,a->vel", fref[k][..., self.vol_lines[k]], b.flux_face[side])
            interior[..., fc * self.Nf:(fc + 1) * self.Nf] = sign * vals
        bracket = apply_tensor_product([b.interp.T] * 3, vol * self.W) \
            + self.all_faces_transpose(self.face_w_all * (fstar - interior))
        src = self._source_term(t)
        rhs = -bracket if src is None else src - bracket
        dudt = self.apply_inverse_mass(rhs)
        if not parts:
            return dudt
        return ResidualParts(dudt, bracket, uq, None, uf, None, fstar, src)

    def residual(self, uhat: np.ndarray, t: float = 0.0, parts: bool = False):
        if self.config.scheme == NSFR_EC:
            return self.nsfr_residual(uhat, t, parts)
        return self.dg_conservative_residual(uhat, t, parts)

    # --------------------------------------------------------------- helpers
    def initial_condition(self, fn: Callable) -> np.ndarray:
        """Interpolate an analytic state at the LGL solution nodes."""
        x = self.solution_coordinates()
        return fn(x[:, 0], x[:, 1], x[:, 2])

    def solution_coordinates(self) -> np.ndarray:
        from .basis import lagrange_interpolation
        I = lagrange_interpolation(self.mapping.nodes_1d, self.basis.solution_nodes)
        return apply_tensor_product([I] * 3, self.mapping.control)

    def max_wavespeed(self, uhat: np.ndarray) -> float:
        uq = self.interpolate(uhat)
        rho, vel, p = euler.primitive(uq, self.gamma)
        lam = np.sqrt(np.sum(vel * vel, axis=0)) + np.sqrt(self.gamma * p / rho)
        return float(np.max(lam))


def _apply_about_reference(ops, x: np.ndarray) -> np.ndarray:
    """Apply constant-reproducing operators to deviations from one nodal value
    per element, so uniform fields map to bitwise-uniform fields."""
    ref = x[..., :1, :1, :1]
    return ref + apply_tensor_product(ops, x - ref)


def adaptive_dt(disc: Discretization, uhat: np.ndarray, cfl: float) -> float:
    """dt = cfl * dx / max(|u| + a) over volume quadrature nodes."""
    lam = disc.max_wavespeed(uhat)
    if lam <= 0 or not math.isfinite(lam):
        if lam == 0:
            return cfl * disc.dx
        raise SimulationFailure("non-finite wave speed", float("nan"))
    return cfl * disc.dx / lam


def rk4_step(u: np.ndarray, t: float, dt: float, rhs: Callable) -> np.ndarray:
    """Classical four-stage Runge-Kutta step."""
    if dt <= 0:
        raise ValueError("time step must be positive")
    k1 = rhs(u, t)
    k2 = rhs(u + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = rhs(u + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = rhs(u + dt * k3, t + dt)
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class SimulationResult:
    t: float
    uhat: np.ndarray
    steps: int
    records: list = field(default_factory=list)


def run_simulation(disc: Discretization, uhat0: np.ndarray, t_final: float,
                   callbacks: list | tuple = (), output_every: int = 1,
                   dt_fixed: float | None = None, max_steps: int | None = None) -> SimulationResult:
    """Integrate to ``t_final`` with adaptive (or fixed) RK4 steps.

    Each callback is called as ``cb(disc, uhat, t, step)`` at t = 0, every
    ``output_every`` steps and at the final time; non-None return values
    are collected in ``records``.
    """
    u = uhat0.copy()
    t = 0.0
    step = 0
    records = []

    def emit():
        for cb in callbacks:
            rec = cb(disc, u, t, step)
            if rec is not None:
                records.append(rec)

    emit()
    rhs = disc.residual
    while t < t_final * (1 - 1e-14):
        if max_steps is not None and step >= max_steps:
            break
        try:
            dt = dt_fixed if dt_fixed is not None else adaptive_dt(disc, u, disc.config.cfl)
            dt = min(dt, t_final - t)
            u = rk4_step(u, t, dt, rhs)
        except (InadmissibleStateError, FloatingPointError) as exc:
            raise SimulationFailure(str(exc), t) from exc
        if not np.all(np.isfinite(u)):
            raise SimulationFailure("non-finite solution", t)
        try:
            euler.check_admissible(u, disc.gamma)
        except InadmissibleStateError as exc:
            raise SimulationFailure(str(exc), t + dt) from exc
        t += dt
        step += 1
        if step % output_every == 0 or t >= t_final * (1 - 1e-14):
            emit()
    return SimulationResult(t, u, step, records)


def with_overrides(config: SolverConfig, **kw) -> SolverConfig:
    return replace(config, **kw)


def dense_kron_interp(basis: Basis1D) -> np.ndarray:
    return kron_operator([basis.interp] * 3)


# ------------------------------------------------------------- checkpoints
CHECKPOINT_MAGIC = "# nsfr checkpoint v1"


def write_checkpoint(path, disc: Discretization, uhat: np.ndarray, t: float) -> None:
    """Plain-text dump: header lines, then per element one line of nodal
    coefficients per state, 17 significant digits (round-trips exactly)."""
    cfg = disc.config
    with open(path, "w") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        fh.write(f"p = {cfg.p}\n")
        fh.write("M = " + " ".join(str(m) for m in disc.mapping.n_elem) + "\n")
        fh.write(f"scheme = {cfg.scheme}\n")
        fh.write(f"t = {t:.17g}\n")
        for e in range(uhat.shape[1]):
            fh.write(f"element {e}\n")
            for s in range(uhat.shape[0]):
                fh.write(" ".join(f"{v:.17g}" for v in uhat[s, e].ravel()) + "\n")


def read_checkpoint(path):
    """Returns (header dict with p, M, scheme, t; coefficients (5, E, n, n, n))."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    header = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("element"):
        key, _, value = lines[i].partition("=")
        header[key.strip()] = value.strip()
        i += 1
    try:
        p = int(header["p"])
        M = tuple(int(m) for m in header["M"].split())
        info = {"p": p, "M": M, "scheme": header["scheme"], "t": float(header["t"])}
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: malformed checkpoint header") from exc
    n = p + 1
    E = int(np.prod(M))
    out = np.empty((5, E, n, n, n))
    for e in range(E):
        if lines[i] != f"element {e}":
            raise ValueError(f"{path}: expected block for element {e} at line {i + 1}")
        for s in range(5):
            out[s, e] = np.array(lines[i + 1 + s].split(), dtype=float).reshape(n, n, n)
        i += 6
    return info, out
