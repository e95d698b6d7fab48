"""Compressible Euler state algebra and two-point fluxes.

States are arrays with the five conservative components on axis 0:
(rho, rho u, rho v, rho w, rho e).  All functions broadcast over the
remaining axes.  The entropy pair is U = -rho s / (gamma - 1) with
s = ln p - gamma ln rho, for which the entropy potential is psi^k = rho u_k.
"""
from __future__ import annotations

import numpy as np

GAMMA = 1.4

CHANDRASHEKAR = "Chandrashekar"
CHANDRASHEKAR_RANOCHA = "ChandrasekharRanochaFix"
ISMAIL_ROE = "IsmailRoe"
CENTRAL = "CentralConservative"
FLUX_KINDS = (CHANDRASHEKAR, CHANDRASHEKAR_RANOCHA, ISMAIL_ROE, CENTRAL)
EC_FLUX_KINDS = (CHANDRASHEKAR, CHANDRASHEKAR_RANOCHA, ISMAIL_ROE)

# log-mean switches to its series below this squared relative difference
LOGMEAN_SERIES_THRESHOLD = 1e-4


class InadmissibleStateError(ValueError):
    """Raised for non-positive density/pressure or entropy variables with v5 >= 0."""


def primitive(u: np.ndarray, gamma: float = GAMMA):
    rho = u[0]
    vel = u[1:4] / rho
    p = (gamma - 1.0) * (u[4] - 0.5 * rho * np.sum(vel * vel, axis=0))
    return rho, vel, p


def conservative(rho, vel, p, gamma: float = GAMMA) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    vel = np.asarray(vel, dtype=float)
    E = np.asarray(p) / (gamma - 1.0) + 0.5 * rho * np.sum(vel * vel, axis=0)
    return np.concatenate([rho[None], rho[None] * vel, E[None]], axis=0)


def pressure(u: np.ndarray, gamma: float = GAMMA) -> np.ndarray:
    return primitive(u, gamma)[2]


def sound_speed(u: np.ndarray, gamma: float = GAMMA) -> np.ndarray:
    rho, _, p = primitive(u, gamma)
    return np.sqrt(gamma * p / rho)


def check_admissible(u: np.ndarray, gamma: float = GAMMA):
    rho, _, p = primitive(u, gamma)
    bad = ~((rho > 0) & (p > 0))
    if np.any(bad):
        raise InadmissibleStateError(
            f"{int(np.count_nonzero(bad))} states with non-positive density or pressure")


def physical_flux(u: np.ndarray, gamma: float = GAMMA) -> np.ndarray:
    """Flux tensor with shape (5, 3, ...); [:, k] is the flux in direction k."""
    rho, vel, p = primitive(u, gamma)
    f = np.empty((5, 3) + np.shape(rho))
    for k in range(3):
        m = u[0] * vel[k]
        f[0, k] = m
        f[1:4, k] = m * vel
        f[1 + k, k] += p
        f[4, k] = (u[4] + p) * vel[k]
    return f


def entropy_function(u: np.ndarray, gamma: float = GAMMA) -> np.ndarray:
    rho, _, p = primitive(u, gamma)
    s = np.log(p) - gamma * np.log(rho)
    return -rho * s / (gamma - 1.0)


def entropy_variables(u: np.ndarray, gamma: float = GAMMA) -> np.ndarray:
    rho, vel, p = primitive(u, gamma)
    if np.any(rho <= 0) or np.any(p <= 0):
        raise InadmissibleStateError("entropy variables need positive density and pressure")
    s = np.log(p) - gamma * np.log(rho)
    b = rho / p
    v = np.empty_like(np.asarray(u, dtype=float))
    v[0] = (gamma - s) / (gamma - 1.0) - 0.5 * b * np.sum(vel * vel, axis=0)
    v[1:4] = b * vel
    v[4] = -b
    return v


def entropy_to_conservative(v: np.ndarray, gamma: float = GAMMA) -> np.ndarray:
    v5 = v[4]
    if np.any(~(v5 < 0)):
        raise InadmissibleStateError("entropy variables with v5 >= 0 have no conservative state")
    vm2 = np.sum(v[1:4] * v[1:4], axis=0)
    s = gamma - (gamma - 1.0) * (v[0] - 0.5 * vm2 / v5)
    rho = (-v5 * np.exp(s)) ** (1.0 / (1.0 - gamma))
    p = rho / (-v5)
    vel = v[1:4] / (-v5)
    return conservative(rho, vel, p, gamma)


def entropy_flux(u: np.ndarray, gamma: float = GAMMA) -> np.ndarray:
    """F^k = U u_k, shape (3, ...)."""
    rho, vel, _ = primitive(u, gamma)
    return entropy_function(u, gamma)[None] * vel


def entropy_potential(u: np.ndarray, k: int | None = None, gamma: float = GAMMA):
    """psi^k = v . f^k - F^k, which equals rho u_k for this entropy."""
    psi = u[1:4].copy()
    return psi if k is None else psi[k]


def entropy_potential_from_definition(u: np.ndarray, gamma: float = GAMMA) -> np.ndarray:
    v = entropy_variables(u, gamma)
    f = physical_flux(u, gamma)
    return np.einsum("i...,ik...->k...", v, f) - entropy_flux(u, gamma)


def kinetic_energy_variables(u: np.ndarray) -> np.ndarray:
    vel = u[1:4] / u[0]
    out = np.zeros_like(np.asarray(u, dtype=float))
    out[0] = -0.5 * np.sum(vel * vel, axis=0)
    out[1:4] = vel
    return out


def log_mean(a, b, log_a=None, log_b=None):
    """Logarithmic mean (a - b) / (ln a - ln b) with a series guard near a = b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    f = (a - b) / (a + b)
    u = f * f
    small = u < LOGMEAN_SERIES_THRESHOLD
    series = 1.0 + u / 3.0 + u * u / 5.0 + u * u * u / 7.0
    if log_a is None:
        log_a = np.log(a)
    if log_b is None:
        log_b = np.log(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(small, 1.0, (log_a - log_b) / np.where(small, 1.0, 2.0 * f))
    F = np.where(small, series, ratio)
    return 0.5 * (a + b) / F


class FluxState:
    """Node-wise quantities reused by every two-point flux evaluation.

    Everything is stacked in one array (field rows first) so that gathering
    node pairs is a single ``take``.  Rows: rho, velocity (3), p, beta,
    ln rho, ln beta, |u|^2, then optionally the state (5) and the physical
    flux (15).
    """

    __slots__ = ("data",)
    _BASE = 9

    def __init__(self, u: np.ndarray, gamma: float = GAMMA, need_flux: bool = False):
        if u is None:
            return
        rho, vel, p = primitive(u, gamma)
        rows = self._BASE + (20 if need_flux else 0)
        data = np.empty((rows,) + rho.shape)
        data[0] = rho
        data[1:4] = vel
        data[4] = p
        data[5] = 0.5 * rho / p
        np.log(data[0:1], out=data[6:7])
        np.log(data[5:6], out=data[7:8])
        data[8] = np.sum(vel * vel, axis=0)
        if need_flux:
            data[9:14] = u
            data[14:29] = physical_flux(u, gamma).reshape((15,) + rho.shape)
        self.data = data

    rho = property(lambda self: self.data[0])
    vel = property(lambda self: self.data[1:4])
    p = property(lambda self: self.data[4])
    beta = property(lambda self: self.data[5])
    log_rho = property(lambda self: self.data[6])
    log_beta = property(lambda self: self.data[7])
    ke2 = property(lambda self: self.data[8])

    @property
    def u(self):
        if self.data.shape[0] > self._BASE:
            return self.data[9:14]
        return conservative(self.rho, self.vel, self.p)

    @property
    def flux(self):
        if self.data.shape[0] > self._BASE:
            return self.data[14:29].reshape((5, 3) + self.data.shape[1:])
        return None

    def take(self, idx, axis=-1) -> "FluxState":
        """Gather node quantities along a node axis (negative axis counts
        from the end and must not reach the field axis)."""
        if axis >= 0:
            axis += 1
        out = FluxState(None)
        out.data = np.take(self.data, idx, axis=axis)
        return out

    def ismail_roe_parameters(self):
        z1 = np.sqrt(self.rho / self.p)
        z5 = np.sqrt(self.rho * self.p)
        return z1, z5, np.log(z1), np.log(z5)


def two_point_flux_states(kind: str, L: FluxState, R: FluxState,
                          gamma: float = GAMMA) -> np.ndarray:
    """Two-point flux tensor (5, 3, ...) between precomputed node states."""
    if kind == CENTRAL:
        fL = L.flux if L.flux is not None else physical_flux(L.u, gamma)
        fR = R.flux if R.flux is not None else physical_flux(R.u, gamma)
        return 0.5 * (fL + fR)
    if kind == ISMAIL_ROE:
        return _ismail_roe(L, R, gamma)
    rho_ln = log_mean(L.rho, R.rho, L.log_rho, R.log_rho)
    beta_ln = log_mean(L.beta, R.beta, L.log_beta, R.log_beta)
    vel = 0.5 * (L.vel + R.vel)
    out = np.empty((5, 3) + np.shape(rho_ln))
    f_rho = rho_ln * vel
    out[0] = f_rho
    for i in range(3):
        out[1 + i] = f_rho * vel[i]
    internal = 1.0 / (2.0 * (gamma - 1.0) * beta_ln)
    if kind == CHANDRASHEKAR:
        p_hat = 0.5 * (L.rho + R.rho) / (L.beta + R.beta)
        kin = 0.5 * 0.5 * (L.ke2 + R.ke2)
        for k in range(3):
            out[1 + k, k] += p_hat
        out[4] = f_rho * (internal - kin) + np.sum(vel[:, None] * out[1:4], axis=0)
    elif kind == CHANDRASHEKAR_RANOCHA:
        p_avg = 0.5 * (L.p + R.p)
        for k in range(3):
            out[1 + k, k] += p_avg
        kin = 0.5 * np.sum(L.vel * R.vel, axis=0)
        out[4] = f_rho * (internal + kin) + 0.5 * (L.p * R.vel + R.p * L.vel)
    else:
        raise ValueError(f"unknown two-point flux kind {kind!r}")
    return out


def _ismail_roe(L: FluxState, R: FluxState, gamma: float) -> np.ndarray:
    z1L, z5L, lz1L, lz5L = L.ismail_roe_parameters()
    z1R, z5R, lz1R, lz5R = R.ismail_roe_parameters()
    z1_avg = 0.5 * (z1L + z1R)
    z5_avg = 0.5 * (z5L + z5R)
    zu_avg = 0.5 * (z1L * L.vel + z1R * R.vel)
    z1_ln = log_mean(z1L, z1R, lz1L, lz1R)
    z5_ln = log_mean(z5L, z5R, lz5L, lz5R)
    rho = z1_avg * z5_ln
    vel = zu_avg / z1_avg
    p1 = z5_avg / z1_avg
    p2 = (gamma + 1.0) / (2.0 * gamma) * z5_ln / z1_ln \
        + (gamma - 1.0) / (2.0 * gamma) * z5_avg / z1_avg
    h = gamma * p2 / ((gamma - 1.0) * rho) + 0.5 * np.sum(vel * vel, axis=0)
    out = np.empty((5, 3) + np.shape(rho))
    f_rho = rho * vel
    out[0] = f_rho
    for i in range(3):
        out[1 + i] = f_rho * vel[i]
    for k in range(3):
        out[1 + k, k] += p1
    out[4] = f_rho * h
    return out


def two_point_flux(kind: str, uL: np.ndarray, uR: np.ndarray, k=None,
                   gamma: float = GAMMA) -> np.ndarray:
    """Symmetric two-point flux between conservative states.

    ``k`` selects a reference direction (int), a normal vector (array of
    length 3 broadcasting over the state axes), or None for the full
    (5, 3, ...) tensor.
    """
    if kind not in FLUX_KINDS:
        raise ValueError(f"unknown two-point flux kind {kind!r}")
    check_admissible(uL, gamma)
    check_admissible(uR, gamma)
    need = kind == CENTRAL
    F = two_point_flux_states(kind, FluxState(uL, gamma, need), FluxState(uR, gamma, need), gamma)
    if k is None:
        return F
    if isinstance(k, (int, np.integer)):
        return F[:, k]
    return np.einsum("ik...,k...->i...", F, np.asarray(k, dtype=float))


def _average_state(uL: np.ndarray, uR: np.ndarray, gamma: float):
    L, R = FluxState(uL, gamma), FluxState(uR, gamma)
    rho = log_mean(L.rho, R.rho, L.log_rho, R.log_rho)
    vel = 0.5 * (L.vel + R.vel)
    p = 0.5 * (L.rho + R.rho) / (L.beta + R.beta)
    return rho, vel, p


def entropy_jump_dissipation_matrix(rho, vel, p, normal, gamma: float = GAMMA):
    """R |Lambda| T R^T for an averaged state, as a (5, 5, ...) array.

    R holds the flux-Jacobian eigenvectors in direction ``normal`` (unit) and
    T the diagonal scaling that makes R T R^T = du/dv.
    """
    n = np.asarray(normal, dtype=float)
    shape = np.shape(rho)
    n = np.broadcast_to(n.reshape((3,) + (1,) * (len(shape))) if n.ndim == 1 else n,
                        (3,) + shape)
    a = np.sqrt(gamma * p / rho)
    un = np.sum(vel * n, axis=0)
    q2 = np.sum(vel * vel, axis=0)
    H = a * a / (gamma - 1.0) + 0.5 * q2
    ones = np.ones(shape)
    r_minus = np.stack([ones, *(vel - a * n), H - a * un])
    r_entropy = np.stack([ones, *vel, 0.5 * q2])
    r_plus = np.stack([ones, *(vel + a * n), H + a * un])
    acoustic = rho / (2.0 * gamma)
    out = (np.abs(un - a) * acoustic)[None, None] * r_minus[:, None] * r_minus[None, :]
    out += (np.abs(un + a) * acoustic)[None, None] * r_plus[:, None] * r_plus[None, :]
    out += (np.abs(un) * rho * (gamma - 1.0) / gamma)[None, None] \
        * r_entropy[:, None] * r_entropy[None, :]
    # shear waves: sum over an orthonormal tangent pair equals I - n n^T
    Pt = np.eye(3).reshape((3, 3) + (1,) * len(shape)) - n[:, None] * n[None, :]
    Ptu = np.sum(Pt * vel[None, :], axis=1)
    shear = np.zeros((5, 5) + shape)
    shear[1:4, 1:4] = Pt
    shear[1:4, 4] = Ptu
    shear[4, 1:4] = Ptu
    shear[4, 4] = np.sum(vel * Ptu, axis=0)
    out += (np.abs(un) * p)[None, None] * shear
    return out


def roe_dissipation(uL: np.ndarray, uR: np.ndarray, normal, gamma: float = GAMMA) -> np.ndarray:
    """Entropy-dissipative Roe term -1/2 R|Lambda|T R^T [[v]] (added to an EC flux)."""
    rho, vel, p = _average_state(uL, uR, gamma)
    if np.any(rho <= 0) or np.any(p <= 0):
        raise InadmissibleStateError("vacuum in the averaged state")
    jump = entropy_variables(uR, gamma) - entropy_variables(uL, gamma)
    D = entropy_jump_dissipation_matrix(rho, vel, p, normal, gamma)
    return -0.5 * np.einsum("ij...,j...->i...", D, jump)


def roe_average(uL: np.ndarray, uR: np.ndarray, gamma: float = GAMMA):
    rhoL, velL, pL = primitive(uL, gamma)
    rhoR, velR, pR = primitive(uR, gamma)
    sL, sR = np.sqrt(rhoL), np.sqrt(rhoR)
    if np.any(sL + sR <= 0):
        raise InadmissibleStateError("vacuum Roe average")
    HL = (uL[4] + pL) / rhoL
    HR = (uR[4] + pR) / rhoR
    vel = (sL * velL + sR * velR) / (sL + sR)
    H = (sL * HL + sR * HR) / (sL + sR)
    rho = sL * sR
    return rho, vel, H


def roe_flux(uL: np.ndarray, uR: np.ndarray, normal, gamma: float = GAMMA) -> np.ndarray:
    """Textbook Roe flux 1/2 (f_L + f_R).n - 1/2 |A_roe| (u_R - u_L)."""
    n = np.asarray(normal, dtype=float)
    shape = np.shape(uL[0])
    n = np.broadcast_to(n.reshape((3,) + (1,) * len(shape)) if n.ndim == 1 else n,
                        (3,) + shape)
    fL = np.einsum("ik...,k...->i...", physical_flux(uL, gamma), n)
    fR = np.einsum("ik...,k...->i...", physical_flux(uR, gamma), n)
    return 0.5 * (fL + fR) - 0.5 * roe_matrix_abs_apply(uL, uR, n, gamma)


def roe_matrix_abs_apply(uL, uR, n, gamma: float = GAMMA) -> np.ndarray:
    rho, vel, H = roe_average(uL, uR, gamma)
    q2 = np.sum(vel * vel, axis=0)
    a2 = (gamma - 1.0) * (H - 0.5 * q2)
    if np.any(a2 <= 0):
        raise InadmissibleStateError("Roe-averaged sound speed is not real")
    a = np.sqrt(a2)
    un = np.sum(vel * n, axis=0)
    rhoL, velL, pL = primitive(uL, gamma)
    rhoR, velR, pR = primitive(uR, gamma)
    d_rho = rhoR - rhoL
    d_p = pR - pL
    d_vel = velR - velL
    d_un = np.sum(d_vel * n, axis=0)
    alpha_minus = (d_p - rho * a * d_un) / (2.0 * a2)
    alpha_plus = (d_p + rho * a * d_un) / (2.0 * a2)
    alpha_entropy = d_rho - d_p / a2
    d_vt = d_vel - d_un * n
    out = np.zeros((5,) + np.shape(rho))
    for lam, alpha, r in (
        (un - a, alpha_minus, [np.ones_like(un), *(vel - a * n), H - a * un]),
        (un + a, alpha_plus, [np.ones_like(un), *(vel + a * n), H + a * un]),
        (un, alpha_entropy, [np.ones_like(un), *vel, 0.5 * q2]),
    ):
        out += np.abs(lam) * alpha * np.stack(r)
    shear = np.concatenate([np.zeros((1,) + np.shape(rho)), d_vt,
                            np.sum(vel * d_vt, axis=0)[None]])
    out += np.abs(un) * rho * shear
    return out


def tadmor_residual(kind: str, uL: np.ndarray, uR: np.ndarray, k: int,
                    gamma: float = GAMMA) -> np.ndarray:
    """[[v]] . f_s^k - [[psi^k]] for each pair."""
    f = two_point_flux(kind, uL, uR, k, gamma)
    dv = entropy_variables(uR, gamma) - entropy_variables(uL, gamma)
    dpsi = entropy_potential(uR, k) - entropy_potential(uL, k)
    return np.sum(dv * f, axis=0) - dpsi
