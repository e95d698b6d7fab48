"""Measured quantities: discrete entropy and kinetic-energy budgets,
conservation totals, L2 errors, convergence slopes, CFL sweeps and kernel
timing.  Everything here reads a field (and optionally residual parts) and
never modifies solver state.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, fields
from typing import Callable, Iterable, Sequence

import numpy as np

from . import euler
from .basis import build_basis
from .solver import (Discretization, ResidualParts, SimulationFailure, SolverConfig,
                     _flux_along, _pressure_along, run_simulation)
from .tensor_kernels import apply_tensor_product


@dataclass
class DiagnosticRecord:
    t: float
    entropy_change: float
    entropy_change_normalized: float
    entropy_change_surface: float
    ke_change_volume: float
    ke_change_total_minus_pressure_work: float
    mass: float
    momentum_x: float
    momentum_y: float
    momentum_z: float
    energy: float
    max_wavespeed: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]


# ----------------------------------------------------------------- entropy
def total_entropy(disc: Discretization, uhat: np.ndarray) -> float:
    """Quadrature of the entropy function U over the mesh."""
    uq = disc.interpolate(uhat)
    return float(np.sum(disc.WJ * euler.entropy_function(uq, disc.gamma)))


def discrete_entropy_change(disc: Discretization, parts: ResidualParts) -> float:
    """sum_m v_hat (M_m + K_m) du/dt with the scheme's own mass matrix.

    (M + K) du/dt equals source - bracket exactly, so no inverse is undone.
    """
    if parts.v_hat is None:
        raise ValueError("entropy change needs NSFR residual parts")
    rhs = -parts.bracket if parts.source is None else parts.source - parts.bracket
    return float(np.sum(parts.v_hat * rhs))


def entropy_change_surface_form(disc: Discretization, parts: ResidualParts) -> float:
    """The same quantity from face data only: sum over faces of
    w (psi(u~) . C n^r - v~ . f*), valid on periodic meshes without source."""
    uf, vf, fstar = parts.u_face, parts.v_face, parts.face_flux
    sign = np.repeat(np.array([-1.0, 1.0, -1.0, 1.0, -1.0, 1.0]), disc.Nf)
    Cn = np.concatenate([disc.C_face[f][:, f // 2] for f in range(6)], axis=-1) * sign
    rho, vel, _ = euler.primitive(uf, disc.gamma)
    psi_n = rho * np.sum(vel * Cn, axis=0)
    integrand = psi_n - np.sum(vf * fstar, axis=0)
    return float(np.sum(disc.face_w_all * integrand))


# ----------------------------------------------------------- kinetic energy
def _ke_projection(disc: Discretization, uhat: np.ndarray):
    uq = disc.interpolate(uhat)
    return disc.project(euler.kinetic_energy_variables(uq))


def kinetic_energy_change(disc: Discretization, uhat: np.ndarray):
    """(volume term, total minus pressure work) for the KE-preserving flux.

    The volume term is sum v_KE . [(W D - D^T W) o (F - P)] 1 on the volume
    nodes; the total is -sum v_hat_KE . bracket with the pressure parts
    removed from both the volume and interface two-point fluxes.
    """
    cfg = disc.config
    if cfg.surface_flux != "EC":
        raise ValueError("the kinetic-energy budget needs the EC surface flux")
    kind = cfg.volume_flux
    g = disc.gamma
    uq, vhat, ut, uf, vq, vf = disc.entropy_project(uhat)
    S = euler.FluxState(ut, g)
    Sf = euler.FluxState(uf, g)

    def no_pressure(L, R, nvec):
        return _flux_along(kind, L, R, nvec, g) - _pressure_along(L, R, nvec, g)

    vke_hat = _ke_projection(disc, uhat)
    vke_vol = disc.interpolate(vke_hat).reshape(5, disc.E, disc.Nv)
    vol = disc.volume_hadamard(S, no_pressure)
    volume_term = float(np.sum(vke_vol * vol))
    vol_s, faces = disc.surface_hadamard(S, Sf, no_pressure)
    fstar = disc.interface_fluxes(uf, Sf, kind, flux_fn=no_pressure)
    bracket = disc.assemble_bracket(vol + vol_s, faces + disc.face_w_all * fstar)
    total = -float(np.sum(vke_hat * bracket))
    return volume_term, total


# ---------------------------------------------------------------- totals
def conservation_totals(disc: Discretization, uhat: np.ndarray) -> np.ndarray:
    return disc.conserved_totals(uhat)


def conservation_scale(disc: Discretization, uhat: np.ndarray) -> np.ndarray:
    """Per-state normalization: integral of |state|, so zero-mean momenta
    are measured against their own magnitude."""
    uq = disc.interpolate(uhat)
    return np.sum(np.abs(uq) * disc.WJ[None], axis=(1, 2, 3, 4))


# ---------------------------------------------------------------- errors
def l2_error(disc: Discretization, uhat: np.ndarray, exact_fn: Callable, t: float,
             quantity: str = "density") -> float:
    """sqrt(sum (q - q_exact)^2 W J) over volume quadrature nodes."""
    uq = disc.interpolate(uhat)
    x = disc.x_quad
    ue = exact_fn(np.moveaxis(x[:, 0], 0, 0), x[:, 1], x[:, 2], t)
    if quantity == "density":
        diff = uq[0] - ue[0]
    elif quantity == "pressure":
        diff = euler.pressure(uq, disc.gamma) - euler.pressure(ue, disc.gamma)
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    return float(math.sqrt(np.sum(diff * diff * disc.WJ)))


def ooa_slopes(levels: Sequence[tuple[float, float]]) -> list[float]:
    """Pairwise log(e_k / e_k+1) / log(dx_k / dx_k+1)."""
    if len(levels) < 2:
        raise ValueError("need at least two refinement levels")
    out = []
    for (h0, e0), (h1, e1) in zip(levels[:-1], levels[1:]):
        if e0 <= 0 or e1 <= 0 or h0 <= 0 or h1 <= 0:
            raise ValueError("errors and spacings must be positive")
        out.append(math.log(e0 / e1) / math.log(h0 / h1))
    return out


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# ------------------------------------------------------------- recorders
class Recorder:
    """run_simulation callback producing DiagnosticRecord rows."""

    def __init__(self, with_ke: bool = False):
        self.with_ke = with_ke
        self.entropy0 = None

    def __call__(self, disc: Discretization, uhat: np.ndarray, t: float, step: int):
        parts = disc.residual(uhat, t, parts=True)
        if self.entropy0 is None:
            self.entropy0 = abs(total_entropy(disc, uhat))
        nsfr = parts.v_hat is not None
        dS = discrete_entropy_change(disc, parts) if nsfr else math.nan
        dS_surf = entropy_change_surface_form(disc, parts) if nsfr and parts.source is None \
            else math.nan
        ke_vol = ke_tot = math.nan
        if self.with_ke:
            ke_vol, ke_tot = kinetic_energy_change(disc, uhat)
        tot = conservation_totals(disc, uhat)
        return DiagnosticRecord(t, dS, dS / self.entropy0 if nsfr else math.nan, dS_surf,
                                ke_vol, ke_tot, *map(float, tot),
                                disc.max_wavespeed(uhat))


def write_csv(path, rows: Iterable, columns: Sequence[str] | None = None) -> None:
    """Header row plus one line per record, floats in 17 significant digits."""
    rows = list(rows)
    if columns is None:
        if rows and hasattr(rows[0], "__dataclass_fields__"):
            columns = [f.name for f in fields(rows[0])]
        elif rows and isinstance(rows[0], dict):
            columns = list(rows[0])
        else:
            raise ValueError("columns are required for plain rows")

    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return f"{float(v):.17g}"
        return str(v)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            if hasattr(r, "__dataclass_fields__"):
                d = asdict(r)
                w.writerow([fmt(d[c]) for c in columns])
            elif isinstance(r, dict):
                w.writerow([fmt(r[c]) for c in columns])
            else:
                w.writerow([fmt(v) for v in r])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _parse(v: str):
    try:
        return int(v)
    except ValueError:
        try:
            return float(v)
        except ValueError:
            return v


# ------------------------------------------------------------ CFL sweeps
def _significant(x: float, digits: int = 7) -> str:
    return f"{x:.{digits - 1}e}"


def cfl_sweep(make_disc: Callable[[float], Discretization], initial: Callable,
              exact: Callable, t_final: float = 1.0, cfl0: float = 0.1,
              step: float = 0.01, cfl_max: float = 2.0, digits: int = 7) -> tuple[float, list]:
    """Largest CFL on a ``step`` grid whose pressure L2 error at ``t_final``
    agrees with the CFL = ``cfl0`` error to ``digits`` significant digits.

    ``make_disc(cfl)`` builds the discretization; returns (max_cfl, history).
    """
    def error_at(cfl):
        disc = make_disc(cfl)
        u0 = disc.initial_condition(initial)
        res = run_simulation(disc, u0, t_final)
        return l2_error(disc, res.uhat, exact, res.t, "pressure")

    try:
        base = error_at(cfl0)
    except SimulationFailure as exc:
        raise RuntimeError(f"baseline run at CFL {cfl0} failed: {exc}") from exc
    history = [(cfl0, base)]
    best = cfl0
    k = 1
    while True:
        cfl = round(cfl0 + k * step, 10)
        if cfl > cfl_max:
            break
        try:
            err = error_at(cfl)
        except SimulationFailure:
            history.append((cfl, math.nan))
            break
        history.append((cfl, err))
        if not math.isfinite(err) or _significant(err, digits) != _significant(base, digits):
            break
        best = cfl
        k += 1
    return best, history


def rk4_amplification(z: np.ndarray) -> np.ndarray:
    return 1 + z + z ** 2 / 2 + z ** 3 / 6 + z ** 4 / 24


def advection_operator_1d(p: int, n_elem: int, c_1d: float = 0.0, quadrature: str = "GL",
                          upwind: bool = True) -> np.ndarray:
    """Semi-discrete operator of u_t + u_x = 0 on a periodic unit interval,
    nodal DG/FR in strong form with an upwind (or central) interface flux."""
    from .fr_operators import reference_modified_mass_1d
    b = build_basis(p, quadrature)
    h = 1.0 / n_elem
    ns = b.n_sol
    mass = reference_modified_mass_1d(b, c_1d) * (h / 2)
    vol = b.interp.T @ (b.weights[:, None] * (b.flux_diff @ b.interp))
    left, right = b.face[0], b.face[1]
    N = n_elem * ns
    A = np.zeros((N, N))
    alpha = 1.0 if upwind else 0.5
    minv = np.linalg.inv(mass)
    for e in range(n_elem):
        sl = slice(e * ns, (e + 1) * ns)
        prev = slice(((e - 1) % n_elem) * ns, ((e - 1) % n_elem + 1) * ns)
        nxt = slice(((e + 1) % n_elem) * ns, ((e + 1) % n_elem + 1) * ns)
        # strong form: -(vol u) - [face (f* - f_interior)]
        blk = -vol.copy()
        # right face: f* = alpha u_own + (1 - alpha) u_next
        blk += -np.outer(right, right) * (alpha - 1.0)
        A[sl, nxt] += -np.outer(right, left) * (1.0 - alpha)
        # left face (outward normal -1): f* = alpha u_prev + (1 - alpha) u_own
        blk += np.outer(left, left) * ((1.0 - alpha) - 1.0)
        A[sl, prev] += np.outer(left, right) * alpha
        A[sl, sl] += blk
        A[sl] = minv @ A[sl]
    return A


def advection_max_cfl_1d(p: int, c_1d: float = 0.0, n_elem: int = 16,
                         quadrature: str = "GL", tol: float = 1e-6) -> float:
    """Largest CFL = dt (p + 1) / h keeping the RK4 amplification of every
    eigenvalue of the 1D advection operator within the unit disk."""
    lam = np.linalg.eigvals(advection_operator_1d(p, n_elem, c_1d, quadrature))
    dx = 1.0 / (n_elem * (p + 1))

    def stable(cfl):
        return np.all(np.abs(rk4_amplification(lam * cfl * dx)) <= 1.0 + 1e-12)

    lo, hi = 0.0, 0.05
    while stable(hi):
        lo, hi = hi, 2 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if stable(mid) else (lo, mid)
    return lo


# ------------------------------------------------------------ benchmarks
def time_residuals(disc: Discretization, uhat: np.ndarray, reps: int = 10,
                   repeats: int = 3) -> float:
    """Best-of-``repeats`` wall time for ``reps`` sequential residual solves."""
    disc.residual(uhat)
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(reps):
            disc.residual(uhat)
        best = min(best, time.perf_counter() - t0)
    return best


def scaling_benchmark(p_values: Iterable[int], configs: dict, mesh_fn: Callable,
                      initial: Callable, reps: int = 10, repeats: int = 3) -> list[dict]:
    """Residual timing per (p, label); ``configs[label](p)`` gives a SolverConfig."""
    rows = []
    for p in p_values:
        mapping = mesh_fn(p)
        for label, make in configs.items():
            disc = Discretization(make(p), mapping)
            u = disc.initial_condition(initial)
            disc.provider_calls = 0
            disc.residual(u)
            calls = disc.provider_calls
            elapsed = time_residuals(disc, u, reps, repeats)
            rows.append({"p": p, "scheme": label, "residual_time": elapsed,
                         "provider_calls": calls})
    return rows
