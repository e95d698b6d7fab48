"""Invariant checks behind ``nsfr verify``.

Each check returns a ``Check`` with the measured value and the tolerance it
is held to, so reports show how close each invariant is to failing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import euler
from .basis import build_basis
from .cases import free_stream, manufactured_exact
from .fr_operators import build_hybrid_stiffness, correction_parameter
from .geometry import CURL, build_metrics_conservative_curl, gcl_residual, warp_grid_3d
from .solver import DG_CONSERVATIVE, Discretization, SolverConfig
from .tensor_kernels import (CountingProvider, dense_hadamard_oracle, hadamard_sumfac_surface,
                             hadamard_sumfac_volume)


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)


def sbp_identity_error(p: int, quadrature: str, d: int) -> float:
    """max |Q~ + Q~^T - blockdiag(0, B)| over all directions."""
    hs = build_hybrid_stiffness(build_basis(p, quadrature), d)
    Nv = hs.n_volume
    worst = 0.0
    for k in range(d):
        target = np.zeros_like(hs.Q[k])
        target[Nv:, Nv:] = np.diag(hs.B[k])
        worst = max(worst, float(np.max(np.abs(hs.Q[k] + hs.Q[k].T - target))))
    return worst


def check_sbp(p_values=range(1, 6), dims=(1, 2, 3), tol=1e-13) -> Check:
    worst = max(sbp_identity_error(p, q, d) for p in p_values for q in ("GL", "LGL") for d in dims)
    return Check("SBP identity of the hybrid operator", worst, tol)


def check_gcl(p_values=(3, 4, 5), beta=0.2, n_elem=4, metric_form=CURL, tol=1e-12) -> Check:
    worst = 0.0
    for p in p_values:
        basis = build_basis(p, "GL")
        mapping = warp_grid_3d(n_elem, beta, 0.0, 2 * np.pi, p + 1, 1.0)
        metric = build_metrics_conservative_curl(mapping, basis, metric_form)
        worst = max(worst, gcl_residual(metric, basis))
    return Check(f"GCL ({metric_form})", worst, tol)


def check_tadmor(n_pairs=1000, seed=0, tol=1e-11) -> Check:
    rng = np.random.default_rng(seed)
    rho = rng.uniform(0.2, 3.0, (2, n_pairs))
    vel = rng.uniform(-2.0, 2.0, (2, 3, n_pairs))
    p = rng.uniform(0.2, 3.0, (2, n_pairs))
    uL = euler.conservative(rho[0], vel[0], p[0])
    uR = euler.conservative(rho[1], vel[1], p[1])
    worst = 0.0
    for kind in euler.EC_FLUX_KINDS:
        for k in range(3):
            r = euler.tadmor_residual(kind, uL, uR, k)
            scale = np.maximum(np.maximum(np.abs(euler.entropy_potential(uL, k)),
                                          np.abs(euler.entropy_potential(uR, k))), 1.0)
            worst = max(worst, float(np.max(np.abs(r) / scale)))
    return Check("Tadmor shuffle condition (scaled)", worst, tol)


def check_free_stream(p_values=(3, 4), beta=0.2, n_elem=4, metric_form=CURL,
                      tol=1e-13) -> Check:
    worst = 0.0
    for p in p_values:
        mapping = warp_grid_3d(n_elem, beta, 0.0, 2 * np.pi, p + 1, 1.0)
        for c in (0.0, correction_parameter("c_plus", p)):
            for q in ("GL", "LGL"):
                cfg = SolverConfig(p=p, c_1d=c, quadrature=q, metric_form=metric_form)
                disc = Discretization(cfg, mapping)
                u = disc.initial_condition(free_stream)
                worst = max(worst, float(np.max(np.abs(disc.residual(u)))))
    return Check(f"free-stream residual ({metric_form})", worst, tol)


def _random_symmetric(rng, N, d):
    F = rng.standard_normal((N, N, d))
    return 0.5 * (F + np.swapaxes(F, 0, 1))


def hadamard_oracle_error(p: int, d: int, seed: int = 0):
    """(max deviation, volume calls, surface calls) of the sum-factorized
    kernels against the dense hybrid Hadamard product."""
    rng = np.random.default_rng(seed + 97 * p + d)
    basis = build_basis(p, "GL")
    hs = build_hybrid_stiffness(basis, d)
    Nv = hs.n_volume
    n = basis.n_quad
    Nf_face = n ** (d - 1)
    F = _random_symmetric(rng, Nv + hs.n_face_nodes, d)
    ref = dense_hadamard_oracle(hs.skew, F)
    vol_provider = CountingProvider(lambda k, I, J: F[I, J, k])
    vol = hadamard_sumfac_volume([basis.weights[:, None] * basis.flux_diff
                                  - (basis.weights[:, None] * basis.flux_diff).T] * d,
                                 [basis.weights] * d, vol_provider, (n,) * d)
    surf_provider = CountingProvider(lambda face, k, I, fid: F[I, Nv + face * Nf_face + fid, k])
    vol_s, faces = hadamard_sumfac_surface([basis.flux_face] * d, [basis.weights] * d,
                                           surf_provider, (n,) * d)
    got = np.concatenate([vol + vol_s] + faces)
    return float(np.max(np.abs(got - ref))), vol_provider.calls, surf_provider.calls


def check_hadamard(p_max=6, dims=(1, 2, 3), tol=1e-13):
    worst = 0.0
    calls_ok = True
    for d in dims:
        for p in range(1, p_max + 1):
            err, cv, cs = hadamard_oracle_error(p, d)
            n = p + 1
            worst = max(worst, err)
            calls_ok &= cv <= d * n ** (d + 1) and cs <= 2 * d * n ** d
    return [Check("sum-factorized vs dense Hadamard", worst, tol),
            Check("provider-call bounds (0 = within)", 0.0 if calls_ok else 1.0, 0.0)]


def check_c0_equivalence(p=3, n_elem=2, tol=1e-12, seed=0) -> Check:
    """NSFR with central two-point fluxes against strong conservative DG,
    LGL nodes on an affine grid, for a perturbed (discontinuous) state."""
    mapping = warp_grid_3d(n_elem, 0.0, -1.0, 1.0, p + 1, 1.0 / np.pi)
    common = dict(p=p, quadrature="LGL", volume_flux=euler.CENTRAL)
    nsfr = Discretization(SolverConfig(**common), mapping)
    dg = Discretization(SolverConfig(scheme=DG_CONSERVATIVE, **common), mapping)
    u = nsfr.initial_condition(lambda x, y, z: manufactured_exact(x, y, z, 0.0))
    u = u * (1.0 + 0.01 * np.random.default_rng(seed).standard_normal(u.shape))
    diff = float(np.max(np.abs(nsfr.residual(u) - dg.residual(u))))
    return Check("c=0 NSFR central vs strong DG", diff, tol)


def run_all(metric_form: str = CURL, p_values=(3, 4), seed: int = 0) -> list:
    checks = [check_sbp(), check_gcl(metric_form=metric_form), check_tadmor(seed=seed),
              check_free_stream(p_values, metric_form=metric_form)]
    checks += check_hadamard()
    checks.append(check_c0_equivalence(seed=seed))
    return checks
