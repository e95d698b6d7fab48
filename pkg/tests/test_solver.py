import math

import numpy as np
import pytest

from nsfr import euler
from nsfr.cases import free_stream, make_case, manufactured_exact, tgv_initial
from nsfr.fr_operators import correction_parameter
from nsfr.geometry import CROSS, CURL, warp_grid_3d
from nsfr.solver import (DG_CONSERVATIVE, Discretization, SimulationFailure, SolverConfig,
                         adaptive_dt, read_checkpoint, rk4_step, run_simulation, with_overrides,
                         write_checkpoint)
from nsfr.verification import check_c0_equivalence


def tgv_disc(p=3, n_elem=2, beta=0.2, **kw):
    mapping = warp_grid_3d(n_elem, beta, 0.0, 2 * np.pi, p + 1, 1.0)
    return Discretization(SolverConfig(p=p, **kw), mapping)


@pytest.fixture(scope="module")
def tgv_small():
    d = tgv_disc()
    return d, d.initial_condition(tgv_initial)


# ------------------------------------------------------------ entropy projection
def test_entropy_projection_of_constant_field():
    d = tgv_disc(p=2, overintegration=1)
    u = d.initial_condition(free_stream)
    uq, vhat, ut, uf, vq, vf = d.entropy_project(u)
    ref = free_stream(0.0, 0.0, 0.0)
    assert np.max(np.abs(ut - ref.reshape(5, 1, 1))) <= 1e-14
    assert np.max(np.abs(uf - ref.reshape(5, 1, 1))) <= 1e-14


def test_entropy_projection_collocated_lgl_is_identity(tgv_small):
    d = tgv_disc(quadrature="LGL")
    u = d.initial_condition(tgv_initial)
    uq, _, ut, *_ = d.entropy_project(u)
    assert np.max(np.abs(ut - uq.reshape(ut.shape))) <= 1e-14 * np.abs(uq).max()


def test_entropy_projection_reproduces_polynomial_entropy_variables():
    # affine map, so polynomials in x are polynomials in the reference coordinates
    d = tgv_disc(p=3, beta=0.0, overintegration=2)
    x = d.x_quad
    base = euler.entropy_variables(free_stream(0.0, 0.0, 0.0))

    def v_of(x, y, z):
        # degree-3 polynomial perturbation of an admissible state, v5 stays negative
        s = (x - np.pi) / np.pi
        t = (y - np.pi) / np.pi
        r = (z - np.pi) / np.pi
        pert = np.stack([0.1 * s * t * r, 0.05 * s ** 3, 0.05 * t * t, 0.05 * r, 0.02 * s * t])
        return base.reshape(5, *([1] * s.ndim)) + pert

    vq = v_of(x[:, 0], x[:, 1], x[:, 2])
    vhat = d.project(vq)
    faces = d.all_face_values(vhat)
    xf = d.all_face_values(d.project(x.transpose(1, 0, 2, 3, 4)))
    exact = euler.entropy_to_conservative(v_of(*xf))
    assert np.max(np.abs(euler.entropy_to_conservative(faces) - exact)) <= 1e-12


# --------------------------------------------------------------- residual
@pytest.mark.parametrize("quadrature", ["GL", "LGL"])
@pytest.mark.parametrize("c_name", ["c_DG", "c_plus"])
def test_free_stream_preserved_on_warped_grid(quadrature, c_name):
    p = 3
    d = tgv_disc(p=p, quadrature=quadrature, c_1d=correction_parameter(c_name, p))
    u = d.initial_condition(free_stream)
    assert np.max(np.abs(d.residual(u))) <= 1e-13


def test_central_nsfr_matches_strong_dg():
    assert check_c0_equivalence().passed


def test_dg_free_stream_cartesian():
    d = tgv_disc(beta=0.0, scheme=DG_CONSERVATIVE)
    assert np.max(np.abs(d.residual(d.initial_condition(free_stream)))) <= 1e-13


def test_dg_free_stream_needs_conservative_metrics():
    good = tgv_disc(scheme=DG_CONSERVATIVE, metric_form=CURL)
    bad = tgv_disc(scheme=DG_CONSERVATIVE, metric_form=CROSS)
    u = good.initial_condition(free_stream)
    assert np.max(np.abs(good.residual(u))) <= 1e-13
    assert np.max(np.abs(bad.residual(u))) > 1e-6


@pytest.mark.parametrize("kw", [dict(), dict(c_1d=1.835e-3), dict(surface_flux="EC_plus_Roe"),
                                dict(quadrature="LGL"), dict(scheme=DG_CONSERVATIVE,
                                                             volume_flux=euler.CENTRAL)])
def test_global_conservation(kw):
    d = tgv_disc(**kw)
    u = d.initial_condition(tgv_initial)
    u = u * (1 + 0.01 * np.random.default_rng(1).standard_normal(u.shape))
    totals = d.conserved_totals(d.residual(u))
    uq = d.interpolate(u)
    scale = np.sum(np.abs(uq) * d.WJ[None], axis=(1, 2, 3, 4))
    # normalized by the integral of |density|; the z-momentum of this field is zero
    assert np.max(np.abs(totals) / scale[0]) <= 1e-13


def test_exact_and_weight_adjusted_inverse_agree_on_cartesian_grid():
    wa = tgv_disc(beta=0.0)
    ex = tgv_disc(beta=0.0, use_weight_adjusted=False)
    rhs = np.random.default_rng(2).standard_normal((5, wa.E) + (wa.n_sol,) * 3)
    assert np.max(np.abs(wa.apply_inverse_mass(rhs) - ex.apply_inverse_mass(rhs))) <= 1e-10 * \
        np.max(np.abs(ex.apply_inverse_mass(rhs)))


def _truncation_errors(scheme_kw, p, levels):
    case = make_case("ManufacturedEuler", beta=0.0)

    def dudt_exact(x, y, z):
        h = 1e-5
        return (manufactured_exact(x, y, z, h) - manufactured_exact(x, y, z, -h)) / (2 * h)

    out = []
    for m in levels:
        mapping = warp_grid_3d(m, 0.0, case.lower, case.upper, p + 1, case.length_scale)
        d = Discretization(SolverConfig(p=p, **scheme_kw), mapping, source=case.source)
        u = d.initial_condition(case.initial)
        err = d.residual(u, 0.0) - d.initial_condition(dudt_exact)
        out.append(math.sqrt(np.mean(err ** 2)))
    return out


def test_dg_manufactured_truncation_error_decays():
    p = 3
    errs = _truncation_errors(dict(scheme=DG_CONSERVATIVE, volume_flux=euler.CENTRAL), p, (4, 8))
    assert math.log2(errs[0] / errs[1]) >= p - 0.1


# ------------------------------------------------------------ time stepping
def test_rk4_zero_residual_keeps_state():
    u = np.random.default_rng(3).standard_normal((5, 2, 3, 3, 3))
    assert np.array_equal(rk4_step(u, 0.0, 0.1, lambda v, t: np.zeros_like(v)), u)


def test_rk4_scalar_decay_matches_closed_form():
    dt = 0.3
    u = np.full((5, 1, 2, 2, 2), 2.0)
    got = rk4_step(u, 0.0, dt, lambda v, t: -v)
    amp = 1 - dt + dt ** 2 / 2 - dt ** 3 / 6 + dt ** 4 / 24
    assert np.max(np.abs(got - 2.0 * amp)) <= 1e-15


def test_rk4_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        rk4_step(np.zeros(3), 0.0, 0.0, lambda v, t: v)


def test_rk4_time_error_drops_sixteenfold():
    case = make_case("ManufacturedEuler")
    p = 2
    mapping = warp_grid_3d(2, case.beta, case.lower, case.upper, p + 1, case.length_scale)
    d = Discretization(SolverConfig(p=p, surface_flux="EC_plus_Roe"), mapping, source=case.source)
    u0 = d.initial_condition(case.initial)
    T = 0.08
    sols = [run_simulation(d, u0, T, dt_fixed=T / n).uhat for n in (16, 32, 64)]
    ratio = np.max(np.abs(sols[0] - sols[1])) / np.max(np.abs(sols[1] - sols[2]))
    assert 14 <= ratio <= 19


def test_adaptive_dt_rest_state_uses_sound_speed():
    d = tgv_disc(beta=0.0)
    u = d.initial_condition(lambda x, y, z: euler.conservative(
        np.ones_like(x), np.zeros((3,) + x.shape), np.full_like(x, 1 / euler.GAMMA)))
    assert adaptive_dt(d, u, 0.1) == pytest.approx(0.1 * d.dx, rel=1e-14)


def test_adaptive_dt_halves_when_velocity_dominates():
    d = tgv_disc(beta=0.0)

    def state(speed):
        return lambda x, y, z: euler.conservative(
            np.ones_like(x), np.stack([np.full_like(x, speed), 0 * x, 0 * x]), np.full_like(x, 1e-8))

    dt1 = adaptive_dt(d, d.initial_condition(state(50.0)), 0.1)
    dt2 = adaptive_dt(d, d.initial_condition(state(100.0)), 0.1)
    assert dt2 / dt1 == pytest.approx(0.5, rel=1e-5)


def test_adaptive_dt_matches_brute_force_on_tgv(tgv_small):
    d, u = tgv_small
    uq = d.interpolate(u)
    lam = 0.0
    for idx in np.ndindex(uq.shape[1:]):
        s = uq[(slice(None),) + idx]
        rho, p = s[0], (euler.GAMMA - 1) * (s[4] - 0.5 * (s[1] ** 2 + s[2] ** 2 + s[3] ** 2) / s[0])
        lam = max(lam, math.sqrt((s[1] ** 2 + s[2] ** 2 + s[3] ** 2)) / rho
                  + math.sqrt(euler.GAMMA * p / rho))
    assert adaptive_dt(d, u, 0.1) == pytest.approx(0.1 * d.dx / lam, rel=1e-12)


def test_run_simulation_zero_final_time_records_initial_state_only(tgv_small):
    d, u = tgv_small
    seen = []
    res = run_simulation(d, u, 0.0, [lambda dd, uu, t, s: seen.append((t, s))])
    assert seen == [(0.0, 0)] and res.steps == 0 and np.array_equal(res.uhat, u)


def test_run_simulation_is_deterministic(tgv_small):
    d, u = tgv_small
    a = run_simulation(d, u, 0.05)
    b = run_simulation(d, u, 0.05)
    assert np.array_equal(a.uhat, b.uhat) and a.t == pytest.approx(0.05, abs=1e-15)


def test_run_simulation_reports_failure_time():
    d = tgv_disc(beta=0.0, scheme=DG_CONSERVATIVE, volume_flux=euler.CENTRAL)
    u = d.initial_condition(tgv_initial)
    with pytest.raises(SimulationFailure) as info:
        run_simulation(d, u, 1.0, dt_fixed=5.0)
    assert info.value.t == pytest.approx(0.0)


def test_checkpoint_round_trip_is_bit_exact(tmp_path, tgv_small):
    d, u = tgv_small
    u = u * (1 + 1e-3 * np.random.default_rng(4).standard_normal(u.shape))
    path = tmp_path / "ck.txt"
    write_checkpoint(path, d, u, 0.1 + 0.2)
    info, back = read_checkpoint(path)
    assert np.array_equal(back, u)
    assert info == {"p": 3, "M": (2, 2, 2), "scheme": "NSFR_EC", "t": 0.1 + 0.2}


def test_checkpoint_rejects_other_files(tmp_path):
    path = tmp_path / "x.txt"
    path.write_text("hello\n")
    with pytest.raises(ValueError):
        read_checkpoint(path)


@pytest.mark.parametrize("kw", [dict(scheme="FD"), dict(volume_flux="nope"), dict(surface_flux="x"),
                                dict(c_1d=-1.0), dict(p=0), dict(overintegration=-1)])
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_with_overrides_copies():
    base = SolverConfig()
    assert with_overrides(base, p=5).p == 5 and base.p == 3


@pytest.mark.extended
def test_dg_blows_up_on_tgv_at_p5():
    p = 5
    mapping = warp_grid_3d(4, 0.2, 0.0, 2 * np.pi, p + 1, 1.0)
    d = Discretization(SolverConfig(p=p, scheme=DG_CONSERVATIVE, surface_flux="EC_plus_Roe"),
                       mapping)
    with pytest.raises(SimulationFailure) as info:
        run_simulation(d, d.initial_condition(tgv_initial), 14.0)
    assert info.value.t < 14.0
