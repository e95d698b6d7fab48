import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsfr.cases import make_case, tgv_initial
from nsfr.diagnostics import (DiagnosticRecord, Recorder, advection_max_cfl_1d, cfl_sweep,
                              discrete_entropy_change, entropy_change_surface_form,
                              kinetic_energy_change, l2_error, loglog_slope, ooa_slopes, read_csv,
                              scaling_benchmark, total_entropy, write_csv)
from nsfr.geometry import warp_grid_3d
from nsfr.solver import (DG_CONSERVATIVE, Discretization, ResidualParts, SolverConfig,
                         run_simulation)


def tgv(p=3, n_elem=2, **kw):
    mapping = warp_grid_3d(n_elem, 0.2, 0.0, 2 * np.pi, p + 1, 1.0)
    return Discretization(SolverConfig(p=p, **kw), mapping)


def perturbed_tgv(d, seed=0, size=0.01):
    u = d.initial_condition(tgv_initial)
    return u * (1 + size * np.random.default_rng(seed).standard_normal(u.shape))


# ------------------------------------------------------------------ entropy
def test_entropy_change_of_zero_residual_is_zero():
    d = tgv()
    u = d.initial_condition(tgv_initial)
    parts = d.residual(u, parts=True)
    zero = ResidualParts(np.zeros_like(parts.dudt), np.zeros_like(parts.bracket), v_hat=parts.v_hat)
    assert discrete_entropy_change(d, zero) == 0.0


@pytest.mark.parametrize("kw", [dict(), dict(quadrature="LGL"), dict(c_1d=1.835e-3),
                                dict(volume_flux="IsmailRoe")])
def test_entropy_conserved_with_ec_surface_flux(kw):
    d = tgv(**kw)
    u = perturbed_tgv(d)
    parts = d.residual(u, parts=True)
    scale = abs(total_entropy(d, u))
    assert abs(discrete_entropy_change(d, parts)) / scale <= 1e-12


@pytest.mark.parametrize("kw", [dict(), dict(surface_flux="EC_plus_Roe"), dict(quadrature="LGL")])
def test_entropy_change_volume_and_surface_forms_agree(kw):
    d = tgv(**kw)
    parts = d.residual(perturbed_tgv(d, 1), parts=True)
    a = discrete_entropy_change(d, parts)
    b = entropy_change_surface_form(d, parts)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 1000), size=st.floats(0.001, 0.05))
def test_roe_dissipation_never_creates_entropy(seed, size):
    d = tgv(p=2, surface_flux="EC_plus_Roe")
    parts = d.residual(perturbed_tgv(d, seed, size), parts=True)
    assert discrete_entropy_change(d, parts) <= 1e-12


def test_entropy_change_needs_nsfr_parts():
    d = tgv(scheme=DG_CONSERVATIVE)
    with pytest.raises(ValueError):
        discrete_entropy_change(d, d.residual(d.initial_condition(tgv_initial), parts=True))


# ---------------------------------------------------------- kinetic energy
@pytest.mark.parametrize("quadrature", ["GL", "LGL"])
def test_kinetic_energy_volume_term_vanishes(quadrature):
    d = tgv(quadrature=quadrature)
    vol, _ = kinetic_energy_change(d, perturbed_tgv(d))
    assert abs(vol) <= 1e-12


def test_kinetic_energy_total_conserved_only_with_lgl():
    lgl = tgv(quadrature="LGL")
    gl = tgv(quadrature="GL")
    assert abs(kinetic_energy_change(lgl, perturbed_tgv(lgl))[1]) <= 1e-12
    assert abs(kinetic_energy_change(gl, perturbed_tgv(gl))[1]) > 1e-8


def test_kinetic_energy_budget_needs_ec_surface_flux():
    d = tgv(surface_flux="EC_plus_Roe")
    with pytest.raises(ValueError):
        kinetic_energy_change(d, d.initial_condition(tgv_initial))


# ------------------------------------------------------------------ errors
def test_l2_error_of_exact_field_is_zero():
    d = tgv(p=2)
    u = d.initial_condition(tgv_initial)

    def exact(x, y, z, t):
        # the polynomial the solver holds, evaluated at the same nodes
        return d.interpolate(u)

    assert l2_error(d, u, exact, 0.0) <= 1e-14


def test_l2_error_of_constant_offset():
    d = tgv(p=2)
    u = d.initial_condition(tgv_initial)
    delta = 1e-3
    measure = float(np.sum(d.WJ))
    assert measure == pytest.approx((2 * np.pi) ** 3, rel=1e-12)
    err = l2_error(d, u, lambda x, y, z, t: d.interpolate(u) - delta, 0.0)
    assert err == pytest.approx(delta * math.sqrt(measure), rel=1e-12)


def test_l2_error_rejects_unknown_quantity():
    d = tgv(p=1)
    with pytest.raises(ValueError):
        l2_error(d, d.initial_condition(tgv_initial), lambda x, y, z, t: None, 0.0, "entropy")


@pytest.fixture(scope="module")
def manufactured_short_run():
    case = make_case("ManufacturedEuler")
    p = 3
    mapping = warp_grid_3d(4, case.beta, case.lower, case.upper, p + 1, case.length_scale)
    d = Discretization(SolverConfig(p=p, surface_flux="EC_plus_Roe"), mapping, source=case.source)
    res = run_simulation(d, d.initial_condition(case.initial), 0.1)
    return case, mapping, d, res


def test_l2_error_against_overintegrated_quadrature(manufactured_short_run):
    case, mapping, d, res = manufactured_short_run
    fine = Discretization(SolverConfig(p=3, overintegration=5), mapping)
    for q in ("density", "pressure"):
        coarse_err = l2_error(d, res.uhat, case.exact, res.t, q)
        fine_err = l2_error(fine, res.uhat, case.exact, res.t, q)
        assert coarse_err == pytest.approx(fine_err, rel=0.15)


def test_l2_error_regression(manufactured_short_run):
    case, _, d, res = manufactured_short_run
    assert res.steps == 19
    assert l2_error(d, res.uhat, case.exact, res.t) == pytest.approx(0.00499554606879933, rel=1e-9)


# -------------------------------------------------------------- slopes
def test_ooa_slope_of_sixteenfold_drop():
    assert ooa_slopes([(0.1, 16e-4), (0.05, 1e-4)]) == [pytest.approx(4.0, abs=1e-12)]


@pytest.mark.parametrize("levels", [[(0.1, 1.0)], [(0.1, 0.0), (0.05, 1e-3)], [(0.1, 1.0), (0.05, -1.0)]])
def test_ooa_slopes_reject_bad_input(levels):
    with pytest.raises(ValueError):
        ooa_slopes(levels)


@settings(max_examples=30, deadline=None)
@given(order=st.floats(0.5, 8), c=st.floats(1e-3, 1e3))
def test_ooa_slopes_recover_power_laws(order, c):
    h = [0.2, 0.1, 0.05]
    assert ooa_slopes([(x, c * x ** order) for x in h]) == [pytest.approx(order, rel=1e-9)] * 2
    assert loglog_slope(h, [c * x ** order for x in h]) == pytest.approx(order, rel=1e-9)


# ------------------------------------------------------------------ csv
def test_csv_round_trip_keeps_seventeen_digits(tmp_path):
    rows = [DiagnosticRecord(0.1 * k, 1 / 3, 2 / 3, math.pi, math.e, -1e-17, 1.0, 2.0, 3.0, 4.0,
                             5.0, 0.1 + 0.2) for k in range(3)]
    path = tmp_path / "d.csv"
    write_csv(path, rows)
    back = read_csv(path)
    assert list(back[0]) == DiagnosticRecord.columns()
    for r, b in zip(rows, back):
        assert [float(b[c]) for c in DiagnosticRecord.columns()] == \
            [getattr(r, c) for c in DiagnosticRecord.columns()]


def test_csv_plain_rows_need_columns(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "x.csv", [(1, 2)])


def test_recorder_rows_are_finite_and_ordered():
    d = tgv(p=2)
    rec = Recorder(with_ke=True)
    res = run_simulation(d, d.initial_condition(tgv_initial), 0.05, [rec], 1)
    assert [r.t for r in res.records] == sorted(r.t for r in res.records)
    assert all(math.isfinite(v) for r in res.records for v in vars(r).values())


# -------------------------------------------------------------- cfl
def test_advection_cfl_decreases_with_degree():
    cfl = [advection_max_cfl_1d(p) for p in range(1, 6)]
    assert all(a > b for a, b in zip(cfl[:-1], cfl[1:]))


def test_advection_cfl_grows_with_correction_parameter():
    from nsfr.fr_operators import correction_parameter
    p = 3
    assert advection_max_cfl_1d(p, correction_parameter("c_plus", p)) > advection_max_cfl_1d(p)


def test_cfl_sweep_small_case():
    case = make_case("ManufacturedEuler")
    p = 2
    mapping = warp_grid_3d(2, case.beta, case.lower, case.upper, p + 1, case.length_scale)

    def make(cfl):
        return Discretization(SolverConfig(p=p, cfl=cfl, surface_flux="EC_plus_Roe"), mapping,
                              source=case.source)

    best, history = cfl_sweep(make, case.initial, case.exact, 0.05, 0.1, 0.1, 0.5, digits=3)
    assert history[0][0] == 0.1 and 0.1 <= best <= 0.5
    assert [c for c, _ in history] == pytest.approx([0.1 + 0.1 * k for k in range(len(history))])


# -------------------------------------------------------------- benchmark
def test_provider_calls_match_formula():
    p_values = (1, 2, 3)
    rows = scaling_benchmark(p_values, {"nsfr": lambda p: SolverConfig(p=p)},
                             lambda p: warp_grid_3d(2, 0.2, 0.0, 2 * np.pi, p + 1, 1.0),
                             tgv_initial, reps=1, repeats=1)
    E = 8
    for r in rows:
        n = r["p"] + 1
        assert r["provider_calls"] == E * (3 * n * n * n * (n - 1) // 2 + 6 * n ** 3)
        assert r["provider_calls"] <= E * (3 * n ** 4 + 6 * n ** 3)
        assert r["residual_time"] > 0
