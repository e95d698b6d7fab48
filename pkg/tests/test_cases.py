import math

import numpy as np
import pytest

from nsfr import euler
from nsfr.cases import (CASE_KINDS, FREE_STREAM, MANUFACTURED, TGV, VORTEX, free_stream,
                        isentropic_vortex_exact, make_case, manufactured_constants,
                        manufactured_exact, manufactured_source, tgv_initial)

G = euler.GAMMA


def pde_residual(exact, source, pts, t, h=1e-5):
    """d/dt W + div f(W) - q by central differences at points (3, N)."""
    x, y, z = pts
    dW = (exact(x, y, z, t + h) - exact(x, y, z, t - h)) / (2 * h)
    div = 0.0
    for k in range(3):
        shift = np.zeros((3, 1))
        shift[k] = h
        fp = euler.physical_flux(exact(*(pts + shift), t))[:, k]
        fm = euler.physical_flux(exact(*(pts - shift), t))[:, k]
        div = div + (fp - fm) / (2 * h)
    q = 0.0 if source is None else source(x, y, z, t)
    return dW + div - q


def test_tgv_origin_values():
    u = tgv_initial(0.0, 0.0, 0.0)
    rho, vel, p = euler.primitive(u)
    assert rho == 1.0 and not np.any(vel)
    assert p == pytest.approx(100 / G + 6 / 16, rel=1e-15)


def test_tgv_peak_velocity():
    _, vel, _ = euler.primitive(tgv_initial(np.pi / 2, 0.0, 0.0))
    assert vel[0] == pytest.approx(1.0, abs=1e-15) and vel[1] == pytest.approx(0.0, abs=1e-15)


def test_tgv_mean_velocity_vanishes():
    x, w = np.polynomial.legendre.leggauss(24)
    x = np.pi * (x + 1)
    w = np.pi * w
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    _, vel, _ = euler.primitive(tgv_initial(X, Y, Z))
    for k in range(3):
        assert abs(np.sum(W * vel[k])) / (2 * np.pi) ** 3 <= 1e-12


def test_manufactured_values_on_zero_phase():
    u = manufactured_exact(0.3, -0.5, 0.2, 0.0)
    assert np.allclose(u, [2, 2, 2, 2, 4], rtol=0, atol=1e-15)


def test_manufactured_constants():
    c = manufactured_constants(G)
    assert c[2] == pytest.approx(math.pi / 100 * (G - 1), rel=1e-15)
    assert c[1] == pytest.approx(-math.pi / 5 + math.pi / 20 * (1 + 5 * G), rel=1e-15)


def test_manufactured_source_balances_the_pde():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (3, 100))
    t = rng.uniform(0, 2)
    r = pde_residual(manufactured_exact, manufactured_source, pts, t)
    assert np.max(np.abs(r)) <= 1e-6


def test_manufactured_period_is_one():
    rng = np.random.default_rng(1)
    x, y, z = rng.uniform(-1, 1, (3, 50))
    assert np.allclose(manufactured_exact(x, y, z, 0.3), manufactured_exact(x, y, z, 1.3),
                       rtol=0, atol=1e-13)


def test_vortex_far_field():
    u = isentropic_vortex_exact(5.0 + 40.0, 5.0, 0.0)
    rho, vel, p = euler.primitive(u)
    assert rho == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(vel, [0, 1, 0], atol=1e-14)
    assert p == pytest.approx(1 / G, abs=1e-14)


def test_vortex_center_amplitude():
    pi_max = 0.4
    amp = pi_max * math.exp(0.5)
    base = 1 - 0.5 * (G - 1) * amp ** 2
    rho, vel, p = euler.primitive(isentropic_vortex_exact(5.0, 5.0, 1.0))
    assert rho == pytest.approx(base ** (1 / (G - 1)), rel=1e-14)
    assert p == pytest.approx(base ** (G / (G - 1)) / G, rel=1e-14)
    assert np.allclose(vel, [0, 1, 0], atol=1e-15)


def test_vortex_is_an_exact_solution():
    rng = np.random.default_rng(2)
    pts = rng.uniform(2, 8, (3, 100))
    r = pde_residual(isentropic_vortex_exact, None, pts, 0.7)
    assert np.max(np.abs(r)) <= 1e-6


def test_vortex_energy_admissible_over_domain():
    g = np.linspace(0, 10, 41)
    X, Y, Z = np.meshgrid(g, g, g[:3], indexing="ij")
    u = isentropic_vortex_exact(X, Y, Z, 0.0)
    euler.check_admissible(u)
    rho, vel, _ = euler.primitive(u)
    assert np.allclose(u[4] - 0.5 * rho * np.sum(vel * vel, axis=0),
                       euler.pressure(u) / (G - 1), rtol=1e-14)


def test_free_stream_parameters():
    rho, vel, p = euler.primitive(free_stream(np.zeros(4), 0.0, 0.0))
    assert np.allclose(rho, 1) and np.allclose(vel, 0.1) and np.allclose(p, 1)


@pytest.mark.parametrize("kind", CASE_KINDS)
def test_initial_fields_admissible(kind):
    case = make_case(kind)
    g = np.linspace(case.lower, case.upper, 13)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    euler.check_admissible(case.initial(X, Y, Z))


def test_case_defaults():
    assert make_case(TGV).beta == 0.2 and make_case(TGV).upper == pytest.approx(2 * np.pi)
    m = make_case(MANUFACTURED)
    assert (m.lower, m.upper, m.beta, m.t_final) == (-1.0, 1.0, 1 / 50, 2.0)
    assert make_case(VORTEX).upper == 10.0
    assert make_case(FREE_STREAM).exact is not None
    assert make_case(TGV, beta=0.0).beta == 0.0


def test_unknown_case_rejected():
    with pytest.raises(ValueError, match="unknown case"):
        make_case("Sod")
