"""Analytic initial conditions, exact solutions and source terms.

All functions take coordinate arrays of any (matching) shape and return the
conservative state with the five components stacked on a new leading axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .euler import GAMMA, conservative

TGV = "TGV"
MANUFACTURED = "ManufacturedEuler"
VORTEX = "IsentropicVortex"
FREE_STREAM = "FreeStream"
CASE_KINDS = (TGV, MANUFACTURED, VORTEX, FREE_STREAM)


def tgv_initial(x, y, z, gamma: float = GAMMA):
    x, y, z = np.broadcast_arrays(x, y, z)
    rho = np.ones_like(x)
    u = np.sin(x) * np.cos(y) * np.cos(z)
    v = -np.cos(x) * np.sin(y) * np.cos(z)
    w = np.zeros_like(x)
    c2x, c2y, c2z = np.cos(2 * x), np.cos(2 * y), np.cos(2 * z)
    p = 100.0 / gamma + (c2x * c2z + 2 * c2x + 2 * c2y + c2y * c2z) / 16.0
    return conservative(rho, np.stack([u, v, w]), p, gamma)


def manufactured_constants(gamma: float = GAMMA):
    pi = math.pi
    return (pi / 10.0,
            -pi / 5.0 + pi / 20.0 * (1.0 + 5.0 * gamma),
            pi / 100.0 * (gamma - 1.0),
            pi / 20.0 * (-7.0 + 15.0 * gamma),
            pi / 100.0 * (3.0 * gamma - 2.0))


def manufactured_exact(x, y, z, t=0.0, gamma: float = GAMMA):
    """Density wave with unit velocity and total energy equal to rho^2."""
    x, y, z = np.broadcast_arrays(x, y, z)
    rho = 2.0 + 0.1 * np.sin(np.pi * (x + y + z - 2.0 * t))
    return np.stack([rho, rho, rho, rho, rho * rho])


def manufactured_source(x, y, z, t=0.0, gamma: float = GAMMA):
    x, y, z = np.broadcast_arrays(x, y, z)
    c1, c2, c3, c4, c5 = manufactured_constants(gamma)
    phase = np.pi * (x + y + z - 2.0 * t)
    cs, s2 = np.cos(phase), np.sin(2.0 * phase)
    mom = c2 * cs + c3 * s2
    return np.stack([c1 * cs, mom, mom, mom, c4 * cs + c5 * s2])


def isentropic_vortex_exact(x, y, z, t=0.0, gamma: float = GAMMA, pi_max: float = 0.4,
                            u0=(0.0, 1.0, 0.0), p0: float | None = None,
                            center=(5.0, 5.0)):
    """Vortex convected with ``u0``; energy uses the kinetic term rho |u|^2 / 2."""
    x, y, z = np.broadcast_arrays(x, y, z)
    if p0 is None:
        p0 = 1.0 / gamma
    r1 = -(y - center[1] - u0[1] * t)
    r2 = x - center[0] - u0[0] * t
    amp = pi_max * np.exp(0.5 * (1.0 - (r1 * r1 + r2 * r2)))
    base = 1.0 - 0.5 * (gamma - 1.0) * amp * amp
    rho = base ** (1.0 / (gamma - 1.0))
    vel = np.stack([u0[0] + amp * r1, u0[1] + amp * r2, np.full_like(x, u0[2])])
    p = p0 * base ** (gamma / (gamma - 1.0))
    return conservative(rho, vel, p, gamma)


def free_stream(x, y, z, gamma: float = GAMMA, rho: float = 1.0,
                vel=(0.1, 0.1, 0.1), p: float = 1.0):
    x, y, z = np.broadcast_arrays(x, y, z)
    v = np.stack([np.full_like(x, c, dtype=float) for c in vel])
    return conservative(np.full_like(x, rho, dtype=float), v, np.full_like(x, p, dtype=float), gamma)


@dataclass(frozen=True)
class CaseSpec:
    """A case with its box, warping parameters and analytic fields."""

    kind: str
    lower: float
    upper: float
    beta: float
    length_scale: float
    initial: Callable
    exact: Callable | None = None
    source: Callable | None = None
    t_final: float = 1.0
    parameters: dict = field(default_factory=dict)


def make_case(kind: str, beta: float | None = None, gamma: float = GAMMA) -> CaseSpec:
    """Case defaults; the warping length scale is the box length over 2 pi."""
    if kind == TGV:
        b = 0.2 if beta is None else beta
        return CaseSpec(TGV, 0.0, 2 * math.pi, b, 1.0,
                        lambda x, y, z: tgv_initial(x, y, z, gamma), t_final=14.0)
    if kind == MANUFACTURED:
        b = 1.0 / 50.0 if beta is None else beta

        def exact(x, y, z, t=0.0):
            return manufactured_exact(x, y, z, t, gamma)

        return CaseSpec(MANUFACTURED, -1.0, 1.0, b, 1.0 / math.pi,
                        lambda x, y, z: exact(x, y, z, 0.0), exact,
                        lambda x, y, z, t: manufactured_source(x, y, z, t, gamma), t_final=2.0)
    if kind == VORTEX:
        b = 1.0 / 20.0 if beta is None else beta

        def exact(x, y, z, t=0.0):
            return isentropic_vortex_exact(x, y, z, t, gamma)

        return CaseSpec(VORTEX, 0.0, 10.0, b, 10.0 / (2 * math.pi),
                        lambda x, y, z: exact(x, y, z, 0.0), exact, t_final=2.0,
                        parameters={"pi_max": 0.4, "u0": (0.0, 1.0, 0.0), "center": (5.0, 5.0)})
    if kind == FREE_STREAM:
        b = 0.2 if beta is None else beta

        def exact(x, y, z, t=0.0):
            return free_stream(x, y, z, gamma)

        return CaseSpec(FREE_STREAM, 0.0, 2 * math.pi, b, 1.0,
                        lambda x, y, z: exact(x, y, z), exact, t_final=1.0)
    raise ValueError(f"unknown case {kind!r}; expected one of {', '.join(CASE_KINDS)}")
