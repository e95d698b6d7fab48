"""Flat ``key = value`` run configuration with dotted section names.

Blank lines and ``#`` comments are ignored.  Every key has a documented
default (see ``KEYS``); unknown keys are rejected with their line number.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

from . import euler
from .cases import CASE_KINDS, CaseSpec, make_case
from .fr_operators import correction_parameter
from .geometry import CURL, CurvilinearMapping, warp_grid_3d
from .solver import SolverConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _optional_float(text: str):
    return None if text.strip().lower() in ("", "none", "default") else float(text)


def _int_list(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(",", " ").split())


# key -> (parser, default, description)
KEYS = {
    "case.kind": (str, "TGV", "one of " + ", ".join(CASE_KINDS)),
    "case.beta": (_optional_float, None, "warping amplitude; none uses the case default"),
    "mesh.elements": (int, 4, "elements per direction"),
    "mesh.mapping_degree": (int, 0, "polynomial degree of the mesh map; 0 means p + 1"),
    "scheme.type": (str, "NSFR_EC", "NSFR_EC or DG_conservative"),
    "scheme.p": (int, 3, "polynomial degree"),
    "scheme.c_1d": (str, "0.0", "number, or c_DG / c_SD / c_HU / c_plus"),
    "scheme.quadrature": (str, "GL", "GL or LGL"),
    "scheme.overintegration": (int, 0, "extra volume quadrature nodes per direction"),
    "scheme.volume_flux": (str, euler.CHANDRASHEKAR_RANOCHA, "two-point volume flux"),
    "scheme.surface_flux": (str, "EC", "EC, EC_plus_Roe or Roe"),
    "scheme.weight_adjusted": (_bool, True, "weight-adjusted inverse mass"),
    "scheme.metric_form": (str, CURL, "conservative_curl or cross_product"),
    "scheme.gamma": (float, euler.GAMMA, "ratio of specific heats"),
    "time.t_final": (_optional_float, None, "final time; none uses the case default"),
    "time.cfl": (float, 0.1, "CFL number of the adaptive step"),
    "time.dt": (_optional_float, None, "fixed step; overrides the CFL rule"),
    "time.max_steps": (int, 0, "step limit, 0 for none"),
    "output.dir": (str, "results", "output directory"),
    "output.prefix": (str, "run", "file name prefix"),
    "output.every": (int, 10, "diagnostic cadence in steps"),
    "output.checkpoint": (_bool, True, "write a final checkpoint"),
    "diagnostics.kinetic_energy": (_bool, False, "record the kinetic-energy budget"),
    "run.seed": (int, 0, "seed for randomized checks"),
    "run.workers": (int, 0, "parallel processes for independent runs; 0 reads NSFR_WORKERS"),
    "ooa.levels": (_int_list, (4, 8), "elements per direction, coarse to fine"),
    "ooa.zero_floor": (float, 1e-13, "errors at or below this make slopes undefined"),
    "bench.p_min": (int, 3, "lowest degree"),
    "bench.p_max": (int, 9, "highest degree"),
    "bench.reps": (int, 10, "sequential residuals per timing"),
    "bench.repeats": (int, 3, "timings per point, best is kept"),
    "bench.dg_overintegration": (str, "2(p+1)", "overintegration of the DG reference, "
                                 "an integer or 2(p+1)"),
    "cfl.c_values": (str, "", "comma-separated c list to sweep; empty uses scheme.c_1d"),
    "cfl.start": (float, 0.1, "baseline CFL"),
    "cfl.step": (float, 0.01, "CFL increment"),
    "cfl.max": (float, 1.0, "upper bound of the sweep"),
    "cfl.digits": (int, 7, "significant digits that must agree"),
    "cfl.t_final": (float, 1.0, "time of the pressure-error comparison"),
    "verify.p_values": (_int_list, (3, 4), "degrees for the free-stream and GCL checks"),
}


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration: solver, case, outputs and driver settings."""

    solver: SolverConfig
    case: CaseSpec
    values: dict = field(repr=False)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def n_elem(self) -> int:
        return self.values["mesh.elements"]

    @property
    def t_final(self) -> float:
        t = self.values["time.t_final"]
        return self.case.t_final if t is None else t

    @property
    def out_dir(self) -> str:
        return self.values["output.dir"]

    @property
    def workers(self) -> int:
        w = self.values["run.workers"]
        if w <= 0:
            w = int(os.environ.get("NSFR_WORKERS", "1") or 1)
        return max(1, w)

    def mapping(self, n_elem: int | None = None, p: int | None = None) -> CurvilinearMapping:
        p = self.solver.p if p is None else p
        degree = self.values["mesh.mapping_degree"] or p + 1
        c = self.case
        return warp_grid_3d(n_elem or self.n_elem, c.beta, c.lower, c.upper, degree,
                            c.length_scale)

    def with_values(self, **updates) -> "RunConfig":
        """Copy with dotted keys given as ``section__name=value``."""
        vals = dict(self.values)
        for k, v in updates.items():
            key = k.replace("__", ".")
            if key not in KEYS:
                raise ConfigError(f"unknown key {key!r}")
            vals[key] = v
        return build_run_config(vals)


def resolve_c(text, p: int) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    try:
        return float(text)
    except ValueError:
        return correction_parameter(text.strip(), p)


def build_run_config(values: dict) -> RunConfig:
    vals = {k: spec[1] for k, spec in KEYS.items()}
    vals.update(values)
    p = vals["scheme.p"]
    try:
        solver = SolverConfig(
            p=p, scheme=vals["scheme.type"], c_1d=resolve_c(vals["scheme.c_1d"], p),
            quadrature=vals["scheme.quadrature"], overintegration=vals["scheme.overintegration"],
            volume_flux=vals["scheme.volume_flux"], surface_flux=vals["scheme.surface_flux"],
            cfl=vals["time.cfl"], use_weight_adjusted=vals["scheme.weight_adjusted"],
            metric_form=vals["scheme.metric_form"], gamma=vals["scheme.gamma"])
        case = make_case(vals["case.kind"], vals["case.beta"], vals["scheme.gamma"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if vals["scheme.quadrature"] not in ("GL", "LGL"):
        raise ConfigError(f"scheme.quadrature: unknown quadrature {vals['scheme.quadrature']!r}")
    if vals["output.every"] < 1:
        raise ConfigError("output.every must be at least 1")
    return RunConfig(solver, case, vals)


def parse_values(text: str, source: str = "<config>") -> dict:
    """Parsed and type-converted values of the keys present in ``text``."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = KEYS[key][0](value.strip())
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for key {key!r}: {exc}") from exc
    return values


def parse_config_text(text: str, source: str = "<config>", overrides: dict | None = None) -> RunConfig:
    values = parse_values(text, source)
    values.update(overrides or {})
    try:
        return build_run_config(values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), str(path))


def default_config() -> RunConfig:
    return build_run_config({})
