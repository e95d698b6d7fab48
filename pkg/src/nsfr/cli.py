"""Command-line front end: ``nsfr {run,ooa,verify,bench,cfl-sweep}``."""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import (KEYS, ConfigError, RunConfig, build_run_config, parse_config_text,
                     parse_values, resolve_c)
from .diagnostics import (DiagnosticRecord, Recorder, cfl_sweep, l2_error, loglog_slope, ooa_slopes,
                          scaling_benchmark, write_csv)
from .fr_operators import correction_parameter
from .solver import (DG_CONSERVATIVE, NSFR_EC, Discretization, SimulationFailure,
                     run_simulation, with_overrides, write_checkpoint)
from . import verification

EXIT_FAILURE = 1
EXIT_USAGE = 2


def _out_path(cfg: RunConfig, args, suffix: str) -> Path:
    out = Path(args.out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / f"{cfg['output.prefix']}_{suffix}"


def _workers(cfg: RunConfig, args) -> int:
    if args.workers:
        return max(1, args.workers)
    return cfg.workers


def _map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


# ------------------------------------------------------------------- run
def cmd_run(cfg: RunConfig, args) -> int:
    disc = Discretization(cfg.solver, cfg.mapping(), source=cfg.case.source)
    u0 = disc.initial_condition(cfg.case.initial)
    records = []
    recorder = Recorder(with_ke=cfg["diagnostics.kinetic_energy"])

    def record(d, u, t, step):
        records.append(recorder(d, u, t, step))

    csv_path = _out_path(cfg, args, "diagnostics.csv")
    status = 0
    try:
        res = run_simulation(disc, u0, cfg.t_final, [record], cfg["output.every"],
                             dt_fixed=cfg["time.dt"], max_steps=cfg["time.max_steps"] or None)
    except SimulationFailure as exc:
        print(f"simulation failed at t = {exc.t:.17g}: {exc}", file=sys.stderr)
        status = EXIT_FAILURE
        res = None
    write_csv(csv_path, records, DiagnosticRecord.columns())
    print(f"wrote {csv_path} ({len(records)} records)")
    if res is not None and cfg["output.checkpoint"]:
        ck = _out_path(cfg, args, "checkpoint.txt")
        write_checkpoint(ck, disc, res.uhat, res.t)
        print(f"wrote {ck} (t = {res.t:.17g}, {res.steps} steps)")
    return status


# ------------------------------------------------------------------- ooa
# worker jobs carry the plain value dict; cases hold closures that do not pickle
def _ooa_level(job):
    values, n_elem = job
    cfg = build_run_config(values)
    disc = Discretization(cfg.solver, cfg.mapping(n_elem), source=cfg.case.source)
    u0 = disc.initial_condition(cfg.case.initial)
    res = run_simulation(disc, u0, cfg.t_final, dt_fixed=cfg["time.dt"])
    return {"elements": n_elem, "dx": disc.dx, "steps": res.steps,
            "l2_density": l2_error(disc, res.uhat, cfg.case.exact, res.t, "density"),
            "l2_pressure": l2_error(disc, res.uhat, cfg.case.exact, res.t, "pressure")}


def convergence_table(cfg: RunConfig, workers: int = 1) -> list[dict]:
    """Per-level errors with slopes against the previous level; slopes are
    '' for the first level and 'undefined' when an error sits at the floor."""
    if cfg.case.exact is None:
        raise ConfigError(f"case {cfg.case.kind} has no exact solution")
    rows = _map(_ooa_level, [(cfg.values, m) for m in cfg["ooa.levels"]], workers)
    floor = cfg["ooa.zero_floor"]
    for q in ("density", "pressure"):
        rows[0][f"slope_{q}"] = ""
        for prev, cur in zip(rows[:-1], rows[1:]):
            e0, e1 = prev[f"l2_{q}"], cur[f"l2_{q}"]
            if min(e0, e1) <= floor:
                cur[f"slope_{q}"] = "undefined"
            else:
                cur[f"slope_{q}"] = ooa_slopes([(prev["dx"], e0), (cur["dx"], e1)])[0]
    return rows


def cmd_ooa(cfg: RunConfig, args) -> int:
    rows = convergence_table(cfg, _workers(cfg, args))
    path = _out_path(cfg, args, "ooa.csv")
    write_csv(path, rows, ["elements", "dx", "steps", "l2_density", "slope_density",
                           "l2_pressure", "slope_pressure"])
    for r in rows:
        print(f"M={r['elements']:3d}  L2(rho)={r['l2_density']:.6e} {r['slope_density']!s:>10}"
              f"  L2(p)={r['l2_pressure']:.6e} {r['slope_pressure']!s:>10}")
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------- verify
def cmd_verify(cfg: RunConfig, args) -> int:
    checks = verification.run_all(cfg.solver.metric_form, cfg["verify.p_values"], cfg["run.seed"])
    failed = 0
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        failed += not c.passed
        print(f"{status}  {c.name}: {c.value:.3e} (tolerance {c.tolerance:.0e})")
    return EXIT_FAILURE if failed else 0


# ----------------------------------------------------------------- bench
def _dg_overintegration(text: str, p: int) -> int:
    text = text.replace(" ", "")
    return 2 * (p + 1) if text == "2(p+1)" else int(text)


def _c_plus_or_stand_in(p: int) -> float:
    # cost does not depend on the value of c, only on c > 0
    try:
        return correction_parameter("c_plus", p)
    except ValueError:
        return correction_parameter("c_HU", p)


def benchmark_configs(cfg: RunConfig) -> dict:
    base = cfg.solver
    dg_over = cfg["bench.dg_overintegration"]
    return {
        "NSFR_EC_cDG": lambda p: with_overrides(base, p=p, scheme=NSFR_EC, c_1d=0.0),
        "NSFR_EC_cplus": lambda p: with_overrides(base, p=p, scheme=NSFR_EC,
                                                  c_1d=_c_plus_or_stand_in(p)),
        "DG_overintegrated": lambda p: with_overrides(
            base, p=p, scheme=DG_CONSERVATIVE, c_1d=0.0,
            overintegration=_dg_overintegration(dg_over, p)),
    }


def benchmark_rows(cfg: RunConfig) -> list[dict]:
    p_values = range(cfg["bench.p_min"], cfg["bench.p_max"] + 1)
    rows = scaling_benchmark(p_values, benchmark_configs(cfg), lambda p: cfg.mapping(p=p),
                             cfg.case.initial, cfg["bench.reps"], cfg["bench.repeats"])
    E = cfg.n_elem ** 3
    for r in rows:
        n = r["p"] + 1
        r["provider_calls_formula"] = E * (3 * n * n * n * (n - 1) // 2 + 6 * n ** 3) \
            if r["scheme"].startswith("NSFR") else 0
    return rows


def cmd_bench(cfg: RunConfig, args) -> int:
    rows = benchmark_rows(cfg)
    path = _out_path(cfg, args, "bench.csv")
    write_csv(path, rows, ["p", "scheme", "residual_time", "provider_calls",
                           "provider_calls_formula"])
    for label in dict.fromkeys(r["scheme"] for r in rows):
        sel = [r for r in rows if r["scheme"] == label]
        if len(sel) >= 2:
            s = loglog_slope([r["p"] + 1 for r in sel], [r["residual_time"] for r in sel])
            print(f"slope {label}: {s:.3f}")
    print(f"wrote {path}")
    return 0


# ------------------------------------------------------------- cfl sweep
def _sweep_one(job):
    values, c_text = job
    cfg = build_run_config(values)
    c = resolve_c(c_text, cfg.solver.p)
    solver = with_overrides(cfg.solver, c_1d=c)
    mapping = cfg.mapping()

    def make(cfl):
        return Discretization(with_overrides(solver, cfl=cfl), mapping, source=cfg.case.source)

    best, history = cfl_sweep(make, cfg.case.initial, cfg.case.exact, cfg["cfl.t_final"],
                              cfg["cfl.start"], cfg["cfl.step"], cfg["cfl.max"],
                              cfg["cfl.digits"])
    return c_text, c, best, history


def cmd_cfl_sweep(cfg: RunConfig, args) -> int:
    if not args.extended:
        print("cfl-sweep is a long-running target; pass --extended to run it", file=sys.stderr)
        return EXIT_USAGE
    if cfg.case.exact is None:
        raise ConfigError(f"case {cfg.case.kind} has no exact solution")
    listed = cfg["cfl.c_values"] or str(cfg["scheme.c_1d"])
    c_values = [v.strip() for v in listed.split(",") if v.strip()]
    for c in c_values:
        resolve_c(c, cfg.solver.p)
    results = _map(_sweep_one, [(cfg.values, c) for c in c_values], _workers(cfg, args))
    rows = []
    for c_text, c, best, history in results:
        print(f"{c_text}: max CFL {best:.2f}")
        rows += [{"c_name": c_text, "c_1d": c, "cfl": cfl, "l2_pressure": err,
                  "max_cfl": best} for cfl, err in history]
    path = _out_path(cfg, args, "cfl.csv")
    write_csv(path, rows, ["c_name", "c_1d", "cfl", "l2_pressure", "max_cfl"])
    print(f"wrote {path}")
    return 0


COMMANDS = {"run": cmd_run, "ooa": cmd_ooa, "verify": cmd_verify, "bench": cmd_bench,
            "cfl-sweep": cmd_cfl_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsfr", description=__doc__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--out-dir", help="overrides output.dir")
    parser.add_argument("--workers", type=int, default=0,
                        help="processes for independent runs (default: run.workers, "
                             "then NSFR_WORKERS, then 1)")
    parser.add_argument("--extended", action="store_true", help="allow long-running targets")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    parser.add_argument("--list-keys", action="store_true", help="print the known keys and exit")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    if "--list-keys" in argv:
        for key, (_, default, doc) in KEYS.items():
            print(f"{key} = {default}    # {doc}")
        return 0
    args = parser.parse_args(argv)
    try:
        text = Path(args.config).read_text() if args.config else ""
        overrides = parse_values("\n".join(args.set), "--set")
        cfg = parse_config_text(text, args.config or "<defaults>", overrides)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
