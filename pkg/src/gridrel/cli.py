"""Command-line interface: ``gridrel <subcommand> [flags]``.

Exit status is 0 on success, 1 for configuration or validation errors and
2 for failures while running.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from .controller import MODES
from .datasets import DatasetError, load_network, read_results_csv, write_results
from .engine import ConfigError, ScenarioConfig
from .network import validate

SEED_ENV = "GRIDREL_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _progress(tag, done, total):
    step = max(1, total // 20)
    if done == total or done % step == 0:
        print(f"[{tag}] {done}/{total}", file=sys.stderr, flush=True)


def _simple_progress(done, total):
    _progress("simulate", done, total)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gridrel", description="Monte Carlo reliability simulation of radial networks with a microgrid.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_flags(sp, default_mode=None):
        sp.add_argument("--config", help="scenario configuration JSON")
        sp.add_argument("--network", help="embedded dataset id or network JSON file")
        sp.add_argument("--iterations", type=int, help="Monte Carlo iterations")
        sp.add_argument("--seed", type=int, help=f"master seed (overrides ${SEED_ENV} and the config)")
        sp.add_argument("--workers", type=int, help="worker processes")
        sp.add_argument("--output-dir", help="directory for result files")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--plots", action="store_true", help="also write SVG figures")
        sp.add_argument("--mode", choices=MODES, default=default_mode, help="microgrid controller mode")
        sp.add_argument("--quiet", action="store_true", help="no progress output")

    run_flags(sub.add_parser("simulate", help="run one scenario"))
    run_flags(sub.add_parser("scenarios", help="compare the three microgrid modes"))
    sp = sub.add_parser("sensitivity", help="full-factorial sensitivity study")
    run_flags(sp, "limited_support")
    sp.add_argument("--design", help="JSON object mapping factor name to a list of levels")
    sp = sub.add_parser("locate", help="microgrid location sweep")
    run_flags(sp, "limited_support")
    sp.add_argument("--buses", help="comma-separated subset of distribution buses")

    sp = sub.add_parser("stats", help="AD and pairwise KS tests on result CSVs")
    sp.add_argument("results", nargs="+", help="two or three results.csv files")
    sp.add_argument("--index", default="ENS_MWh", choices=("ENS_MWh", "CENS", "SAIFI", "SAIDI_h", "CAIDI_h"))
    sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("loadflow", help="forward-backward sweep on the intact network")
    sp.add_argument("--network", default="ieee33")
    sp.add_argument("--loading", choices=("nominal", "peak"), default="nominal")
    sp.add_argument("--output-dir")

    sp = sub.add_parser("validate", help="check network invariants")
    sp.add_argument("--network", default="ieee33_mg")
    return p


def _config(args) -> ScenarioConfig:
    from .datasets import default_scenario_config

    if args.iterations is not None and args.iterations < 1:
        raise ConfigError("--iterations", f"must be >= 1, got {args.iterations}")
    if args.workers is not None and args.workers < 1:
        raise ConfigError("--workers", f"must be >= 1, got {args.workers}")
    if args.config:
        cfg = ScenarioConfig.from_json(args.config)
    else:
        cfg = ScenarioConfig.from_dict(default_scenario_config())
    kw = {}
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            kw["master_seed"] = int(env)
        except ValueError:
            raise ConfigError(SEED_ENV, f"must be an integer, got {env!r}") from None
    if args.seed is not None:
        kw["master_seed"] = args.seed
    if args.network:
        kw["network"] = args.network
    if args.iterations is not None:
        kw["iterations"] = args.iterations
    if args.workers is not None:
        kw["workers"] = args.workers
    if args.mode:
        kw["microgrid_mode"] = args.mode
    return cfg.replace(**kw)


def _cmd_simulate(args, out):
    from .engine import run_simulation

    cfg = _config(args)
    rs = run_simulation(cfg, progress=None if args.quiet else _simple_progress)
    if args.output_dir:
        manifest = write_results(rs, args.output_dir, args.format)
        print(json.dumps(manifest), file=sys.stderr)
    elif args.format == "json":
        out.write(json.dumps({"rows": rs.rows(), "summary": rs.summary()}, indent=1) + "\n")
    else:
        from .datasets import RESULT_COLUMNS

        w = csv.writer(out, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rs.rows():
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in RESULT_COLUMNS])


def _cmd_scenarios(args, out):
    from .experiments import run_scenarios, scenario_report

    cfg = _config(args)
    study = run_scenarios(cfg, args.output_dir, args.plots, args.format, None if args.quiet else _progress)
    if not args.output_dir:
        out.write(scenario_report(study) + "\n")


def _cmd_sensitivity(args, out):
    from .experiments import FactorialDesign, run_factorial

    cfg = _config(args)
    if args.design:
        try:
            design = FactorialDesign(json.loads(args.design))
        except (json.JSONDecodeError, ValueError) as exc:
            raise ConfigError("--design", str(exc)) from None
    else:
        design = FactorialDesign()
    res = run_factorial(design, cfg, args.output_dir, args.plots, None if args.quiet else _progress)
    if not args.output_dir:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["network", "factor", "effect"])
        for r in res.main_effects:
            w.writerow([r["network"], r["factor"], repr(r["effect"])])


def _cmd_locate(args, out):
    from .experiments import run_location_sweep

    cfg = _config(args)
    buses = [b.strip() for b in args.buses.split(",")] if args.buses else None
    sweep = run_location_sweep(cfg, buses, args.output_dir, args.plots, None if args.quiet else _progress)
    if not args.output_dir:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["bus", "ENS_distribution", "ENS_microgrid"])
        for b, v in sweep.ens.items():
            w.writerow([b, repr(v), repr(sweep.microgrid_ens[b])])
    print(f"lowest distribution ENS with the microgrid at {sweep.best}", file=sys.stderr)


def _cmd_stats(args, out):
    import itertools

    import numpy as np

    from .stats import DegenerateSample, anderson_darling, ks_two_sample

    if not 2 <= len(args.results) <= 3:
        raise ConfigError("results", "give two or three result files")
    data = {}
    for path in args.results:
        try:
            data[path] = read_results_csv(path)
        except OSError as exc:
            raise ConfigError("results", f"cannot read {path}: {exc}") from None
    names = {p: (Path(p).parent.name or Path(p).stem) for p in args.results}
    if len(set(names.values())) < len(names):
        names = {p: p for p in args.results}
    networks = sorted({r["network"] for rows in data.values() for r in rows})
    ad_rows, ks_rows = [], []
    for n in networks:
        vals = {p: np.array([r[args.index] for r in rows if r["network"] == n]) for p, rows in data.items()}
        for p, v in vals.items():
            try:
                t = anderson_darling(v)
                ad_rows.append({"network": n, "sample": names[p], "A2": t.statistic, "A2_adjusted": t.adjusted,
                                "p_value": t.p_value, "normal_rejected": t.reject_at_5pct})
            except (DegenerateSample, ValueError) as exc:
                ad_rows.append({"network": n, "sample": names[p], "A2": float("nan"), "A2_adjusted": float("nan"),
                                "p_value": float("nan"), "normal_rejected": str(exc)})
        for a, b in itertools.combinations(args.results, 2):
            if len(vals[a]) == 0 or len(vals[b]) == 0:
                continue
            t = ks_two_sample(vals[a], vals[b])
            ks_rows.append({"network": n, "pair": f"{names[a]} vs {names[b]}", "D": t.statistic,
                            "p_value": t.p_value, "different": t.reject_at_5pct})
    if args.format == "json":
        out.write(json.dumps({"anderson_darling": ad_rows, "kolmogorov_smirnov": ks_rows}, indent=1) + "\n")
        return
    w = csv.writer(out, lineterminator="\n")
    for table in (ad_rows, ks_rows):
        if table:
            w.writerow(list(table[0]))
            for r in table:
                w.writerow([repr(v) if isinstance(v, float) else v for v in r.values()])
            w.writerow([])


def _cmd_loadflow(args, out):
    from .network import find_sub_systems
    from .powerflow import solve_fbs

    try:
        net = load_network(args.network)
    except DatasetError as exc:
        raise ConfigError("--network", str(exc)) from None
    sub = next(s for s in find_sub_systems(net) if s.has_slack)
    inj = {}
    for ld in net.loads:
        if args.loading == "nominal":
            p, q = ld.p_mw, ld.q_mvar
        else:
            p, q = ld.peak_mw, ld.peak_mw * ld.q_mvar / ld.p_mw if ld.p_mw > 0 else 0.0
        inj[ld.bus] = (p / net.base_mva, q / net.base_mva)
    sol = solve_fbs(net, sub, inj)
    buf_bus, buf_line = io.StringIO(), io.StringIO()
    wb = csv.writer(buf_bus, lineterminator="\n")
    wb.writerow(["bus", "voltage_pu", "angle_rad"])
    for b in sol.voltage:
        wb.writerow([b, repr(sol.voltage[b]), repr(sol.angle[b])])
    wl = csv.writer(buf_line, lineterminator="\n")
    wl.writerow(["line", "p_mw", "q_mvar", "p_loss_mw", "q_loss_mvar"])
    for ln in net.lines:
        if ln.id in sol.p_line:
            s = net.base_mva
            wl.writerow([ln.id, repr(sol.p_line[ln.id] * s), repr(sol.q_line[ln.id] * s),
                         repr(sol.p_loss[ln.id] * s), repr(sol.q_loss[ln.id] * s)])
    if args.output_dir:
        d = Path(args.output_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / "bus_voltages.csv").write_text(buf_bus.getvalue())
        (d / "line_flows.csv").write_text(buf_line.getvalue())
    else:
        out.write(buf_bus.getvalue() + "\n" + buf_line.getvalue())
    status = "converged" if sol.converged else f"not converged: {sol.message}"
    print(f"{status} after {sol.iterations} iterations; minimum voltage {sol.min_voltage:.6f} pu", file=sys.stderr)
    if not sol.converged:
        raise RuntimeError(sol.message)


def _cmd_validate(args, out):
    try:
        net = load_network(args.network)
    except DatasetError as exc:
        raise ConfigError("--network", str(exc)) from None
    rep = validate(net)
    out.write(str(rep) + "\n")
    if not rep.ok:
        raise ConfigError("--network", f"{len(rep)} invariant violation(s)")


COMMANDS = {"simulate": _cmd_simulate, "scenarios": _cmd_scenarios, "sensitivity": _cmd_sensitivity,
            "locate": _cmd_locate, "stats": _cmd_stats, "loadflow": _cmd_loadflow, "validate": _cmd_validate}


def main(argv=None) -> int:
    out = sys.stdout
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args, out)
    except (UsageError, ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
