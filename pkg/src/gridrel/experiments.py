"""Scenario comparison, full-factorial sensitivity study and microgrid-location sweep."""
from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import write_results, write_rows_csv
from .engine import ResultSet, ScenarioConfig, prepare, run_simulation
from .network import DISTRIBUTION, MICROGRID, relocate_microgrid, validate
from .stats import DegenerateSample, anderson_darling, ks_two_sample

SCENARIOS = {"s1": "no_support", "s2": "full_support", "s3": "limited_support"}
FACTORS = ("battery_capacity", "repair_quantile_hours", "failure_rate")


def _dump(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1) + "\n")


# --------------------------------------------------------------------------
# scenarios


@dataclass
class ScenarioStudy:
    results: dict[str, ResultSet]
    stats: dict

    def mean(self, scenario: str, network: str, index: str = "ENS") -> float:
        return float(self.results[scenario].values(network, index).mean())

    def reduction_pct(self, scenario: str, network: str) -> float:
        base = self.mean("s1", network)
        return 100.0 * (base - self.mean(scenario, network)) / base if base > 0 else 0.0


def scenario_statistics(results: dict[str, ResultSet]) -> dict:
    out = {}
    networks = next(iter(results.values())).networks
    for n in networks:
        ad, means = {}, {}
        for s, rs in results.items():
            v = rs.values(n)
            try:
                ad[s] = anderson_darling(v).to_dict()
            except (DegenerateSample, ValueError) as exc:
                ad[s] = {"error": str(exc)}
            means[s] = {idx: float(rs.values(n, idx).mean()) for idx in ("ENS", "CENS", "SAIFI", "SAIDI", "CAIDI")}
        ks = {f"{a}_vs_{b}": ks_two_sample(results[a].values(n), results[b].values(n)).to_dict()
              for a, b in itertools.combinations(sorted(results), 2)}
        out[n] = {"means": means, "anderson_darling": ad, "kolmogorov_smirnov": ks}
    return out


def run_scenarios(base: ScenarioConfig, out_dir=None, plots: bool = False, fmt: str = "csv",
                  progress=None) -> ScenarioStudy:
    """The three controller modes on common random numbers."""
    results = {}
    for s, mode in SCENARIOS.items():
        cfg = base.replace(microgrid_mode=mode)
        results[s] = run_simulation(cfg, progress=_tagged(progress, f"scenario {s}"))
    study = ScenarioStudy(results, scenario_statistics(results))
    if out_dir is not None:
        write_scenarios(study, Path(out_dir) / "scenarios", fmt, plots)
    return study


def _tagged(progress, tag):
    if progress is None:
        return None
    return lambda done, total: progress(tag, done, total)


def write_scenarios(study: ScenarioStudy, d: Path, fmt: str = "csv", plots: bool = False):
    for s, rs in study.results.items():
        write_results(rs, d / s, fmt)
    _dump(d / "stats.json", study.stats)
    networks = list(study.stats)
    rows = []
    for n in networks:
        for s in study.results:
            m = study.stats[n]["means"][s]
            rows.append({"network": n, "scenario": s, **m, "ENS_reduction_pct": study.reduction_pct(s, n)})
    cols = ("network", "scenario", "ENS", "CENS", "SAIFI", "SAIDI", "CAIDI", "ENS_reduction_pct")
    write_rows_csv(d / "means.csv", rows, cols)
    box = []
    for n in networks:
        for s, rs in study.results.items():
            v = rs.values(n)
            q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0]) if len(v) else np.zeros(5)
            box.append({"network": n, "scenario": s, "min": q[0], "q1": q[1], "median": q[2],
                        "q3": q[3], "max": q[4], "mean": float(v.mean()) if len(v) else 0.0})
    write_rows_csv(d / "boxplot.csv", box, ("network", "scenario", "min", "q1", "median", "q3", "max", "mean"))
    (d / "report.md").write_text(scenario_report(study))
    if plots:
        from . import plots as plotting
        plotting.boxplot(study, d / "boxplot.svg")


def scenario_report(study: ScenarioStudy) -> str:
    lines = ["# Scenario study", ""]
    any_rs = next(iter(study.results.values()))
    lines.append(f"Iterations per scenario: {len(any_rs)}; master seed {any_rs.master_seed}.")
    lines.append("")
    for n, st in study.stats.items():
        lines.append(f"## {n}")
        lines.append("")
        lines.append("| scenario | mean ENS (MWh) | reduction vs s1 (%) | SAIFI | SAIDI (h) | CAIDI (h) | A^2 |")
        lines.append("|---|---|---|---|---|---|---|")
        for s in study.results:
            m = st["means"][s]
            a2 = st["anderson_darling"][s].get("statistic", float("nan"))
            lines.append(f"| {s} | {m['ENS']:.4f} | {study.reduction_pct(s, n):.2f} | {m['SAIFI']:.4f} "
                         f"| {m['SAIDI']:.4f} | {m['CAIDI']:.4f} | {a2:.2f} |")
        lines.append("")
        lines.append("| pair | KS D | p-value | different at 5 % |")
        lines.append("|---|---|---|---|")
        for pair, r in st["kolmogorov_smirnov"].items():
            lines.append(f"| {pair.replace('_', ' ')} | {r['statistic']:.4f} | {r['p_value']:.3g} "
                         f"| {'yes' if r['reject_at_5pct'] else 'no'} |")
        lines.append("")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# factorial design


@dataclass
class FactorialDesign:
    factors: dict = field(default_factory=lambda: {
        "battery_capacity": [1.0, 2.0],
        "repair_quantile_hours": [1.0, 2.0, 3.0],
        "failure_rate": [0.05, 0.07, 0.09],
    })
    repair_shape: float = 2.0
    repair_quantile_prob: float = 0.67

    def __post_init__(self):
        for name, levels in self.factors.items():
            if name not in FACTORS:
                raise ValueError(f"unknown factor {name!r}; expected one of {', '.join(FACTORS)}")
            if not levels:
                raise ValueError(f"factor {name!r} has no levels")
            if len(set(levels)) != len(levels):
                raise ValueError(f"factor {name!r} has repeated levels")

    @property
    def names(self) -> list[str]:
        return list(self.factors)

    def combinations(self) -> list[dict]:
        names = self.names
        return [dict(zip(names, combo)) for combo in itertools.product(*(self.factors[n] for n in names))]

    def __len__(self):
        return int(np.prod([len(v) for v in self.factors.values()]))

    def apply(self, base: ScenarioConfig, cell: dict) -> ScenarioConfig:
        kw = {}
        if "battery_capacity" in cell:
            kw["battery"] = {**base.battery, "capacity": float(cell["battery_capacity"])}
        if "repair_quantile_hours" in cell:
            kw["repair"] = {"shape": self.repair_shape, "quantile_hours": float(cell["repair_quantile_hours"]),
                            "quantile_prob": self.repair_quantile_prob}
        if "failure_rate" in cell:
            kw["failure_rate_per_km"] = float(cell["failure_rate"])
        return base.replace(**kw)

    def check(self, base: ScenarioConfig):
        """Warn when limited support cannot keep its reserve at some battery level."""
        if base.microgrid_mode != "limited_support":
            return
        ctx = prepare(base)
        for cap in self.factors.get("battery_capacity", []):
            for spec in ctx.bat_spec:
                need = spec.min_soc * cap + base.reserve_hours * ctx.peak_mg_load
                if need >= cap:
                    warnings.warn(f"battery capacity {cap} MWh cannot hold the {base.reserve_hours} h reserve "
                                  f"({need:.3f} MWh); limited support will never export", stacklevel=2)


@dataclass
class FactorialResult:
    design: FactorialDesign
    cells: list[dict]                  # one row per combination and network
    values: dict                       # (cell index, network) -> per-iteration ENS
    main_effects: list[dict]
    interactions: list[dict]

    def cell_mean(self, network: str, **levels) -> float:
        for row in self.cells:
            if row["network"] == network and all(row[k] == v for k, v in levels.items()):
                return row["ENS_mean"]
        raise KeyError(levels)

    def main_effect(self, network: str, factor: str) -> float:
        for row in self.main_effects:
            if row["network"] == network and row["factor"] == factor:
                return row["effect"]
        raise KeyError(factor)

    def interaction(self, network: str, a: str, b: str) -> dict:
        """Difference of differences between the extreme levels of ``a`` and
        ``b``, averaged over the other factors, with its paired MC standard error."""
        levels_a, levels_b = self.design.factors[a], self.design.factors[b]
        combos = self.design.combinations()
        acc = None
        count = 0
        others = [n for n in self.design.names if n not in (a, b)]
        other_levels = itertools.product(*(self.design.factors[n] for n in others))
        for rest in other_levels:
            fixed = dict(zip(others, rest))

            def vec(la, lb):
                key = {**fixed, a: la, b: lb}
                k = combos.index({n: key[n] for n in self.design.names})
                return self.values[(k, network)]

            dod = (vec(levels_a[-1], levels_b[-1]) - vec(levels_a[0], levels_b[-1])) - \
                  (vec(levels_a[-1], levels_b[0]) - vec(levels_a[0], levels_b[0]))
            acc = dod if acc is None else acc + dod
            count += 1
        acc = acc / count
        n = len(acc)
        se = float(acc.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
        return {"network": network, "factor_a": a, "factor_b": b, "dod": float(acc.mean()), "se": se}


def run_factorial(design: FactorialDesign, base: ScenarioConfig, out_dir=None, plots: bool = False,
                  progress=None) -> FactorialResult:
    """Every combination of the design on common random numbers."""
    design.check(base)
    combos = design.combinations()
    cells, values = [], {}
    networks = None
    for k, cell in enumerate(combos):
        rs = run_simulation(design.apply(base, cell), progress=_tagged(progress, f"cell {k + 1}/{len(combos)}"))
        networks = rs.networks
        for n in rs.networks:
            v = rs.values(n)
            values[(k, n)] = v
            cells.append({"cell": k, **cell, "network": n, "ENS_mean": float(v.mean()),
                          "ENS_std": float(v.std(ddof=1)) if len(v) > 1 else 0.0, "iterations": len(v)})
    main, inter = [], []
    for n in networks:
        rows = [r for r in cells if r["network"] == n]
        for f in design.names:
            means = {lv: float(np.mean([r["ENS_mean"] for r in rows if r[f] == lv])) for lv in design.factors[f]}
            for lv, m in means.items():
                main.append({"network": n, "factor": f, "level": lv, "ENS_mean": m,
                             "effect": max(means.values()) - min(means.values())})
        for a, b in itertools.combinations(design.names, 2):
            for la in design.factors[a]:
                for lb in design.factors[b]:
                    m = float(np.mean([r["ENS_mean"] for r in rows if r[a] == la and r[b] == lb]))
                    inter.append({"network": n, "factor_a": a, "level_a": la, "factor_b": b, "level_b": lb,
                                  "ENS_mean": m})
    # one row per factor in the main-effect table
    seen, main_rows = set(), []
    for r in main:
        key = (r["network"], r["factor"])
        if key not in seen:
            seen.add(key)
            main_rows.append({"network": r["network"], "factor": r["factor"], "effect": r["effect"]})
    result = FactorialResult(design, cells, values, main_rows, inter)
    if out_dir is not None:
        d = Path(out_dir) / "factorial"
        write_rows_csv(d / "cells.csv", cells, ("cell", *design.names, "network", "ENS_mean", "ENS_std", "iterations"))
        write_rows_csv(d / "interactions.csv", inter,
                       ("network", "factor_a", "level_a", "factor_b", "level_b", "ENS_mean"))
        write_rows_csv(d / "main_effects.csv", main,
                       ("network", "factor", "level", "ENS_mean", "effect"))
        dods = [result.interaction(n, a, b) for n in networks
                for a, b in itertools.combinations(design.names, 2)
                if len(design.factors[a]) > 1 and len(design.factors[b]) > 1]
        write_rows_csv(d / "difference_of_differences.csv", dods, ("network", "factor_a", "factor_b", "dod", "se"))
        if plots:
            from . import plots as plotting
            plotting.interaction_plot(result, d / "interaction.svg")
    return result


# --------------------------------------------------------------------------
# location sweep


@dataclass
class LocationSweep:
    ens: dict[str, float]
    microgrid_ens: dict[str, float]

    @property
    def best(self) -> str:
        return min(self.ens, key=lambda b: (self.ens[b], b))


def run_location_sweep(base: ScenarioConfig, buses=None, out_dir=None, plots: bool = False,
                       progress=None) -> LocationSweep:
    """Mean distribution ENS with the microgrid connected at each distribution bus."""
    ctx = prepare(base)
    net = ctx.net
    if net.microgrid_connection_line is None:
        raise ValueError("network has no microgrid to relocate")
    buses = list(buses) if buses is not None else list(net.networks[DISTRIBUTION])
    ens, mg = {}, {}
    for k, b in enumerate(buses):
        moved = relocate_microgrid(net, b)
        rep = validate(moved)
        if not rep.ok:
            raise ValueError(f"relocating the microgrid to {b} gives an invalid network:\n{rep}")
        rs = run_simulation(base.replace(microgrid_location=b),
                            progress=_tagged(progress, f"bus {b} ({k + 1}/{len(buses)})"))
        ens[b] = float(rs.values(DISTRIBUTION).mean())
        mg[b] = float(rs.values(MICROGRID).mean()) if MICROGRID in rs.networks else 0.0
    sweep = LocationSweep(ens, mg)
    if out_dir is not None:
        d = Path(out_dir) / "location"
        xy = {bb.id: bb.coordinates for bb in net.buses}
        rows = [{"bus": b, "x": float(xy[b][0]), "y": float(xy[b][1]), "ENS_distribution": ens[b],
                 "ENS_microgrid": mg[b]} for b in buses]
        write_rows_csv(d / "heatmap.csv", rows, ("bus", "x", "y", "ENS_distribution", "ENS_microgrid"))
        if plots:
            from . import plots as plotting
            plotting.heatmap(net, sweep, d / "heatmap.svg")
    return sweep
