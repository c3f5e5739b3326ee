"""Static SVG renderings of the experiment outputs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed element ids and no timestamp, so repeated runs write identical files
matplotlib.rcParams["svg.hashsalt"] = "gridrel"
_META = {"Date": None}


def _save(fig, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def boxplot(study, path):
    networks = list(study.stats)
    fig, axes = plt.subplots(1, len(networks), figsize=(5 * len(networks), 4), squeeze=False)
    for ax, n in zip(axes[0], networks):
        data = [rs.values(n) for rs in study.results.values()]
        ax.boxplot(data, showfliers=False)
        ax.set_xticks(range(1, len(data) + 1), [s.upper() for s in study.results])
        ax.set_title(n.replace("_", " "))
        ax.set_ylabel("ENS [MWh/yr]")
    fig.tight_layout()
    _save(fig, path)


def interaction_plot(result, path):
    design = result.design
    names = [n for n in design.names if len(design.factors[n]) > 1]
    pairs = [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]
    networks = sorted({r["network"] for r in result.cells})
    if not pairs:
        return
    fig, axes = plt.subplots(len(networks), len(pairs), figsize=(4 * len(pairs), 3.2 * len(networks)), squeeze=False)
    for i, n in enumerate(networks):
        for j, (a, b) in enumerate(pairs):
            ax = axes[i][j]
            for la in design.factors[a]:
                ys = [r["ENS_mean"] for lb in design.factors[b] for r in result.interactions
                      if r["network"] == n and r["factor_a"] == a and r["factor_b"] == b
                      and r["level_a"] == la and r["level_b"] == lb]
                ax.plot(design.factors[b], ys, marker="o", label=f"{a}={la}")
            ax.set_xlabel(b)
            ax.set_ylabel("mean ENS [MWh/yr]")
            ax.set_title(n.replace("_", " "), fontsize=9)
            ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def heatmap(net, sweep, path):
    xy = {b.id: b.coordinates for b in net.buses}
    buses = list(sweep.ens)
    fig, ax = plt.subplots(figsize=(9, 3.5))
    for ln in net.lines:
        if ln.from_bus in sweep.ens and ln.to_bus in sweep.ens:
            (x0, y0), (x1, y1) = xy[ln.from_bus], xy[ln.to_bus]
            ax.plot([x0, x1], [y0, y1], color="0.7", lw=1, zorder=1)
    sc = ax.scatter([xy[b][0] for b in buses], [xy[b][1] for b in buses], c=[sweep.ens[b] for b in buses],
                    cmap="viridis", s=120, zorder=2)
    for b in buses:
        ax.annotate(b, xy[b], fontsize=6, ha="center", va="bottom", xytext=(0, 6), textcoords="offset points")
    fig.colorbar(sc, ax=ax, label="distribution ENS [MWh/yr]")
    ax.set_axis_off()
    fig.tight_layout()
    _save(fig, path)
