"""Figures for the report path: cluster mix, top flows, flow graph, runtimes.

Everything renders off-screen (Agg) straight to image files.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

LABEL_ORDER = ("SC", "VC1", "VC2", "VC3", "VC4")
LABEL_COLORS = {"SC": "#4c72b0", "VC1": "#dd8452", "VC2": "#55a868", "VC3": "#c44e52", "VC4": "#8172b3"}

_RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _figure(width=6.0, height=None):
    golden = (math.sqrt(5) - 1.0) / 2.0
    return plt.subplots(figsize=(width, height or width * golden))


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def cluster_summary_chart(summary: dict, path, title: str = "Cluster summary") -> Path:
    """Pie of promoted clusters per label; empty labels are left out of the pie."""
    with plt.rc_context(_RC):
        fig, ax = _figure(5.0, 4.0)
        labels = [l for l in LABEL_ORDER if summary.get(l, 0)]
        counts = [summary[l] for l in labels]
        if counts:
            wedges, _, _ = ax.pie(counts, colors=[LABEL_COLORS[l] for l in labels], startangle=90,
                                  autopct=lambda pct: f"{pct:.1f}%" if pct >= 3 else "",
                                  wedgeprops={"linewidth": 0.8, "edgecolor": "white"})
            ax.legend(wedges, [f"{l} ({summary[l]})" for l in labels], loc="center left",
                      bbox_to_anchor=(1.0, 0.5), frameon=False)
            ax.axis("equal")
        else:
            ax.text(0.5, 0.5, "no clusters", ha="center", va="center", transform=ax.transAxes)
            ax.set_axis_off()
        ax.set_title(title)
        return _save(fig, path)


def top_flows_chart(rows, sort_key: str, path) -> Path:
    with plt.rc_context(_RC):
        fig, ax = _figure(7.0, max(2.0, 0.35 * len(rows) + 1.0))
        names = [f"{r.src_ip} → {r.dst_ip}" for r in rows][::-1]
        values = [getattr(r, sort_key) for r in rows][::-1]
        ax.barh(range(len(values)), values, color="#4c72b0")
        ax.set_yticks(range(len(values)))
        ax.set_yticklabels(names)
        ax.set_xlabel(sort_key)
        ax.set_title(f"Top {len(rows)} flows by {sort_key}")
        return _save(fig, path)


def gflow_chart(graph, path, title: str = "Communication flows") -> Path:
    """Circular layout of the host graph; flagged hosts drawn red."""
    with plt.rc_context(_RC):
        fig, ax = _figure(6.0, 6.0)
        hosts = graph.sorted_nodes()
        n = max(len(hosts), 1)
        pos = {h: (math.cos(2 * math.pi * i / n), math.sin(2 * math.pi * i / n)) for i, h in enumerate(hosts)}
        for (s, d), _ in graph.sorted_edges():
            if s == d:
                continue
            (x0, y0), (x1, y1) = pos[s], pos[d]
            ax.annotate("", xy=(x1, y1), xytext=(x0, y0),
                        arrowprops={"arrowstyle": "-|>", "color": "0.55", "lw": 0.6,
                                    "shrinkA": 6, "shrinkB": 6})
        for h in hosts:
            x, y = pos[h]
            ax.scatter([x], [y], s=60, zorder=3, color="red" if h in graph.flagged else "#4c72b0")
            if len(hosts) <= 60:
                ax.text(x * 1.08, y * 1.08, h, fontsize=6, ha="center", va="center")
        ax.set_title(f"{title} (flagged: out-degree > {graph.flag_threshold})")
        ax.set_axis_off()
        ax.set_aspect("equal")
        return _save(fig, path)


def runtime_chart(metrics: list[dict], path) -> Path:
    """Correlation run time per batch against events and clusters."""
    with plt.rc_context(_RC):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.5))
        events = [m["timing"]["event_count"] for m in metrics]
        clusters = [m["clusters"] for m in metrics]
        runtime = [m["timing"]["total"] - m["timing"]["stages"].get("ingest", 0.0) for m in metrics]
        ax1.plot(events, runtime, "o-", color="#4c72b0")
        ax1.set_xlabel("events")
        ax1.set_ylabel("run time (s)")
        ax2.plot(clusters, runtime, "s-", color="#c44e52")
        ax2.set_xlabel("clusters")
        ax1.set_title("Correlation run time")
        return _save(fig, path)


def scaling_chart(sizes, seconds, path, fit=None) -> Path:
    with plt.rc_context(_RC):
        fig, ax = _figure(5.0)
        ax.plot(sizes, seconds, "o", color="#4c72b0", label="measured")
        if fit is not None:
            slope, intercept = fit
            ax.plot(sizes, [slope * n + intercept for n in sizes], "-", color="0.4", label="linear fit")
            ax.legend()
        ax.set_xlabel("events")
        ax.set_ylabel("correlation time (s)")
        return _save(fig, path)
