"""Figures for sweep reports, rendered with the Agg backend straight to files."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .metrics import MetricsReport

STYLE = {"observed": dict(marker="o", ls="-", ms=4), "model": dict(ls="--", lw=1.2)}


def _figure(ncols: int) -> Figure:
    fig = Figure(figsize=(4.2 * ncols, 3.4), layout="constrained")
    FigureCanvasAgg(fig)
    return fig


def _by_width(reports: Sequence[MetricsReport]) -> dict[int, list[MetricsReport]]:
    groups: dict[int, list[MetricsReport]] = {}
    for r in reports:
        groups.setdefault(r.w, []).append(r)
    return {w: sorted(rs, key=lambda r: r.delta) for w, rs in sorted(groups.items())}


def plot_delta_sweep(
    reports: Sequence[MetricsReport], path, model: Optional[Sequence[MetricsReport]] = None, fn_basis: str = "query",
) -> Path:
    """FN rate, FP per query and F-score against delta, one line per width."""
    fig = _figure(3)
    axes = fig.subplots(1, 3)
    panels = [("FN rate", lambda r: r.fn_for(fn_basis)), ("FP per query", lambda r: r.fp_per_query),
              ("F-score", lambda r: r.fscore)]
    for kind, series in (("observed", reports), ("model", model or [])):
        for w, rs in _by_width(series).items():
            xs = [r.delta for r in rs]
            for ax, (_, get) in zip(axes, panels):
                ax.plot(xs, [get(r) for r in rs], label=f"w={w} {kind}", **STYLE[kind])
    for ax, (label, _) in zip(axes, panels):
        ax.set_xlabel("delta")
        ax.set_ylabel(label)
    axes[1].set_yscale("symlog", linthresh=1.0)
    axes[2].legend(fontsize=7)
    out = Path(path)
    fig.savefig(out, dpi=120)
    return out


def plot_width_sweep(reports: Sequence[MetricsReport], path) -> Path:
    """Optimized F-score and FP per query against width."""
    rs = sorted(reports, key=lambda r: r.w)
    fig = _figure(2)
    a, b = fig.subplots(1, 2)
    a.plot([r.w for r in rs], [r.fscore for r in rs], **STYLE["observed"])
    a.set_xlabel("w")
    a.set_ylabel("F-score at delta_opt")
    b.plot([r.w for r in rs], [r.fp_per_query for r in rs], **STYLE["observed"])
    b.set_xlabel("w")
    b.set_ylabel("FP per query at delta_opt")
    out = Path(path)
    fig.savefig(out, dpi=120)
    return out
