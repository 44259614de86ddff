"""Render solver traces as convergence figures.

One line per (solver, seed), or a median line with an interquartile band per
solver when several seeds are present. Output is a vector image written
without timestamps, so reruns are byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "traceplot"  # deterministic element ids

import matplotlib.pyplot as plt
import numpy as np

from .traces import SchemaError, Trace, load_trace

Y_CHOICES = ("residual", "dist", "consensus")
X_CHOICES = ("iteration", "oracle_calls")

_X_COLUMN = {"iteration": "k", "oracle_calls": "oracle_calls"}


@dataclass
class PlotSpec:
    trace_files: list
    y: str = "residual"
    x: str = "iteration"
    logx: bool = False
    logy: bool = False
    out: str = "traces.svg"
    band: bool = True

    def __post_init__(self):
        if self.y not in Y_CHOICES:
            raise ValueError(f"y must be one of {Y_CHOICES}")
        if self.x not in X_CHOICES:
            raise ValueError(f"x must be one of {X_CHOICES}")
        if not self.trace_files:
            raise ValueError("at least one trace file is required")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    band: tuple | None = None  # (lower, upper) quartiles when aggregated


@dataclass
class PlotResult:
    path: Path
    series: list = field(default_factory=list)


def _column(trace: Trace, name: str) -> np.ndarray:
    if name not in trace.columns:
        raise SchemaError(f"{trace.path} has no column {name!r}")
    return trace.columns[name]


def _aggregate(traces: list, spec: PlotSpec) -> Series:
    """Median and interquartile band across seeds, aligned on iterations."""
    length = min(len(t) for t in traces)
    ys = np.stack([_column(t, spec.y)[:length] for t in traces])
    x = _column(traces[0], _X_COLUMN[spec.x])[:length]
    lo, mid, hi = np.percentile(ys, [25, 50, 75], axis=0)
    label = f"{traces[0].solver} (median of {len(traces)} seeds)"
    return Series(label=label, x=x, y=mid, band=(lo, hi))


def plot_traces(spec: PlotSpec) -> PlotResult:
    """Draw the requested figure and return the plotted series for inspection."""
    traces = [load_trace(p) for p in spec.trace_files]

    by_solver: dict = {}
    for trace in traces:
        by_solver.setdefault(trace.solver, []).append(trace)

    series: list[Series] = []
    for solver in sorted(by_solver):
        group = sorted(by_solver[solver], key=lambda t: str(t.seed))
        if spec.band and len(group) > 1:
            series.append(_aggregate(group, spec))
        else:
            for trace in group:
                series.append(Series(
                    label=trace.label,
                    x=_column(trace, _X_COLUMN[spec.x]),
                    y=_column(trace, spec.y),
                ))

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for s in series:
        (line,) = ax.plot(s.x, s.y, label=s.label)
        if s.band is not None:
            ax.fill_between(s.x, s.band[0], s.band[1],
                            color=line.get_color(), alpha=0.2, linewidth=0)
    if spec.logx:
        ax.set_xscale("log")
    if spec.logy:
        ax.set_yscale("log")
    ax.set_xlabel("iteration" if spec.x == "iteration" else "pseudogradient evaluations")
    ax.set_ylabel(spec.y)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()

    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    # drop the creation date so identical inputs give identical bytes
    fig.savefig(out, format=out.suffix.lstrip(".") or "svg", metadata={"Date": None})
    plt.close(fig)
    return PlotResult(path=out, series=series)
