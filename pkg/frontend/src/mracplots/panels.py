"""Panel definitions and figure rendering.

Each panel knows which trace columns it needs per mode; rendering stacks
the requested panels into one figure and overlays every given trace with
a legend. Output bytes are reproducible: no timestamps are embedded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .reader import Trace, TraceError, read_trace

# panel -> {mode: [(column, line label)]}
PANELS = {
    "speed_tracking": {
        "acc": [("v", "follower {label}"), ("v_m", "reference {label}")],
        "generic-mrac": [("y_p", "plant {label}"), ("y_m", "model {label}")],
    },
    "spacing_error": {"acc": [("delta", "{label}")]},
    "control_input": {
        "acc": [("u", "{label}")],
        "generic-mrac": [("u_p", "{label}")],
    },
    "gains": {
        "acc": [("k1", "k1 {label}"), ("k2", "k2 {label}"), ("k3", "k3 {label}")],
    },
    "covariance_diag": {
        "acc": [("P11", "P11 {label}"), ("P22", "P22 {label}"),
                ("P33", "P33 {label}")],
    },
    "lyapunov": {
        "acc": [("V", "{label}")],
        "generic-mrac": [("V", "{label}")],
    },
}

_YLABELS = {
    "speed_tracking": "speed [m/s]",
    "spacing_error": "spacing error [m]",
    "control_input": "control input",
    "gains": "adapted gains",
    "covariance_diag": "covariance diagonal",
    "lyapunov": "decrease function V",
}


def _dynamic_columns(panel, trace):
    """Column list for panels whose generic-mrac width depends on n."""
    cols = trace.frame.columns
    if panel == "gains":
        names = [c for c in cols if c.startswith("theta_")]
        return [(c, c + " {label}") for c in names]
    if panel == "covariance_diag":
        names = [c for c in cols if c.startswith(("Pdiag_", "Gammadiag_"))]
        return [(c, c + " {label}") for c in names]
    return None


@dataclass
class PlotSpec:
    """What to draw: trace files, panel list, output path, title."""

    traces: list
    panels: list
    out: Path
    title: str = ""
    dpi: int = 120

    def __post_init__(self):
        if not self.traces:
            raise TraceError("need at least one trace file")
        bad = [p for p in self.panels if p not in PANELS]
        if bad:
            raise TraceError(
                f"unknown panels: {', '.join(bad)} "
                f"(choose from {', '.join(sorted(PANELS))})"
            )
        if not self.panels:
            raise TraceError("need at least one panel")
        self.out = Path(self.out)


def _series_for(panel, trace: Trace):
    spec = PANELS[panel]
    if trace.mode == "generic-mrac" and panel in ("gains", "covariance_diag"):
        pairs = _dynamic_columns(panel, trace)
        if not pairs:
            raise TraceError(
                f"{trace.path}: no gain columns found for panel {panel!r}"
            )
    else:
        if trace.mode not in spec:
            raise TraceError(
                f"panel {panel!r} is not defined for mode {trace.mode!r}"
            )
        pairs = spec[trace.mode]
    trace.require_columns([c for c, _ in pairs])
    if panel == "lyapunov" and not np.isfinite(trace.frame["V"]).any():
        raise TraceError(
            f"{trace.path}: V column is empty; the lyapunov panel needs an "
            "analysis-mode trace"
        )
    return pairs


def render(spec: PlotSpec) -> Path:
    """Draw the requested panels into one image; returns the output path."""
    traces = [t if isinstance(t, Trace) else read_trace(t) for t in spec.traces]
    n = len(spec.panels)
    fig, axes = plt.subplots(n, 1, figsize=(9, 2.8 * n), sharex=True, squeeze=False)
    for ax, panel in zip(axes[:, 0], spec.panels):
        for trace in traces:
            pairs = _series_for(panel, trace)
            t = trace.frame["t"]
            for col, label_fmt in pairs:
                y = trace.frame[col]
                ax.plot(t, y, linewidth=1.0,
                        label=label_fmt.format(label=trace.label))
            if panel == "speed_tracking" and "v_l" in trace.frame.columns:
                ax.plot(t, trace.frame["v_l"], linestyle="--", linewidth=0.8,
                        color="black", label="lead")
        ax.set_ylabel(_YLABELS[panel])
        ax.grid(True, alpha=0.3)
        handles, labels = ax.get_legend_handles_labels()
        seen = dict(zip(labels, handles))
        ax.legend(seen.values(), seen.keys(), fontsize=8, loc="upper right")
    axes[-1, 0].set_xlabel("time [s]")
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    spec.out.parent.mkdir(parents=True, exist_ok=True)
    # Software tag suppressed so repeated renders are byte-identical
    fig.savefig(spec.out, dpi=spec.dpi, metadata={"Software": None})
    plt.close(fig)
    return spec.out
