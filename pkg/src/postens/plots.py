"""Figure rendering for benchmark reports (Agg backend, reproducible bytes)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .benchmark import BenchmarkReport

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}

_MARKERS = {"partition-log-linear": "o", "sparse-partition-log-linear": "s", "als": "^"}


def save_error_figure(report: BenchmarkReport, path) -> None:
    """Median prediction error versus sample count, one line per method."""
    with matplotlib.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for meth in report.methods:
            xs = list(report.n_grid)
            ys = [report.medians[meth][n] for n in xs]
            ax.plot(xs, ys, marker=_MARKERS.get(meth, "x"), label=meth)
        ax.set_xscale("log")
        if all(v > 0 for series in report.medians.values() for v in series.values()):
            ax.set_yscale("log")
        ax.set_xlabel("measurements n")
        ax.set_ylabel("median prediction error")
        ax.legend()
        fig.tight_layout()
        # strip the writer tag so repeated runs give identical bytes
        fig.savefig(path, format="png", metadata={"Software": None})
        plt.close(fig)
