"""Figure rendering for the CLI report path.

Each CSV artifact gets a companion PNG next to it: error-decay curves on a
log scale for rank reports, residual/functional histories for solver
traces. Rendering is headless (Agg backend).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first

_STYLE = {
    "figure.figsize": (5.2, 3.4),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
}


def _new_axes():
    plt.rcParams.update(_STYLE)
    fig, ax = plt.subplots()
    return fig, ax


def save_error_figure(path, report, title="", label="error") -> None:
    """Semilog error-vs-rank decay plot for an ErrorReport."""
    fig, ax = _new_axes()
    ms = report.ms
    errs = [max(e, 1e-300) for e in report.errors]
    ax.semilogy(ms, errs, "o-", markersize=3, label=label)
    ax.set_xlabel("m")
    ax.set_ylabel("error")
    if title:
        ax.set_title(title)
    ax.legend(loc="best")
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def save_trace_figure(path, trace, title="") -> None:
    """Residual and functional history for a SolveTrace."""
    fig, ax = _new_axes()
    ks = [r.k for r in trace.records]
    resid = [max(r.resid, 1e-300) for r in trace.records]
    ax.semilogy(ks, resid, "o-", markersize=3, label="residual")
    ax.set_xlabel("iteration")
    ax.set_ylabel("residual norm")
    if title:
        ax.set_title(title)
    ax.legend(loc="best")
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def save_pair_figure(path, xs, series, xlabel, ylabel, title="") -> None:
    """Generic multi-series semilog plot; ``series`` maps label -> values."""
    fig, ax = _new_axes()
    for label, values in series.items():
        vals = [max(v, 1e-300) for v in values]
        ax.semilogy(xs, vals, "o-", markersize=3, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(loc="best")
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
