"""Figure rendering for solver traces and experiment reports.

Uses the non-interactive matplotlib backend; every function writes one PNG
and returns its path. The CSV files written next to the figures remain the
authoritative record, the figures are companions for quick inspection.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiments import MEAN_AVAR, MEAN_SEMIDEVIATION


def master_trace_figure(trace, path) -> str:
    """Lower bound eta and upper bound rho per outer iteration."""
    it = [row.iteration for row in trace]
    eta = [row.eta for row in trace]
    rho = [row.rho for row in trace]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(it, rho, "o-", label="risk of incumbent (rho)")
    ax.plot(it, eta, "s--", label="master bound (eta)")
    ax.set_xlabel("iteration")
    ax.set_ylabel("value")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def residual_trace_figure(result, path) -> str:
    """Coupling and consistency residual decay for one scenario's
    distributed solve."""
    coupling = np.asarray(result.state.coupling_history)
    consistency = np.asarray(result.state.consistency_history)
    it = np.arange(1, coupling.size + 1)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogy(it, np.maximum(coupling, 1e-16), label="coupling residual")
    ax.semilogy(it, np.maximum(consistency, 1e-16),
                label="consistency residual")
    ax.set_xlabel("iteration")
    ax.set_ylabel("residual (inf norm)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def proportion_histogram_figure(report, path) -> str:
    """Delivered-proportion distributions at the configurations chosen by
    the two aggregation methods, one panel per measure family."""
    families = [MEAN_AVAR, MEAN_SEMIDEVIATION]
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.0), sharey=True)
    for ax, family in zip(axes, families):
        for method, style in (("aggregate", {"alpha": 0.6}),
                              ("evaluate", {"alpha": 0.6})):
            samples = report.proportions.get((family, method))
            if samples is None:
                continue
            ax.hist(samples, bins=20, range=(0.0, 1.0),
                    label="%s-first" % method, **style)
        ax.set_title(family)
        ax.set_xlabel("delivered proportion")
        ax.legend()
    axes[0].set_ylabel("scenarios")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def aggregation_comparison_figure(report, path) -> str:
    """Optimal risk values of the two aggregation methods per tail level;
    the semideviation family contributes a single level-independent pair."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    av_rows = [r for r in report.rows if r.family == MEAN_AVAR]
    if av_rows:
        alphas = [r.alpha for r in av_rows]
        ax.plot(alphas, [r.aggregate_value for r in av_rows], "o-",
                label="aggregate-first (mean-avar)")
        ax.plot(alphas, [r.evaluate_value for r in av_rows], "s--",
                label="evaluate-first (mean-avar)")
    for r in report.rows:
        if r.family == MEAN_SEMIDEVIATION:
            ax.axhline(r.aggregate_value, color="C2", linestyle="-",
                       label="aggregate-first (semideviation)")
            ax.axhline(r.evaluate_value, color="C3", linestyle="--",
                       label="evaluate-first (semideviation)")
    ax.set_xlabel("tail level alpha")
    ax.set_ylabel("optimal risk value")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def multivariate_figure(report, path) -> str:
    """Tail risk of the scalarized loss next to the two multivariate
    measures across tail levels."""
    alphas = [r.alpha for r in report.rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(alphas, [r.avar for r in report.rows], "o-", label="tail risk")
    ax.plot(alphas, [r.vmavar for r in report.rows], "s--",
            label="vector tail risk (scalarized)")
    mv = [(r.alpha, r.mavar) for r in report.rows if not r.degenerate]
    if mv:
        ax.plot([a for a, _ in mv], [m for _, m in mv], "d:",
                label="conditional level-set risk")
    ax.set_xlabel("tail level alpha")
    ax.set_ylabel("value")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)
