"""Figure rendering for run and sweep outputs.

matplotlib is imported lazily and pinned to the Agg backend so figure
rendering works headless and never blocks a terminal session.
"""

from __future__ import annotations

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def render_run_figures(trace, path: str, cfg=None) -> None:
    """2x2 panel: gap, distance to the saddle, estimate errors, round time."""
    plt = _pyplot()
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))

    ax = axes[0, 0]
    ax.loglog(trace.t, np.maximum(trace.gap, 1e-300))
    ax.set_xlabel("round")
    ax.set_ylabel("gap at averaged midpoint")
    ax.set_title("primal-dual gap")

    ax = axes[0, 1]
    if np.all(np.isnan(trace.dist_sq)):
        ax.text(0.5, 0.5, "no interior saddle", ha="center", va="center")
        ax.set_axis_off()
    else:
        ax.semilogy(trace.t, np.maximum(trace.dist_sq, 1e-300))
        ax.set_xlabel("round")
        ax.set_ylabel("squared distance")
    ax.set_title("distance to saddle")

    ax = axes[1, 0]
    for label, series in (
        ("x at anchor", trace.err_x_t),
        ("y at anchor", trace.err_y_t),
        ("x at midpoint", trace.err_x_hat),
        ("y at midpoint", trace.err_y_hat),
    ):
        ax.semilogy(trace.t, np.maximum(series, 1e-300), label=label, linewidth=0.8)
    ax.set_xlabel("round")
    ax.set_ylabel("aggregate error norm")
    ax.set_title("gradient estimate error")
    ax.legend(fontsize=8)

    ax = axes[1, 1]
    ax.plot(trace.t, trace.wall_ms, linewidth=0.6)
    ax.set_xlabel("round")
    ax.set_ylabel("wall ms")
    ax.set_title("round time")

    if cfg is not None:
        fig.suptitle(
            f"{cfg.problem} / {cfg.algo}, M={cfg.agents}, alpha={cfg.alpha}, "
            f"sigma2={cfg.sigma2}, eta={cfg.eta:.4g}",
            fontsize=10,
        )
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep_figure(report: dict, floors_by_value: dict, path: str) -> None:
    """Median error floor versus the swept value, trials as faint points."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    values = report["values"]
    positions = np.arange(len(values), dtype=np.float64)
    for pos, value in zip(positions, values):
        floors = np.asarray(floors_by_value[value], dtype=np.float64)
        ax.plot(np.full(floors.size, pos), floors, "o", color="#888888", markersize=4)
    ax.plot(positions, report["median_floors"], "s-", color="#1f4e8c", label="median")
    finite = [f for f in report["median_floors"] if f > 0]
    if finite:
        ax.set_yscale("log")
    ax.set_xticks(positions)
    ax.set_xticklabels([str(v) for v in values])
    ax.set_xlabel(report["param"])
    ax.set_ylabel("error floor")
    ax.set_title(
        f"median floors {report['observed_direction']}, "
        f"expected {report['expected_direction']}"
    )
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
