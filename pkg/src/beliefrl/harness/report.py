"""Report figures: learning curves, belief marginals, semicircle sweeps.

All figures render through the Agg backend straight to files; nothing here
opens a window. `render_run_report` turns a finished run directory's
metrics into a figures/ subdirectory.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .metrics import MetricSeries, smooth_curve  # noqa: E402


def _xy(metrics: MetricSeries, ycol: str) -> tuple[list[float], list[float]]:
    """(iteration, value) pairs for rows that carry `ycol` with a finite value."""
    xs, ys = [], []
    for row in metrics.rows:
        v = row.get(ycol)
        if isinstance(v, (int, float)) and math.isfinite(v):
            xs.append(row["iteration"])
            ys.append(v)
    return xs, ys


def learning_curves_figure(metrics: MetricSeries, path: str | Path,
                           smooth_window: int = 10) -> Path:
    """Four-panel training overview: returns, losses, belief NLL, diagnostics."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(2, 2, figsize=(11, 7))

    ax = axes[0, 0]
    xs, ys = _xy(metrics, "episode_return")
    if xs:
        ax.plot(xs, ys, color="0.8", lw=0.8, label="per-iteration")
        ax.plot(xs, smooth_curve(ys, smooth_window), color="C0", lw=1.6,
                label=f"smoothed (w={smooth_window})")
    xs, ys = _xy(metrics, "eval_return")
    if xs:
        err = dict(zip(*_xy(metrics, "eval_stderr")))
        bars = [err.get(x, 0.0) for x in xs]
        ax.errorbar(xs, ys, yerr=bars, color="C3", marker="o", ms=3, lw=1.2,
                    label="evaluation")
    ax.set_title("episode return")
    ax.set_xlabel("iteration")
    ax.legend(fontsize=8)

    ax = axes[0, 1]
    for col, color in (("policy_loss", "C0"), ("critic_loss", "C1")):
        xs, ys = _xy(metrics, col)
        if xs:
            ax.plot(xs, ys, color=color, lw=1.0, label=col)
    ax.set_title("losses")
    ax.set_xlabel("iteration")
    ax.legend(fontsize=8)

    ax = axes[1, 0]
    for col, color, label in (("belief_nll", "C0", "replay NLL"),
                              ("online_belief_nll", "C3", "online NLL")):
        xs, ys = _xy(metrics, col)
        if xs:
            ax.plot(xs, ys, color=color, lw=1.2, label=label)
    ax.set_title("belief negative log-likelihood")
    ax.set_xlabel("iteration")
    ax.legend(fontsize=8)

    ax = axes[1, 1]
    for col in ("entropy", "ib_kl_actor", "ib_kl_critic", "ib_kl_belief"):
        xs, ys = _xy(metrics, col)
        if xs:
            ax.plot(xs, ys, lw=1.0, label=col)
    ax.set_title("diagnostics")
    ax.set_xlabel("iteration")
    ax.legend(fontsize=8)

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def belief_marginals_figure(marginals: np.ndarray, path: str | Path,
                            true_codes: np.ndarray | None = None,
                            factor_names: list[str] | None = None) -> Path:
    """Per-step belief marginals as one heatmap per factor.

    `marginals` has shape (T, k, c): T steps, k factors, c categories (or
    bins). Optional `true_codes` (k,) marks the hidden task's value per
    factor.
    """
    marginals = np.asarray(marginals, dtype=np.float64)
    if marginals.ndim != 3:
        raise ValueError("marginals must have shape (steps, factors, categories)")
    T, k, c = marginals.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(k, 1, figsize=(8, 1.6 * k + 1), squeeze=False)
    for f in range(k):
        ax = axes[f, 0]
        im = ax.imshow(marginals[:, f, :].T, aspect="auto", origin="lower",
                       cmap="viridis", vmin=0.0, vmax=1.0,
                       extent=(-0.5, T - 0.5, -0.5, c - 0.5))
        if true_codes is not None:
            ax.axhline(float(true_codes[f]), color="w", ls="--", lw=1.0)
        name = factor_names[f] if factor_names else f"factor {f}"
        ax.set_ylabel(name, fontsize=8)
        if f == k - 1:
            ax.set_xlabel("step")
    fig.colorbar(im, ax=[axes[f, 0] for f in range(k)], label="probability")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def hinton_figure(matrix: np.ndarray, path: str | Path,
                  factor_names: list[str] | None = None) -> Path:
    """Hinton-style diagram of one belief snapshot: squares sized by mass.

    `matrix` has shape (k, c): one row of category probabilities per factor.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError("matrix must have shape (factors, categories)")
    k, c = matrix.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(0.5 * c + 2, 0.5 * k + 1.5))
    ax.set_facecolor("0.25")
    top = np.sqrt(np.clip(matrix, 0.0, 1.0))
    for f in range(k):
        for j in range(c):
            s = top[f, j]
            if s <= 0:
                continue
            ax.add_patch(plt.Rectangle((j - s / 2, f - s / 2), s, s,
                                       facecolor="white", edgecolor="none"))
    ax.set_xlim(-0.6, c - 0.4)
    ax.set_ylim(-0.6, k - 0.4)
    ax.set_xticks(range(c))
    ax.set_yticks(range(k))
    if factor_names:
        ax.set_yticklabels(factor_names, fontsize=8)
    ax.set_xlabel("category")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def sweep_figure(paths_xy: list[np.ndarray], path: str | Path,
                 target: tuple[float, float] | None = None,
                 capture_radius: float = 0.05,
                 target_radius: float = 0.2) -> Path:
    """Semicircle exploration sweeps: one colored trace per episode."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    theta = np.linspace(0.0, np.pi, 200)
    ax.plot(target_radius * np.cos(theta), target_radius * np.sin(theta),
            color="0.7", ls=":", lw=1.0, label="target arc")
    cmap = plt.get_cmap("viridis")
    n = max(len(paths_xy), 1)
    for i, pts in enumerate(paths_xy):
        pts = np.asarray(pts)
        ax.plot(pts[:, 0], pts[:, 1], color=cmap(i / n), lw=0.9,
                label=f"episode {i + 1}" if len(paths_xy) <= 6 else None)
    if target is not None:
        circ = plt.Circle(target, capture_radius, fill=False, color="C3", lw=1.4)
        ax.add_patch(circ)
        ax.plot([target[0]], [target[1]], "x", color="C3", ms=6)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.legend(fontsize=7, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def smoothed_curve_figure(values: list[float], window: int,
                          path: str | Path, label: str = "value") -> Path:
    """Raw series with its trailing-window moving average overlaid."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = list(range(len(values)))
    ax.plot(xs, values, color="0.8", lw=0.8, label=label)
    ax.plot(xs, smooth_curve(values, window), color="C0", lw=1.6,
            label=f"smoothed (w={window})")
    ax.set_xlabel("index")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_run_report(run_dir: str | Path) -> list[Path]:
    """Render every figure derivable from a run directory's metrics."""
    run_dir = Path(run_dir)
    metrics_path = run_dir / "metrics.csv"
    out: list[Path] = []
    if metrics_path.exists():
        metrics = MetricSeries.from_csv(metrics_path)
        if len(metrics):
            out.append(learning_curves_figure(
                metrics, run_dir / "figures" / "learning_curves.png"))
    return out
