"""Figure output for the report-producing commands (PNG/PDF/SVG by suffix)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_beta_sweep(sweep, path) -> Path:
    """Objective of every design against beta, selected design circled."""
    betas = [b for b, _, _ in sweep]
    names = [r.design.name for r in sweep[0][2]]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for i, name in enumerate(names):
            ax.plot(betas, [reports[i].objective for _, _, reports in sweep],
                    marker="o", ms=3, lw=1, label=name)
        for beta, chosen, reports in sweep:
            best = next(r for r in reports if r.design.name == chosen.name)
            ax.plot([beta], [best.objective], marker="o", ms=9, mfc="none", mec="k", lw=0)
        ax.set_xscale("symlog", linthresh=0.1)
        ax.set_xlabel(r"cost weight $\beta$")
        ax.set_ylabel("objective")
        ax.axhline(2 * np.log(0.5), color="0.6", ls=":", lw=0.8)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_planarity(report, path, title: str = "") -> Path:
    """Side view (x, depth) of triangulated points with the fitted plane."""
    pts = np.asarray(report.points_3d)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        ax.scatter(pts[:, 0], pts[:, 2], s=6, c="C0")
        n, d = report.plane_normal, report.plane_offset
        xs = np.linspace(pts[:, 0].min(), pts[:, 0].max(), 2)
        if abs(n[2]) > 1e-9:
            y0 = pts[:, 1].mean()
            ax.plot(xs, (d - n[0] * xs - n[1] * y0) / n[2], color="C3", lw=1)
        ax.invert_yaxis()
        ax.set_xlabel("x")
        ax.set_ylabel("depth")
        ax.set_title(title or f"{report.label.value}  score={report.normalized_score:.2e}"
                     f"  (threshold {report.threshold_used:g})")
        return _save(fig, path)


def plot_scores(real_scores, spoof_scores, threshold: float, path) -> Path:
    """Histogram of planarity scores for real vs screen scenes."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        allv = np.concatenate([real_scores, spoof_scores])
        bins = np.geomspace(max(allv.min(), 1e-6), allv.max() * 1.1, 40)
        ax.hist(spoof_scores, bins=bins, alpha=0.7, label="screen")
        ax.hist(real_scores, bins=bins, alpha=0.7, label="real")
        ax.axvline(threshold, color="k", ls="--", lw=1)
        ax.set_xscale("log")
        ax.set_xlabel("normalized planarity score")
        ax.set_ylabel("scenes")
        ax.legend(frameon=False)
        return _save(fig, path)
