"""Report-path rendering: figures and the per-corner CSV next to the JSON report.

Everything here is presentation only; all numbers come from the solver trace
and the quality report.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.colors import LinearSegmentedColormap, TwoSlopeNorm

# det J = 1 is "perfect scale": compression in blue, inflation in red.
_SCALING_CMAP = LinearSegmentedColormap.from_list(
    "scaling", ["#2166ac", "#1a9850", "#b2182b"]
)


def write_per_corner_csv(path: str, result) -> None:
    """element_id, corner_id, det_j, stretch for every corner simplex."""
    rep = result.report
    inst = result.instance
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["element_id", "corner_id", "det_j", "stretch"])
        for c, corner in enumerate(inst.corners):
            writer.writerow(
                [corner.element_id, corner.corner_id,
                 repr(float(rep.det_j[c])), repr(float(rep.stretch[c]))]
            )


def plot_convergence(path: str, trace) -> None:
    ks = [r.k for r in trace]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogy(ks, [r.f_before for r in trace], "o-", label="F before", color="#1f77b4")
    ax.semilogy(ks, [r.f_after for r in trace], "s-", label="F after", color="#2ca02c")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("energy")
    ax2 = ax.twinx()
    ax2.semilogy(ks, [r.eps for r in trace], "^--", label="eps", color="#d62728")
    ax2.set_ylabel("regularization width")
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_map_2d(path: str, result) -> None:
    """Final 2D map coloured by per-corner det J (corner triangles for quads)."""
    inst = result.instance
    pos = result.state.positions(2)
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    det = result.report.det_j
    vmin = min(float(det.min()), 0.999)
    vmax = max(float(det.max()), 1.001)
    norm = TwoSlopeNorm(vmin=vmin, vcenter=1.0, vmax=vmax)
    tp = ax.tripcolor(
        pos[:, 0],
        pos[:, 1],
        inst.vert_ids,
        facecolors=det,
        cmap=_SCALING_CMAP,
        norm=norm,
        edgecolors="k",
        linewidth=0.2,
    )
    fig.colorbar(tp, ax=ax, label="det J")
    ax.set_aspect("equal")
    ax.set_title(f"min det J = {result.report.min_det:.4g}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report_figures(outdir: str, result) -> list[str]:
    """Write convergence plot, per-corner CSV and (in 2D) the det J colormap."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    csv_path = os.path.join(outdir, "per_corner.csv")
    write_per_corner_csv(csv_path, result)
    written.append(csv_path)
    if len(result.trace):
        conv = os.path.join(outdir, "convergence.png")
        plot_convergence(conv, result.trace)
        written.append(conv)
    if result.instance.d == 2:
        mp = os.path.join(outdir, "map_detj.png")
        plot_map_2d(mp, result)
        written.append(mp)
    return written
