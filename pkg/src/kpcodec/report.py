"""Delimited reports and figures for encode runs.

CSV files carry the per-frame numbers; the figures render the same data
with matplotlib (Agg backend, file output only) so a run can be eyeballed
without loading the CSV anywhere.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .codec import EncodeReport
from .harness.metrics import MetricsReport
from .model import FrameType

# One fixed color per frame type, shared by every figure.
TYPE_COLORS = {
    "D": "#c0392b",
    "S": "#27ae60",
    "U": "#e67e22",
    "N": "#7f8c8d",
}

FRAME_STATS_COLUMNS = [
    "position",
    "frame_index",
    "type",
    "bits",
    "keypoints",
    "matches",
    "skip",
    "inter",
    "drop",
    "intra",
    "merged",
    "clamped",
]

METRICS_COLUMNS = [
    "position",
    "truth",
    "decoded",
    "matched",
    "loc_rmse",
    "loc_max",
    "scale_rel_max",
    "theta_max",
]


def write_frame_stats_csv(report: EncodeReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FRAME_STATS_COLUMNS)
        for fs in report.frames:
            w.writerow(
                [
                    fs.position,
                    fs.frame_index,
                    fs.type_name,
                    fs.bits,
                    fs.n_keypoints,
                    fs.n_matches,
                    fs.n_skip,
                    fs.n_inter,
                    fs.n_drop,
                    fs.n_intra,
                    fs.n_merged,
                    fs.n_clamped,
                ]
            )


def write_metrics_csv(metrics: MetricsReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_COLUMNS)
        for fm in metrics.frames:
            w.writerow(
                [
                    fm.position,
                    fm.n_truth,
                    fm.n_decoded,
                    fm.n_matched,
                    f"{fm.loc_rmse:.6f}",
                    f"{fm.loc_max:.6f}",
                    f"{fm.scale_rel_max:.6f}",
                    f"{fm.theta_max:.6f}",
                ]
            )


def plot_frame_bits(report: EncodeReport, path: str | Path) -> None:
    """Bit budget per frame, one bar per frame colored by type."""
    positions = [fs.position for fs in report.frames]
    bits = [fs.bits for fs in report.frames]
    colors = [TYPE_COLORS[fs.type_name] for fs in report.frames]

    fig, ax = plt.subplots(figsize=(10, 4))
    ax.bar(positions, bits, color=colors, width=0.9)
    mean_bits = sum(bits) / len(bits) if bits else 0.0
    ax.axhline(mean_bits, color="black", linewidth=0.8, linestyle="--",
               label=f"mean {mean_bits:.0f} bits")
    handles = [
        plt.Rectangle((0, 0), 1, 1, color=TYPE_COLORS[t.name])
        for t in FrameType
    ]
    ax.legend(
        handles + [ax.lines[0]],
        [t.name for t in FrameType] + [f"mean {mean_bits:.0f} bits"],
        loc="upper right",
        fontsize=8,
    )
    ax.set_xlabel("frame")
    ax.set_ylabel("bits")
    ax.set_title(f"keypoint bits per frame (total {report.total_bits} incl. header)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_metrics(metrics: MetricsReport, path: str | Path) -> None:
    """Per-frame fidelity: location, scale, orientation errors."""
    pos = [fm.position for fm in metrics.frames]
    fig, axes = plt.subplots(3, 1, figsize=(10, 7), sharex=True)

    axes[0].plot(pos, [fm.loc_rmse for fm in metrics.frames], label="rmse")
    axes[0].plot(pos, [fm.loc_max for fm in metrics.frames], label="max")
    axes[0].set_ylabel("location err, px")
    axes[0].legend(fontsize=8)

    axes[1].plot(pos, [fm.scale_rel_max for fm in metrics.frames], color="#8e44ad")
    axes[1].set_ylabel("max rel scale err")

    axes[2].plot(pos, [fm.theta_max for fm in metrics.frames], color="#16a085")
    axes[2].set_ylabel("max orient err, rad")
    axes[2].set_xlabel("frame")

    axes[0].set_title(
        f"decode fidelity (surviving fraction {metrics.surviving_fraction:.3f})"
    )
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
