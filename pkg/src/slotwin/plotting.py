"""Top-down trajectory figures written as SVG."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed salt and no timestamp so repeated renders are byte-identical
STYLE = {
    "svg.hashsalt": "slotwin",
    "svg.fonttype": "none",
    "font.size": 8,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "lines.linewidth": 1.0,
    "figure.figsize": (5.0, 4.0),
}

COLORS = {
    "estimate": "#08589e",
    "ground truth": "#252525",
    "odometry": "#e6550d",
    "objects": "#74c476",
}


def _xy(traj) -> np.ndarray:
    if isinstance(traj, dict):
        traj = [traj[k] for k in sorted(traj)]
    return np.array([p.translation[:2] for p in traj]).reshape(-1, 2)


def plot_trajectories(path, estimate, ground_truth=None, odometry=None, objects=None, title=None) -> Path:
    """Render x-y paths of the ego estimate and optional references.

    ``objects`` maps a track id to a list of world Poses (or ``(frame, Pose, ...)`` tuples).
    """
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if objects:
            for i, (tid, entries) in enumerate(sorted(objects.items())):
                poses = [e[1] if isinstance(e, tuple) else e for e in entries]
                xy = _xy(poses)
                ax.plot(xy[:, 0], xy[:, 1], ".", ms=1.5, color=COLORS["objects"],
                        label="objects" if i == 0 else None)
        if ground_truth is not None:
            xy = _xy(ground_truth)
            ax.plot(xy[:, 0], xy[:, 1], "--", color=COLORS["ground truth"], label="ground truth")
        if odometry is not None:
            xy = _xy(odometry)
            ax.plot(xy[:, 0], xy[:, 1], ":", color=COLORS["odometry"], label="odometry only")
        xy = _xy(estimate)
        ax.plot(xy[:, 0], xy[:, 1], "-", color=COLORS["estimate"], label="estimate")
        if len(xy):
            ax.plot(xy[0, 0], xy[0, 1], "o", ms=3, color=COLORS["estimate"])
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_aspect("equal", adjustable="datalim")
        ax.grid(True, lw=0.3, alpha=0.5)
        if title:
            ax.set_title(title)
        ax.legend(loc="best", frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
