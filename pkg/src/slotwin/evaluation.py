"""Trajectory error metrics and data-association accuracy."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, between


class EvaluationError(ValueError):
    pass


@dataclass
class MetricReport:
    rte: float  # m, mean over consecutive frame pairs
    rre: float  # rad
    ate: float  # m, RMS after aligning the first pose
    series: list = field(default_factory=list)  # [(frame, translation err, rotation err)]

    @property
    def rre_deg(self) -> float:
        return math.degrees(self.rre)

    def to_dict(self) -> dict:
        return {
            "rte_m": self.rte,
            "rre_rad": self.rre,
            "rre_deg": self.rre_deg,
            "ate_m": self.ate,
            "pairs": len(self.series),
            "series": [{"frame": f, "te": te, "re": re} for f, te, re in self.series],
        }

    def cell(self) -> str:
        return f"{self.rte:.4f} / {self.rre:.5f}"


def _as_mapping(traj) -> dict:
    if isinstance(traj, dict):
        return traj
    return {int(f): p for f, p in traj}


def relative_errors(estimate, ground_truth) -> MetricReport:
    """RTE/RRE over consecutive common frames and first-pose-aligned ATE.

    Both inputs map frame index to :class:`Pose` (a dict or ``(frame, pose)`` pairs).
    """
    est, gt = _as_mapping(estimate), _as_mapping(ground_truth)
    frames = sorted(set(est) & set(gt))
    if len(frames) < 2:
        raise EvaluationError(f"need >= 2 common frames, got {len(frames)}")
    series = []
    for f0, f1 in zip(frames[:-1], frames[1:]):
        E = between(between(gt[f0], gt[f1]), between(est[f0], est[f1]))
        series.append((f1, float(np.linalg.norm(E.translation)), E.angle))
    align = gt[frames[0]].compose(est[frames[0]].inverse())
    sq = [np.sum((align.compose(est[f]).translation - gt[f].translation) ** 2) for f in frames]
    return MetricReport(
        rte=float(np.mean([s[1] for s in series])),
        rre=float(np.mean([s[2] for s in series])),
        ate=float(math.sqrt(np.mean(sq))),
        series=series,
    )


@dataclass
class AssociationAccuracy:
    correct_rate: float
    id_switches: int
    matched: int
    total: int

    def to_dict(self) -> dict:
        return dict(vars(self))


def association_accuracy(frames) -> AssociationAccuracy:
    """Score per-frame ``(track id, true object id)`` assignments.

    ``frames`` is an iterable over frames, each a list of ``(track_id, gt_id)``
    for every true-object detection; ``track_id`` is None when the detection
    was left unassigned.  A detection counts as correct when its track's first
    truth id equals its own.  An id switch is a frame where a track's truth id
    differs from the one it held at its previous assignment.
    """
    first, last = {}, {}
    correct = switches = total = matched = 0
    for assignments in frames:
        for track_id, gt_id in assignments:
            total += 1
            if track_id is None:
                continue
            matched += 1
            first.setdefault(track_id, gt_id)
            if first[track_id] == gt_id:
                correct += 1
            if track_id in last and last[track_id] != gt_id:
                switches += 1
            last[track_id] = gt_id
    return AssociationAccuracy(correct / total if total else 0.0, switches, matched, total)


def assignments_from_reports(reports, detections) -> list:
    """Join association reports with the per-frame detections' truth ids."""
    out = []
    for rep, dets in zip(reports, detections):
        owner = rep.track_of_detection()
        out.append([(owner.get(i), d.gt_id) for i, d in enumerate(dets) if d.gt_id is not None])
    return out


def format_table(rows, columns=("odometry-only", "optimized")) -> str:
    """Plain-text table with ``RTE / RRE`` cells, one row per sequence.

    ``rows`` is a list of ``(name, {column: MetricReport})``.
    """
    header = ["sequence", *columns]
    body = [[name] + [reps[c].cell() if c in reps else "-" for c in columns] for name, reps in rows]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    lines.append("cells: RTE [m] / RRE [rad]")
    return "\n".join(lines)


def report_json(reports: dict) -> str:
    return json.dumps({k: v.to_dict() for k, v in reports.items()}, indent=2, sort_keys=True)


def dead_reckoning(odometry, start: Pose | None = None) -> dict:
    """Compose relative odometry into a trajectory; ``odometry[t]`` moves t-1 to t."""
    pose = start or Pose.identity()
    out = {0: pose}
    for t in range(1, len(odometry)):
        pose = pose.compose(odometry[t])
        out[t] = pose
    return out
