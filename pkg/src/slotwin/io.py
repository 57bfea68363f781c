"""On-disk dataset bundles.

A bundle directory holds::

    meta.json          {"format": "slotwin-bundle", "version": 1, "name", "frame_rate", "frames"}
    odometry.txt       one 12-number row-major 3x4 line per frame pair (line k: frame k -> k+1)
    detections.jsonl   header object, then {frame, class, x, y, z, yaw, score[, gt_id]} per line
    poses.txt          optional ground-truth ego poses, one 12-number line per frame
    objects_gt.jsonl   optional ground-truth object poses {frame, id, class, x, y, z, yaw, dynamic}

Text pose files start with a ``# slotwin-<kind> v1`` header; lines beginning
with ``#`` are skipped, so plain KITTI pose files load as well.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Pose
from .tracking import Detection

VERSION = 1


class BundleError(ValueError):
    pass


@dataclass
class DatasetBundle:
    odometry: list  # odometry[t] moves frame t-1 to t; odometry[0] is None
    detections: list  # per-frame lists of Detection
    ground_truth: dict | None = None  # frame -> ego Pose
    objects_gt: list | None = None  # dicts {frame, id, label, pose, dynamic}
    meta: dict = field(default_factory=dict)

    @property
    def frames(self) -> int:
        return len(self.odometry)

    @property
    def name(self) -> str:
        return self.meta.get("name", "sequence")

    def validate(self) -> None:
        if not self.odometry:
            raise BundleError("bundle has no frames")
        if self.odometry[0] is not None:
            raise BundleError("odometry[0] must be None (no motion into the first frame)")
        for t in range(1, len(self.odometry)):
            if self.odometry[t] is None:
                raise BundleError(f"missing odometry into frame {t}")
        if len(self.detections) != len(self.odometry):
            raise BundleError(f"{len(self.detections)} detection frames for {len(self.odometry)} odometry frames")
        for t, dets in enumerate(self.detections):
            for d in dets:
                if d.frame != t:
                    raise BundleError(f"detection filed under frame {t} claims frame {d.frame}")

    def object_pose(self, gt_id: int, frame: int) -> Pose | None:
        for rec in self.objects_gt or []:
            if rec["id"] == gt_id and rec["frame"] == frame:
                return rec["pose"]
        return None


def from_scenario(scenario) -> DatasetBundle:
    objs = []
    for t in range(scenario.frames):
        for o in scenario.objects:
            objs.append({"frame": t, "id": o.id, "label": o.label, "pose": o.poses[t], "dynamic": o.dynamic})
    meta = {
        "name": scenario.name,
        "frame_rate": scenario.spec.frame_rate,
        "frames": scenario.frames,
        "template": scenario.spec.template,
        "seed": scenario.spec.seed,
    }
    return DatasetBundle(
        odometry=list(scenario.odometry),
        detections=[list(d) for d in scenario.detections],
        ground_truth={t: p for t, p in enumerate(scenario.ego)},
        objects_gt=objs,
        meta=meta,
    )


def _num(x: float) -> str:
    return repr(float(x))


def format_pose_line(p: Pose) -> str:
    return " ".join(_num(v) for v in p.to_row())


def write_poses(path, poses, kind="poses") -> None:
    lines = [f"# slotwin-{kind} v{VERSION}"] + [format_pose_line(p) for p in poses]
    Path(path).write_text("\n".join(lines) + "\n")


def read_poses(path, kind="poses") -> list:
    """Parse 12-number row-major 3x4 lines."""
    path = Path(path)
    out = []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            _check_header(path, lineno, line, kind)
            continue
        parts = line.split()
        try:
            if len(parts) != 12:
                raise ValueError(f"{len(parts)} fields")
            vals = [float(v) for v in parts]
        except ValueError as exc:
            raise BundleError(
                f"{path}:{lineno}: malformed pose line ({exc}); expected 12 numbers "
                "forming a row-major 3x4 [R|t] matrix"
            ) from None
        out.append(Pose.from_row(vals))
    return out


def _check_header(path, lineno, line, kind):
    text = line.lstrip("#").strip()
    if text.startswith("slotwin-"):
        name, _, ver = text.partition(" v")
        if name != f"slotwin-{kind}" or ver.strip() != str(VERSION):
            raise BundleError(f"{path}:{lineno}: unsupported header {line!r}; expected '# slotwin-{kind} v{VERSION}'")


def write_detections(path, detections) -> None:
    lines = [json.dumps({"format": "slotwin-detections", "version": VERSION})]
    for dets in detections:
        for d in dets:
            x, y, z, yaw = d.xyz_yaw()
            rec = {"frame": d.frame, "class": d.label, "x": x, "y": y, "z": z, "yaw": yaw, "score": d.score}
            if d.gt_id is not None:
                rec["gt_id"] = d.gt_id
            lines.append(json.dumps(rec, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")


_DET_FIELDS = ("frame", "class", "x", "y", "z", "yaw", "score")


def read_detections(path, frames: int | None = None) -> list:
    path = Path(path)
    by_frame: dict = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
            if "format" in rec:
                if rec["format"] != "slotwin-detections" or rec.get("version") != VERSION:
                    raise ValueError(f"unsupported header {rec}")
                continue
            missing = [k for k in _DET_FIELDS if k not in rec]
            if missing:
                raise ValueError(f"missing fields {missing}")
            det = Detection.from_xyz_yaw(
                int(rec["frame"]), float(rec["x"]), float(rec["y"]), float(rec["z"]), float(rec["yaw"]),
                str(rec["class"]), float(rec["score"]),
                None if rec.get("gt_id") is None else int(rec["gt_id"]),
            )
        except (ValueError, TypeError, json.JSONDecodeError) as exc:
            raise BundleError(
                f"{path}:{lineno}: malformed detection ({exc}); expected a JSON object "
                '{"frame", "class", "x", "y", "z", "yaw", "score"}'
            ) from None
        if det.frame < 0 or (frames is not None and det.frame >= frames):
            raise BundleError(f"{path}:{lineno}: frame {det.frame} has no odometry entry")
        by_frame.setdefault(det.frame, []).append(det)
    n = frames if frames is not None else (max(by_frame) + 1 if by_frame else 0)
    return [by_frame.get(t, []) for t in range(n)]


def write_objects_gt(path, records) -> None:
    lines = [json.dumps({"format": "slotwin-objects", "version": VERSION})]
    for r in records:
        p = r["pose"]
        x, y, z = (float(v) for v in p.translation)
        lines.append(json.dumps({
            "frame": r["frame"], "id": r["id"], "class": r["label"], "x": x, "y": y, "z": z,
            "yaw": p.yaw, "dynamic": bool(r["dynamic"]),
        }, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")


def read_objects_gt(path) -> list:
    path = Path(path)
    out = []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
            if "format" in rec:
                continue
            out.append({
                "frame": int(rec["frame"]), "id": int(rec["id"]), "label": str(rec["class"]),
                "pose": Pose.from_xyz_yaw(rec["x"], rec["y"], rec["z"], rec["yaw"]),
                "dynamic": bool(rec["dynamic"]),
            })
        except (KeyError, ValueError, TypeError) as exc:
            raise BundleError(f"{path}:{lineno}: malformed object record ({exc})") from None
    return out


def save_bundle(bundle: DatasetBundle, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {"format": "slotwin-bundle", "version": VERSION, **bundle.meta, "frames": bundle.frames}
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    write_poses(d / "odometry.txt", bundle.odometry[1:], kind="odometry")
    write_detections(d / "detections.jsonl", bundle.detections)
    if bundle.ground_truth is not None:
        write_poses(d / "poses.txt", [bundle.ground_truth[t] for t in sorted(bundle.ground_truth)])
    if bundle.objects_gt is not None:
        write_objects_gt(d / "objects_gt.jsonl", bundle.objects_gt)
    return d


def load_bundle(directory) -> DatasetBundle:
    d = Path(directory)
    if not d.is_dir():
        raise BundleError(f"{d}: not a directory")
    odo_path, det_path = d / "odometry.txt", d / "detections.jsonl"
    for p in (odo_path, det_path):
        if not p.exists():
            raise BundleError(f"{d}: missing {p.name}")
    meta = {}
    if (d / "meta.json").exists():
        try:
            meta = json.loads((d / "meta.json").read_text())
        except json.JSONDecodeError as exc:
            raise BundleError(f"{d / 'meta.json'}: {exc}") from None
        if meta.get("version", VERSION) != VERSION:
            raise BundleError(f"{d / 'meta.json'}: unsupported bundle version {meta.get('version')}")
    odometry = [None] + read_poses(odo_path, kind="odometry")
    detections = read_detections(det_path, frames=len(odometry))
    gt = None
    if (d / "poses.txt").exists():
        poses = read_poses(d / "poses.txt")
        if len(poses) != len(odometry):
            raise BundleError(f"{d / 'poses.txt'}: {len(poses)} poses for {len(odometry)} frames")
        gt = dict(enumerate(poses))
    objects = read_objects_gt(d / "objects_gt.jsonl") if (d / "objects_gt.jsonl").exists() else None
    meta = {k: v for k, v in meta.items() if k not in ("format", "version")}
    meta.setdefault("name", d.name)
    bundle = DatasetBundle(odometry, detections, gt, objects, meta)
    bundle.validate()
    return bundle


def read_trajectory(path) -> dict:
    """Frame-indexed trajectory from a pose file (line ``k`` is frame ``k``)."""
    return dict(enumerate(read_poses(path)))


def write_trajectory(path, traj: dict) -> None:
    frames = sorted(traj)
    if frames != list(range(len(frames))):
        raise BundleError("trajectory frames must be contiguous from 0 to write a pose file")
    write_poses(path, [traj[f] for f in frames])


def poses_equal(a: Pose, b: Pose) -> bool:
    return bool(np.array_equal(a.matrix(), b.matrix()))
