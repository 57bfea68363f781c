"""Sliding-window trajectory association.

Each track keeps the world positions of its object over the last ``window``
frames.  Tracks with enough history are extrapolated with a per-axis cubic in
frame time; younger tracks are predicted at their last observed position.
Predictions are gated on planar squared distance and assigned to detections
with the Hungarian method.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import Pose

UNKNOWN, STATIC, DYNAMIC = "unknown", "static", "dynamic"


class InsufficientHistory(ValueError):
    """Raised when a cubic fit is requested on fewer than four points."""


@dataclass
class Detection:
    frame: int
    pose: Pose  # object pose in the ego frame
    label: str = "car"
    score: float = 1.0
    gt_id: int | None = None  # simulator truth, never used for association
    yaw: float | None = None  # generating yaw, kept so serialization is exact

    @classmethod
    def from_xyz_yaw(cls, frame, x, y, z, yaw, label="car", score=1.0, gt_id=None) -> "Detection":
        return cls(frame, Pose.from_xyz_yaw(x, y, z, yaw), label, score, gt_id, float(yaw))

    def xyz_yaw(self) -> tuple:
        x, y, z = (float(v) for v in self.pose.translation)
        return x, y, z, self.pose.yaw if self.yaw is None else self.yaw


@dataclass
class Track:
    id: int
    label: str
    history: list = field(default_factory=list)  # [(frame, world Pose)]
    initialized: bool = False
    consecutive_misses: int = 0
    hits: int = 0
    motion_class: str = UNKNOWN

    @property
    def last_frame(self) -> int:
        return self.history[-1][0]

    @property
    def last_position(self) -> np.ndarray:
        return self.history[-1][1].translation[:2].copy()

    def positions(self) -> tuple[np.ndarray, np.ndarray]:
        frames = np.array([f for f, _ in self.history], dtype=float)
        xy = np.array([p.translation[:2] for _, p in self.history]).reshape(-1, 2)
        return frames, xy


@dataclass
class TrajectoryFit:
    """Cubic ``p(t) = c0 t^3 + c1 t^2 + c2 t + c3`` per axis, ``t`` counted from ``origin``."""

    coeffs: np.ndarray  # (2, 4): rows x, y
    origin: float = 0.0

    def __call__(self, t) -> np.ndarray:
        return predict_position(self, t)


def fit_trajectory(frames, positions=None) -> TrajectoryFit:
    """Least-squares cubic through a track's in-window positions.

    Accepts a :class:`Track` or explicit ``frames`` and ``(n, 2)`` positions.
    Time is re-based to the first frame so the Vandermonde matrix stays well
    conditioned; predictions are unaffected.
    """
    if isinstance(frames, Track):
        frames, positions = frames.positions()
    frames = np.asarray(frames, dtype=float)
    positions = np.asarray(positions, dtype=float).reshape(len(frames), -1)[:, :2]
    if len(frames) < 4:
        raise InsufficientHistory(f"cubic fit needs 4 points, got {len(frames)}")
    origin = float(frames[0])
    V = np.vander(frames - origin, 4)
    coeffs, *_ = np.linalg.lstsq(V, positions, rcond=None)
    return TrajectoryFit(coeffs=coeffs.T.copy(), origin=origin)


def predict_position(fit: TrajectoryFit, t) -> np.ndarray:
    s = float(t) - fit.origin
    return fit.coeffs @ np.array([s**3, s**2, s, 1.0])


@dataclass
class ScoreMatrix:
    distances: np.ndarray  # (U, V) planar squared distances, m^2
    gate: float
    allowed: np.ndarray | None = None  # extra compatibility mask, e.g. class labels

    @property
    def matches(self) -> np.ndarray:
        m = self.distances < self.gate
        if self.allowed is not None:
            m &= self.allowed
        return m.astype(np.int8)

    @property
    def shape(self):
        return self.distances.shape


def build_score_matrix(predictions, detections, gate: float, allowed=None) -> ScoreMatrix:
    P = np.asarray(predictions, dtype=float).reshape(-1, 2)
    D = np.asarray(detections, dtype=float)
    D = D.reshape(-1, D.shape[-1] if D.size else 2)[:, :2]
    diff = P[:, None, :] - D[None, :, :]
    dist = np.einsum("uvk,uvk->uv", diff, diff)
    if allowed is not None:
        allowed = np.asarray(allowed, dtype=bool).reshape(dist.shape)
    return ScoreMatrix(dist, float(gate), allowed)


@dataclass
class Assignment:
    pairs: list  # [(row, col)]
    unmatched_rows: list
    unmatched_cols: list

    def cost(self, matrix: ScoreMatrix) -> float:
        return math.fsum(matrix.distances[u, v] for u, v in self.pairs)


def assign(matrix: ScoreMatrix) -> Assignment:
    """Maximum-cardinality, then minimum squared-distance matching over gated pairs."""
    U, V = matrix.shape
    gated = matrix.matches.astype(bool)
    if U == 0 or V == 0 or not gated.any():
        return Assignment([], list(range(U)), list(range(V)))
    # any gated-out entry costs more than every feasible matching combined,
    # so the solver first maximizes the number of gated pairs
    big = matrix.gate * (min(U, V) + 1) + 1.0
    cost = np.where(gated, matrix.distances, big)
    rows, cols = linear_sum_assignment(cost)
    pairs = [(int(u), int(v)) for u, v in zip(rows, cols) if gated[u, v]]
    used_r = {u for u, _ in pairs}
    used_c = {v for _, v in pairs}
    return Assignment(
        pairs,
        [u for u in range(U) if u not in used_r],
        [v for v in range(V) if v not in used_c],
    )


@dataclass
class AssociationReport:
    frame: int
    pairs: list = field(default_factory=list)  # [(track id, detection index)]
    spawned: list = field(default_factory=list)  # [(track id, detection index)]
    terminated: list = field(default_factory=list)
    initialized: list = field(default_factory=list)

    def track_of_detection(self) -> dict:
        return {d: tid for tid, d in self.pairs + self.spawned}

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "pairs": [list(p) for p in self.pairs],
            "spawned": [list(p) for p in self.spawned],
            "terminated": list(self.terminated),
            "initialized": list(self.initialized),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "AssociationReport":
        return cls(
            frame=int(d["frame"]),
            pairs=[tuple(p) for p in d["pairs"]],
            spawned=[tuple(p) for p in d["spawned"]],
            terminated=list(d["terminated"]),
            initialized=list(d.get("initialized", [])),
        )


class Tracker:
    """Owns the track store; call :meth:`step` once per frame, in order."""

    def __init__(self, window=10, init_frames=4, gate=4.0, miss_limit=3,
                 prediction="polynomial", match_class=True):
        self.window = window
        self.init_frames = init_frames
        self.gate = gate
        self.miss_limit = miss_limit
        self.prediction = prediction
        self.match_class = match_class
        self.tracks: list[Track] = []
        self._next_id = 0

    @classmethod
    def from_config(cls, cfg) -> "Tracker":
        return cls(cfg.window, cfg.init_frames, cfg.gate, cfg.miss_limit, cfg.prediction, cfg.match_class)

    def predict(self, track: Track, frame: int) -> np.ndarray:
        if self.prediction == "polynomial" and len(track.history) > self.init_frames:
            try:
                return predict_position(fit_trajectory(track), frame)
            except InsufficientHistory:
                pass
        return track.last_position

    def step(self, frame: int, detections: list, world_poses: list) -> AssociationReport:
        report = AssociationReport(frame)
        preds = np.array([self.predict(tr, frame) for tr in self.tracks]).reshape(-1, 2)
        det_xy = np.array([p.translation[:2] for p in world_poses]).reshape(-1, 2)
        allowed = None
        if self.match_class:
            allowed = np.array([[tr.label == d.label for d in detections] for tr in self.tracks], dtype=bool)
        result = assign(build_score_matrix(preds, det_xy, self.gate, allowed))

        for u, v in result.pairs:
            tr = self.tracks[u]
            tr.history.append((frame, world_poses[v]))
            tr.consecutive_misses = 0
            tr.hits += 1
            report.pairs.append((tr.id, v))
        for u in result.unmatched_rows:
            tr = self.tracks[u]
            tr.consecutive_misses += 1
            tr.hits = 0
        for v in result.unmatched_cols:
            tr = Track(self._next_id, detections[v].label, [(frame, world_poses[v])], hits=1)
            self._next_id += 1
            self.tracks.append(tr)
            report.spawned.append((tr.id, v))

        alive = []
        for tr in self.tracks:
            if tr.consecutive_misses > self.miss_limit:
                report.terminated.append(tr.id)
                continue
            tr.history = [(f, p) for f, p in tr.history if f > frame - self.window] or tr.history[-1:]
            if not tr.initialized and tr.hits > self.init_frames:
                tr.initialized = True
                report.initialized.append(tr.id)
            alive.append(tr)
        self.tracks = alive
        report.pairs.sort()
        return report

    def get(self, track_id: int) -> Track | None:
        for tr in self.tracks:
            if tr.id == track_id:
                return tr
        return None


def step_tracks(tracker: Tracker, frame: int, detections: list, world_poses: list) -> AssociationReport:
    return tracker.step(frame, detections, world_poses)
