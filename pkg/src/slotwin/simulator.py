"""Deterministic driving scenarios standing in for the odometry and detector front-end.

Ground truth is planar (z = 0, no roll/pitch) and built from constant-velocity /
constant-turn segments.  Measurements are drawn per frame from a generator
seeded by ``(seed, frame)``, so any frame can be regenerated in isolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .geometry import Pose, between
from .tracking import Detection

TEMPLATES = ("highway", "intersection", "static-urban")


class ScenarioError(ValueError):
    pass


@dataclass
class NoiseSpec:
    odo_sigma_trans: float = 0.05  # m per frame, per axis
    odo_sigma_rot: float = 0.003  # rad per frame, per axis
    det_sigma_pos: float = 0.1  # m, per axis
    det_sigma_yaw: float = 0.03  # rad
    miss_prob: float = 0.05
    clutter_rate: float = 0.5  # mean false detections per frame
    det_range: float = 40.0  # m

    @classmethod
    def noise_free(cls, det_range: float = 40.0) -> "NoiseSpec":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, det_range)


_TEMPLATE_NOISE = {
    "highway": NoiseSpec(),
    "intersection": NoiseSpec(det_sigma_pos=0.05, det_sigma_yaw=0.02, det_range=50.0),
    "static-urban": NoiseSpec(),
}


@dataclass
class ScenarioSpec:
    template: str = "highway"
    seed: int = 0
    frames: int = 50
    noise: NoiseSpec | None = None
    num_objects: int | None = None  # template default when None
    frame_rate: float = 10.0

    def __post_init__(self):
        if self.noise is None:
            base = _TEMPLATE_NOISE.get(self.template, NoiseSpec())
            self.noise = NoiseSpec(**vars(base))

    def validate(self) -> None:
        bad = []
        if self.template not in TEMPLATES:
            bad.append(f"template (unknown {self.template!r}; choose from {', '.join(TEMPLATES)})")
        if self.frames < 2:
            bad.append(f"frames (need >= 2, got {self.frames})")
        if self.num_objects is not None and self.num_objects < 0:
            bad.append("num_objects (negative)")
        if self.frame_rate <= 0:
            bad.append("frame_rate (must be > 0)")
        n = self.noise
        for name in ("odo_sigma_trans", "odo_sigma_rot", "det_sigma_pos", "det_sigma_yaw", "clutter_rate"):
            v = getattr(n, name)
            if not (v >= 0 and math.isfinite(v)):
                bad.append(f"noise.{name} (must be finite and >= 0, got {v})")
        if not 0.0 <= n.miss_prob <= 1.0:
            bad.append(f"noise.miss_prob (must be in [0, 1], got {n.miss_prob})")
        if not n.det_range > 0:
            bad.append(f"noise.det_range (must be > 0, got {n.det_range})")
        if bad:
            raise ScenarioError("invalid scenario spec: " + "; ".join(bad))


@dataclass
class GroundTruthObject:
    id: int
    label: str
    poses: list  # world Pose per frame
    dynamic: bool


@dataclass
class Scenario:
    spec: ScenarioSpec
    ego: list  # world Pose per frame
    objects: list = field(default_factory=list)
    odometry: list = field(default_factory=list)  # odometry[t] moves frame t-1 to t; odometry[0] is None
    detections: list = field(default_factory=list)  # per frame

    @property
    def frames(self) -> int:
        return len(self.ego)

    @property
    def name(self) -> str:
        return f"{self.spec.template}-s{self.spec.seed}"

    def object_by_id(self, oid: int) -> GroundTruthObject:
        return next(o for o in self.objects if o.id == oid)


def integrate(start: Pose, segments, frames: int) -> list:
    """Roll out a pose from ``(n_frames, speed, yaw_rate)`` body-frame segments.

    Speed is meters per frame, yaw rate radians per frame; the last segment
    extends to cover ``frames``.
    """
    poses = [start]
    seg = list(segments) or [(frames, 0.0, 0.0)]
    steps = []
    for n, v, w in seg:
        steps += [(v, w)] * int(n)
    while len(steps) < frames - 1:
        steps.append(seg[-1][1:])
    for v, w in steps[: frames - 1]:
        poses.append(poses[-1].retract([v, 0.0, 0.0, 0.0, 0.0, w]))
    return poses


def _straight_line(x0, y0, yaw, speed, frames, t0=0.0):
    """Constant-velocity pose sequence passing (x0, y0) at time ``t0``."""
    d = np.array([math.cos(yaw), math.sin(yaw)])
    out = []
    for t in range(frames):
        p = np.array([x0, y0]) + speed * (t - t0) * d
        out.append(Pose.from_xyz_yaw(p[0], p[1], 0.0, yaw))
    return out


def _highway(rng, spec):
    F = spec.frames
    v_ego = rng.uniform(1.0, 1.3)
    ego = integrate(Pose.identity(), [(F, v_ego, 0.0)], F)
    n = 8 if spec.num_objects is None else spec.num_objects
    lanes = [-3.5, 3.5, 7.0, 0.0]
    speeds = {y: rng.uniform(0.8, 1.6) for y in lanes}
    speeds[0.0] = v_ego + rng.uniform(-0.1, 0.1)
    objects = []
    per_lane = {y: [] for y in lanes}
    for i in range(n):
        y = lanes[i % len(lanes)]
        if y == 0.0:
            # own lane: keep well clear of the ego car
            side = 1 if len(per_lane[y]) % 2 == 0 else -1
            x0 = side * (15.0 + 14.0 * (len(per_lane[y]) // 2)) + rng.uniform(-2, 2)
        else:
            k = len(per_lane[y])
            x0 = -25.0 + 14.0 * k + rng.uniform(0.0, 4.0) + 3.0 * lanes.index(y)
        per_lane[y].append(x0)
        poses = _straight_line(x0, y + rng.uniform(-0.3, 0.3), 0.0, speeds[y], F)
        objects.append(GroundTruthObject(i, "car", poses, True))
    return ego, objects


def _intersection(rng, spec):
    F = spec.frames
    v_ego = rng.uniform(0.4, 0.6)
    ego = integrate(Pose.identity(), [(F, v_ego, 0.0)], F)
    objects = []
    oid = 0
    n_pairs = 2 if spec.num_objects is None else max(1, spec.num_objects // 2)
    for p in range(n_pairs):
        tc = min(15.0 + 8.0 * p, F - 6.0) + rng.uniform(0.35, 0.65)
        side = 1.0 if p % 2 == 0 else -1.0
        cx = 12.0 + 10.0 * p + v_ego * tc
        cy = side * rng.uniform(8.0, 12.0)
        heading = rng.uniform(0.0, 2.0 * math.pi)
        half = math.radians(rng.uniform(30.0, 45.0))
        speed = rng.uniform(0.8, 1.2)
        for sgn in (1.0, -1.0):
            poses = _straight_line(cx, cy, heading + sgn * half, speed, F, t0=tc)
            objects.append(GroundTruthObject(oid, "car", poses, True))
            oid += 1
    for k in range(2):
        x = rng.uniform(5.0, 35.0)
        y = (-1.0) ** k * rng.uniform(18.0, 22.0)
        pose = Pose.from_xyz_yaw(x, y, 0.0, rng.uniform(-math.pi, math.pi))
        objects.append(GroundTruthObject(oid, "car", [pose] * F, False))
        oid += 1
    return ego, objects


def _static_urban(rng, spec):
    F = spec.frames
    v = rng.uniform(0.8, 1.2)
    turn = rng.choice([-1.0, 1.0]) * rng.uniform(0.03, 0.05)
    n1 = F // 3
    ego = integrate(Pose.identity(), [(n1, v, 0.0), (F // 4, v, turn), (F, v, 0.0)], F)
    n_parked = 12 if spec.num_objects is None else spec.num_objects
    # roll the path further out so cars can line the road ahead of the last frame
    path = integrate(Pose.identity(), [(n1, v, 0.0), (F // 4, v, turn), (F + 40, v, 0.0)], F + 40)
    objects = []
    slots = np.linspace(3, len(path) - 10, max(n_parked, 1)).astype(int)
    for i in range(n_parked):
        s = int(slots[i]) + int(rng.integers(-1, 2))
        side = 1.0 if i % 2 == 0 else -1.0
        offset = Pose.from_xyz_yaw(rng.uniform(-1.0, 1.0), side * rng.uniform(4.0, 5.5), 0.0,
                                   rng.uniform(-0.2, 0.2))
        pose = path[s].compose(offset)
        objects.append(GroundTruthObject(i, "car", [pose] * F, False))
    # one pedestrian crossing slowly far from the parked cars
    if spec.num_objects is None:
        ped = _straight_line(v * n1 * 0.5, 7.0, -math.pi / 2, 0.2, F)
        objects.append(GroundTruthObject(n_parked, "pedestrian", ped, True))
    return ego, objects


_BUILDERS = {"highway": _highway, "intersection": _intersection, "static-urban": _static_urban}


def _frame_rng(seed: int, t: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), 1, int(t)])


def emit_frame(scenario: Scenario, t: int):
    """Noisy odometry into frame ``t`` (None at t = 0) and the frame's detections."""
    if not 0 <= t < scenario.frames:
        raise IndexError(f"frame {t} outside 0..{scenario.frames - 1}")
    spec, n = scenario.spec, scenario.spec.noise
    rng = _frame_rng(spec.seed, t)
    odo = None
    if t > 0:
        xi = np.concatenate([
            rng.normal(0.0, 1.0, 3) * n.odo_sigma_trans,
            rng.normal(0.0, 1.0, 3) * n.odo_sigma_rot,
        ])
        odo = between(scenario.ego[t - 1], scenario.ego[t]).retract(xi)
    X_inv = scenario.ego[t].inverse()
    dets = []
    for obj in scenario.objects:
        b = X_inv.compose(obj.poses[t])
        # draw all noise before the range/miss checks so streams stay aligned
        dpos = rng.normal(0.0, 1.0, 3) * n.det_sigma_pos
        dyaw = rng.normal() * n.det_sigma_yaw
        missed = rng.random() < n.miss_prob
        if np.hypot(*b.translation[:2]) > n.det_range or missed:
            continue
        x, y, z = b.translation + dpos
        dets.append(Detection.from_xyz_yaw(t, x, y, z, b.yaw + dyaw, obj.label, 1.0, obj.id))
    labels = sorted({o.label for o in scenario.objects}) or ["car"]
    for _ in range(rng.poisson(n.clutter_rate)):
        r = n.det_range * math.sqrt(rng.random())
        a = rng.uniform(-math.pi, math.pi)
        label = labels[int(rng.integers(len(labels)))]
        yaw = rng.uniform(-math.pi, math.pi)
        score = float(rng.uniform(0.3, 0.6))
        dets.append(Detection.from_xyz_yaw(t, r * math.cos(a), r * math.sin(a), 0.0, yaw, label, score))
    order = rng.permutation(len(dets))
    return odo, [dets[i] for i in order]


def build_scenario(spec: ScenarioSpec | None = None, **kwargs) -> Scenario:
    if spec is None:
        spec = ScenarioSpec(**kwargs)
    spec.validate()
    rng = np.random.default_rng([int(spec.seed), 0])
    ego, objects = _BUILDERS[spec.template](rng, spec)
    sc = Scenario(spec, ego, objects)
    for t in range(spec.frames):
        odo, dets = emit_frame(sc, t)
        sc.odometry.append(odo)
        sc.detections.append(dets)
    return sc


def min_pair_distance(a: GroundTruthObject, b: GroundTruthObject) -> float:
    return min(float(np.linalg.norm(p.translation[:2] - q.translation[:2])) for p, q in zip(a.poses, b.poses))


def suggested_config(spec: ScenarioSpec, **overrides) -> PipelineConfig:
    """Pipeline config whose covariances match the scenario's noise model."""
    n = spec.noise
    floor = 1e-3
    st, sr = max(n.odo_sigma_trans, floor), max(n.odo_sigma_rot, floor)
    sp_, sy = max(n.det_sigma_pos, floor), max(n.det_sigma_yaw, floor)
    cfg = dict(
        cov_odo=[st**2] * 3 + [sr**2] * 3,
        cov_obs=[sp_**2] * 3 + [sy**2] * 3,  # detections fix roll/pitch at zero
        cov_chg=[1e-4] * 6,
        cov_cons=[1e-3] * 3 + [1e-4] * 3,
        seed=spec.seed,
    )
    cfg.update(overrides)
    return PipelineConfig(**cfg)
