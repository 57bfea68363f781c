import numpy as np
import pytest

from slotwin.geometry import Pose
from slotwin.simulator import (
    TEMPLATES,
    NoiseSpec,
    ScenarioError,
    ScenarioSpec,
    build_scenario,
    emit_frame,
    integrate,
    min_pair_distance,
    suggested_config,
)
from slotwin.window_graph import residual_observation, residual_odometry


def _stream(sc):
    odo = [None if p is None else p.matrix() for p in sc.odometry]
    dets = [[(d.frame, d.label, d.score, d.gt_id, d.yaw, d.pose.matrix().tobytes()) for d in fr]
            for fr in sc.detections]
    return odo, dets


def test_zero_objects_straight_motion():
    sc = build_scenario(ScenarioSpec("highway", seed=0, frames=10, num_objects=0, noise=NoiseSpec.noise_free()))
    assert sc.objects == [] and all(d == [] for d in sc.detections)
    for a, b in zip(sc.ego, sc.ego[1:]):
        step = a.between(b)
        assert abs(step.translation[1]) < 1e-12 and step.angle < 1e-12


@pytest.mark.parametrize("template", TEMPLATES)
def test_same_seed_same_stream(template):
    a = build_scenario(ScenarioSpec(template, seed=11, frames=20))
    b = build_scenario(ScenarioSpec(template, seed=11, frames=20))
    oa, da = _stream(a)
    ob, db = _stream(b)
    assert da == db
    assert all(x is None and y is None or np.array_equal(x, y) for x, y in zip(oa, ob))


def test_different_seeds_differ():
    a = build_scenario(ScenarioSpec("highway", seed=1, frames=5))
    b = build_scenario(ScenarioSpec("highway", seed=2, frames=5))
    assert not np.array_equal(a.odometry[1].matrix(), b.odometry[1].matrix())


def test_emit_frame_is_pure():
    sc = build_scenario(ScenarioSpec("static-urban", seed=4, frames=12))
    odo, dets = emit_frame(sc, 7)
    assert np.array_equal(odo.matrix(), sc.odometry[7].matrix())
    assert [d.pose.matrix().tobytes() for d in dets] == [d.pose.matrix().tobytes() for d in sc.detections[7]]


def test_intersection_paths_cross_inside_gate():
    for seed in range(10):
        sc = build_scenario(ScenarioSpec("intersection", seed=seed))
        movers = [o for o in sc.objects if o.dynamic]
        assert len(movers) >= 2
        closest = min(min_pair_distance(a, b) for i, a in enumerate(movers) for b in movers[i + 1:])
        assert closest < 2.0


def test_miss_probability_one_gives_no_detections():
    noise = NoiseSpec(miss_prob=1.0, clutter_rate=0.0)
    sc = build_scenario(ScenarioSpec("highway", seed=0, frames=15, noise=noise))
    assert all(d == [] for d in sc.detections)


def test_noise_free_measurements_are_consistent():
    sc = build_scenario(ScenarioSpec("intersection", seed=5, frames=20, noise=NoiseSpec.noise_free(60.0)))
    for t in range(1, sc.frames):
        assert np.abs(residual_odometry(sc.ego[t - 1], sc.ego[t], sc.odometry[t])).max() < 1e-12
    for t, dets in enumerate(sc.detections):
        assert all(d.gt_id is not None for d in dets)
        for d in dets:
            o = sc.object_by_id(d.gt_id).poses[t]
            assert np.abs(residual_observation(sc.ego[t], o, d.pose)).max() < 1e-12


def test_detection_position_noise_statistics():
    noise = NoiseSpec(det_sigma_pos=0.1, miss_prob=0.0, clutter_rate=0.0, det_range=1e6)
    sc = build_scenario(ScenarioSpec("highway", seed=8, frames=600, noise=noise))
    errs = []
    for t, dets in enumerate(sc.detections):
        X_inv = sc.ego[t].inverse()
        for d in dets:
            truth = X_inv.compose(sc.object_by_id(d.gt_id).poses[t]).translation
            errs.append(d.pose.translation - truth)
    errs = np.concatenate(errs)
    assert errs.size >= 10_000
    assert abs(errs.std() - 0.1) < 0.01
    assert abs(errs.mean()) < 0.01


def test_odometry_noise_statistics():
    noise = NoiseSpec(odo_sigma_trans=0.05, odo_sigma_rot=0.003)
    sc = build_scenario(ScenarioSpec("highway", seed=9, frames=2000, num_objects=0, noise=noise))
    xi = np.array([sc.ego[t - 1].between(sc.ego[t]).between(sc.odometry[t]).log() for t in range(1, 2000)])
    np.testing.assert_allclose(xi[:, :3].std(axis=0), 0.05, rtol=0.1)
    np.testing.assert_allclose(xi[:, 3:].std(axis=0), 0.003, rtol=0.1)


def test_clutter_is_inside_detection_disk():
    noise = NoiseSpec(miss_prob=1.0, clutter_rate=3.0, det_range=25.0)
    sc = build_scenario(ScenarioSpec("highway", seed=2, frames=200, noise=noise))
    clutter = [d for fr in sc.detections for d in fr]
    assert all(d.gt_id is None for d in clutter)
    r = np.array([np.hypot(*d.pose.translation[:2]) for d in clutter])
    assert r.max() <= 25.0
    assert abs(len(clutter) / 200 - 3.0) < 0.5
    # uniform over the disk: half the points fall inside radius R / sqrt(2)
    assert abs(np.mean(r < 25.0 / np.sqrt(2)) - 0.5) < 0.06


def test_templates_have_expected_structure():
    hw = build_scenario(ScenarioSpec("highway", seed=0, frames=10))
    assert len(hw.objects) == 8 and all(o.dynamic for o in hw.objects)
    su = build_scenario(ScenarioSpec("static-urban", seed=0, frames=10))
    assert sum(not o.dynamic for o in su.objects) == 12
    assert [o.label for o in su.objects if o.dynamic] == ["pedestrian"]
    for o in su.objects:
        if not o.dynamic:
            assert all(p is o.poses[0] for p in o.poses)


def test_ground_truth_is_planar():
    sc = build_scenario(ScenarioSpec("static-urban", seed=1))
    for p in sc.ego + [q for o in sc.objects for q in o.poses]:
        assert p.translation[2] == 0.0
        np.testing.assert_allclose(p.rotation[2], [0, 0, 1], atol=1e-15)


def test_integrate_constant_turn_closes_circle():
    n = 100
    poses = integrate(Pose.identity(), [(n, 1.0, 2 * np.pi / n)], n + 1)
    assert poses[-1].allclose(Pose.identity(), 1e-9)


def test_invalid_spec_lists_fields():
    noise = NoiseSpec(det_sigma_pos=-1.0, miss_prob=2.0)
    with pytest.raises(ScenarioError) as info:
        build_scenario(ScenarioSpec("nowhere", seed=0, frames=1, noise=noise))
    msg = str(info.value)
    for field in ("template", "frames", "det_sigma_pos", "miss_prob"):
        assert field in msg


def test_suggested_config_matches_noise():
    spec = ScenarioSpec("highway", seed=3)
    cfg = suggested_config(spec, window=12)
    assert cfg.window == 12 and cfg.seed == 3
    assert cfg.cov_odo[0, 0] == pytest.approx(0.05**2)
    assert cfg.cov_obs[5, 5] == pytest.approx(0.03**2)
