import numpy as np
import pytest

from tfot.measurement import MeasurementModel
from tfot.scenario import (MotionSegment, PolySegment, ScenarioConfig, TargetSpec, check_poly_target,
                           generate_scans, load_scenario, run_streams, save_scenario, scenario_from_dict,
                           simulate_polynomial_truth, simulate_run, simulate_ssm, trajectory_function,
                           wpa_matrices, wpv_matrices, write_scans_csv)

TINY_Q = 1e-30


def ssm_config(segments, steps, **kw):
    return ScenarioConfig(kind="ssm", steps=steps, segments=segments, **kw)


def test_noiseless_constant_velocity():
    cfg = ssm_config([MotionSegment("WPV", TINY_Q, 1, 20)], 20, initial_velocity=(1.0, 0.0), dt=0.5)
    x = simulate_ssm(cfg, np.random.default_rng(0))
    np.testing.assert_allclose(np.diff(x[:, 0], axis=0), np.tile([0.5, 0.0], (19, 1)), atol=1e-12)


def test_same_seed_same_sequence():
    cfg = load_scenario("builtin:single_target")
    a = simulate_ssm(cfg, run_streams(3)[0])
    b = simulate_ssm(cfg, run_streams(3)[0])
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("model", ["WPV", "WPA"])
def test_increment_moments_match_process_noise(model):
    q, dt = 1.0, 1.0
    cfg = ssm_config([MotionSegment(model, q, 1, 2)], 2, initial_velocity=(2.0, -1.0))
    rng = np.random.default_rng(21)
    n = 10_000
    inc = np.array([simulate_ssm(cfg, rng)[1] for _ in range(n)])
    F, Q = (wpv_matrices if model == "WPV" else wpa_matrices)(dt, q)
    k = F.shape[0]
    x0 = np.zeros((k, 2))
    x0[1] = cfg.initial_velocity
    noise = inc[:, :k, :] - (F @ x0)[None]
    for axis in range(2):
        S = np.cov(noise[:, :, axis].T)
        np.testing.assert_allclose(np.diag(S), np.diag(Q), rtol=0.05)


def test_handover_drops_acceleration():
    cfg = ssm_config([MotionSegment("WPA", 1.0, 1, 5), MotionSegment("WPV", 0.1, 6, 10)], 10)
    x = simulate_ssm(cfg, np.random.default_rng(1))
    assert np.any(x[4, 2] != 0.0)
    np.testing.assert_array_equal(x[5:, 2], 0.0)


def test_segments_must_tile():
    with pytest.raises(ValueError, match="gap"):
        ssm_config([MotionSegment("WPV", 0.1, 1, 5), MotionSegment("WPV", 0.1, 7, 10)], 10)
    with pytest.raises(ValueError, match="overlap"):
        ssm_config([MotionSegment("WPV", 0.1, 1, 5), MotionSegment("WPV", 0.1, 5, 10)], 10)
    with pytest.raises(ValueError):
        MotionSegment("WPV", 0.0, 1, 5)


def test_reference_single_target_schedule():
    cfg = load_scenario("builtin:single_target")
    sched = [(s.model, s.start, s.end) for s in cfg.segments]
    assert sched == [("WPV", 1, 30), ("WPA", 31, 45), ("WPV", 46, 70), ("WPA", 71, 85), ("WPV", 86, 100)]
    np.testing.assert_array_equal(cfg.measurement.noise_cov, np.diag([100.0, 100.0]))


def test_polynomial_truth_single_line():
    tgt = TargetSpec(0, (PolySegment(1, 10, ((1.0, 2.0), (0.5, -1.0))),))
    truth = simulate_polynomial_truth([tgt], 10)
    t = np.arange(1.0, 11.0)
    np.testing.assert_allclose(truth[0], np.column_stack([1 + 0.5 * (t - 1), 2 - (t - 1)]), rtol=1e-12)


def test_polynomial_truth_order_change_is_continuous():
    a = PolySegment(1, 20, ((0.0, 0.0), (1.0, 1.0)))
    end = a.value(20.0, 1.0)
    b = PolySegment(20, 40, ((end[0], end[1]), (1.0, 1.0), (0.1, -0.05)))
    tgt = TargetSpec(0, (a, b))
    check_poly_target(tgt, 40, 1.0)
    bad = TargetSpec(0, (a, PolySegment(20, 40, ((end[0] + 1e-3, end[1]), (1.0, 1.0)))))
    with pytest.raises(ValueError, match="jumps"):
        check_poly_target(bad, 40, 1.0)


def test_reference_two_targets():
    cfg = load_scenario("builtin:two_targets")
    assert cfg.n_targets == 2 and cfg.clutter_rate == 15.0
    assert cfg.region == ((-170.0, 150.0), (-150.0, 300.0))
    for tgt in cfg.targets:
        assert tgt.segments[0].start == 1 and tgt.segments[-1].end == 100
        f = trajectory_function(tgt, cfg.dt)
        for a, b in zip(tgt.segments, tgt.segments[1:]):
            t = a.end * cfg.dt
            assert np.abs(a.value(t, cfg.dt) - b.value(t, cfg.dt)).max() <= 1e-9 * max(1.0, np.abs(f([t])).max())
    truth = simulate_polynomial_truth(cfg.targets, cfg.steps, cfg.dt)
    (x0, x1), (y0, y1) = cfg.region
    assert np.all((truth[..., 0] >= x0) & (truth[..., 0] <= x1) & (truth[..., 1] >= y0) & (truth[..., 1] <= y1))
    assert np.linalg.norm(truth[0] - truth[1], axis=1).min() > 50.0


def test_noiseless_scans_equal_truth():
    tgt = TargetSpec(0, (PolySegment(1, 5, ((1.0, 2.0), (0.5, -1.0))),))
    cfg = ScenarioConfig(kind="polynomial", steps=5, targets=[tgt], clutter_rate=0.0,
                         measurement=MeasurementModel(noise_cov=1e-300 * np.eye(2)))
    truth = simulate_polynomial_truth(cfg.targets, 5)
    scans = generate_scans(truth, cfg, np.random.default_rng(0), np.random.default_rng(1))
    np.testing.assert_allclose(np.array([s.points[0] for s in scans]), truth[0], atol=1e-12)


def test_clutter_count_and_support():
    tgt = TargetSpec(0, (PolySegment(1, 10_000, ((0.0, 0.0),)),))
    cfg = ScenarioConfig(kind="polynomial", steps=10_000, targets=[tgt], clutter_rate=15.0)
    truth = np.zeros((1, cfg.steps, 2))
    scans = generate_scans(truth, cfg, np.random.default_rng(2), np.random.default_rng(3))
    counts = np.array([np.sum(s.labels == -1) for s in scans])
    assert 14.5 <= counts.mean() <= 15.5
    pts = np.concatenate([s.points[s.labels == -1] for s in scans])
    (x0, x1), (y0, y1) = cfg.region
    assert np.all((pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1))


def test_simulate_run_deterministic(tmp_path):
    cfg = load_scenario("builtin:two_targets")
    t1, s1 = simulate_run(cfg, 9)
    t2, s2 = simulate_run(cfg, 9)
    np.testing.assert_array_equal(t1, t2)
    write_scans_csv(s1, tmp_path / "a.csv")
    write_scans_csv(s2, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_streams_independent_of_clutter():
    """Changing the clutter rate leaves truth and detections untouched."""
    cfg = load_scenario("builtin:two_targets")
    quiet = scenario_from_dict({**cfg.to_dict(), "clutter_rate": 0.0})
    _, a = simulate_run(cfg, 4)
    _, b = simulate_run(quiet, 4)
    for sa, sb in zip(a, b):
        for lab in (0, 1):
            np.testing.assert_array_equal(sa.points[sa.labels == lab], sb.points[sb.labels == lab])


def test_round_trip_and_validation(tmp_path):
    cfg = load_scenario("builtin:single_target")
    save_scenario(cfg, tmp_path / "s.yaml")
    again = load_scenario(tmp_path / "s.yaml")
    assert again.config_hash() == cfg.config_hash()
    with pytest.raises(ValueError, match="unknown"):
        scenario_from_dict({**cfg.to_dict(), "bogus": 1})
    with pytest.raises(ValueError):
        scenario_from_dict({**cfg.to_dict(), "detection_probability": 1.5})
    with pytest.raises(ValueError):
        scenario_from_dict({**cfg.to_dict(), "region": [[1, 0], [0, 1]]})
