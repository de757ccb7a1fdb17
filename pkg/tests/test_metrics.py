import math

import numpy as np
import pytest

from lcvn.datagen.world import Action, Pose, integrate_actions
from lcvn.errors import MetricError
from lcvn.metrics.images import PSNR_CAP, psnr, ssim
from lcvn.metrics.navigation import ate, pad_pair, rpe, success_rate, umeyama_alignment
from lcvn.metrics.report import MetricsReport, TrajectoryRecord, plot_horizon_curves, plot_paths
from lcvn.metrics.rollout import OracleImaginer, dreamsim_score, dreamsim_terms, metric_at_n, metric_curve

# File: tests/test_metrics.py


def test_success_rate_is_strict():
    finals = [(0.0, 0.0), (0.3, 0.0), (0.29, 0.0)]
    goals = [(0.0, 0.0)] * 3
    assert success_rate(finals, goals, 0.3) == pytest.approx(2 / 3)
    with pytest.raises(MetricError):
        success_rate([], [], 0.3)
    with pytest.raises(MetricError):
        success_rate(finals, goals[:2], 0.3)


def test_ate_and_rpe_zero_for_identical_traces():
    trace = integrate_actions(Pose(1.0, 2.0, 0.3), [Action(0.3, 0.0, 0.2)] * 4)
    assert ate(trace, trace) == pytest.approx(0.0)
    assert rpe(trace, trace) == pytest.approx(0.0, abs=1e-12)


def test_ate_constant_offset():
    ref = [Pose(float(i), 0.1 * i * i, 0.0) for i in range(5)]
    pred = [Pose(float(i), 0.1 * i * i + 0.5, 0.0) for i in range(5)]
    assert ate(pred, ref) == pytest.approx(0.5)
    # a rigid offset disappears after alignment
    assert ate(pred, ref, align=True) == pytest.approx(0.0, abs=1e-9)
    # per-step motion is identical, so RPE does not see the offset
    assert rpe(pred, ref) == pytest.approx(0.0, abs=1e-12)


def test_rpe_step_error():
    ref = [Pose(float(i), 0.0, 0.0) for i in range(3)]
    pred = [Pose(0.0, 0.0, 0.0), Pose(1.5, 0.0, 0.0), Pose(3.0, 0.0, 0.0)]
    assert rpe(pred, ref) == pytest.approx(0.5)
    with pytest.raises(MetricError):
        rpe(pred[:1], ref[:1])
    with pytest.raises(MetricError):
        ate(pred, ref[:2])


def test_umeyama_recovers_rotation():
    rng = np.random.default_rng(0)
    model = rng.normal(size=(10, 2))
    theta = 0.7
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    data = model @ rot.T + np.array([1.0, -2.0])
    r, t = umeyama_alignment(model, data)
    assert np.allclose(r, rot)
    assert np.allclose(t, [1.0, -2.0])


def test_pad_pair_repeats_final_pose():
    short = [Pose(0.0, 0.0, 0.0), Pose(1.0, 0.0, 0.0)]
    long = [Pose(0.0, 0.0, 0.0)] * 4
    a, b = pad_pair(short, long)
    assert len(a) == len(b) == 4
    assert a[-1] == a[-2] == Pose(1.0, 0.0, 0.0)


def test_psnr_and_ssim_identical_images():
    img = np.random.default_rng(0).random((16, 16, 3))
    assert psnr(img, img) == PSNR_CAP
    assert ssim(img, img) == pytest.approx(1.0)


def test_psnr_known_value():
    a = np.zeros((4, 4))
    b = np.full((4, 4), 0.1)
    assert psnr(a, b) == pytest.approx(20.0)
    with pytest.raises(MetricError):
        psnr(a, b[:2])


def test_ssim_drops_for_different_images():
    rng = np.random.default_rng(1)
    a = rng.random((16, 16, 3))
    b = rng.random((16, 16, 3))
    assert ssim(a, b) < 0.5
    with pytest.raises(MetricError):
        ssim(np.zeros((2, 2, 2, 2)), np.zeros((2, 2, 2, 2)))


def test_oracle_imaginer_is_perfect(train_trajs):
    traj = train_trajs[0]
    assert metric_at_n(OracleImaginer(), traj, 2, ssim) == pytest.approx(1.0)
    curve = metric_curve(OracleImaginer(), traj, "concise", 2, psnr)
    assert curve == [PSNR_CAP, PSNR_CAP]
    assert metric_at_n(OracleImaginer(), traj, traj.n + 1, ssim) is None
    with pytest.raises(MetricError):
        metric_at_n(OracleImaginer(), traj, 0, ssim)


def test_dreamsim_zero_norm_terms():
    images = [np.ones(2), np.zeros(2), np.array([-1.0, -1.0])]

    def image_embedder(x):
        return x

    def text_embedder(_):
        return np.array([1.0, 1.0])

    terms, zero = dreamsim_terms(images, [1, 2], image_embedder, text_embedder)
    assert zero == 1
    assert terms.tolist() == pytest.approx([1.0, 0.0, -1.0])
    assert dreamsim_score(images, [1, 2], image_embedder, text_embedder) == pytest.approx(0.0)
    with pytest.raises(MetricError):
        dreamsim_terms([], [1], image_embedder, text_embedder)


def _record(family, style, **kwargs):
    return TrajectoryRecord(trajectory_id=f"{family}-{style}", family=family, style=style, split="val_seen", **kwargs)


def test_report_table_column_order():
    report = MetricsReport(
        records=[
            _record("wm_ac", "concise", success=True, ate=0.1, rpe=0.2, ssim_curve=[0.9, 0.8]),
            _record("wm_ac", "concise", success=False, ate=0.3, rpe=0.4, ssim_curve=[0.7, 0.6]),
            _record("random", "concise", success=False, ate=2.0, rpe=1.0),
        ],
        horizon_n=8,
    )
    table = report.table()
    header = table.splitlines()[0].split()
    assert header[:6] == ["family", "style", "count", "ATE", "RPE", "SR"]
    assert "SSIM@8" in header
    rows = report.aggregate()
    assert [r["family"] for r in rows] == ["random", "wm_ac"]
    wm = rows[1]
    assert wm["sr"] == pytest.approx(0.5)
    assert wm["ate"] == pytest.approx(0.2)
    assert wm["ssim_curve"] == pytest.approx([0.8, 0.7])
    assert wm["ssim"] is None


def test_report_write_and_read(tmp_path):
    report = MetricsReport(
        records=[_record("uni", "landmark", success=True, ate=0.0, psnr_curve=[30.0])],
        horizon_n=1,
        counts={"trajectories": 1},
        embedder="seeded",
    )
    paths = report.write(tmp_path, name="report_val_seen")
    assert "DreamSim embedders: seeded" in paths["table"].read_text()
    again = MetricsReport.read(paths["json"])
    assert again.records == report.records
    assert again.counts == {"trajectories": 1}
    assert again.aggregate() == report.aggregate()


def test_plots_are_written(tmp_path):
    report = MetricsReport(records=[_record("wm_ac", "concise", ssim_curve=[0.9, 0.8])], horizon_n=2)
    out = plot_horizon_curves(report, tmp_path / "plots" / "ssim.png", "ssim")
    assert out.read_bytes()[:4] == b"\x89PNG"
    path = plot_paths([(0, 0), (1, 1)], [(0, 0), (1, 0)], tmp_path / "path.png", goal=(1.0, 0.0))
    assert path.is_file()


def test_rpe_invariant_under_global_translation():
    ref = integrate_actions(Pose(0.0, 0.0, 0.0), [Action(0.3, 0.0, 0.2), Action(0.2, 0.1, -0.1), Action(0.3, 0.0, 0.0)])
    pred = integrate_actions(Pose(0.0, 0.0, 0.0), [Action(0.25, 0.05, 0.1), Action(0.3, 0.0, 0.0), Action(0.1, 0.0, 0.3)])
    shifted = [Pose(p.x + 4.0, p.y - 2.5, p.yaw) for p in pred]
    assert rpe(shifted, ref) == pytest.approx(rpe(pred, ref), abs=1e-12)
