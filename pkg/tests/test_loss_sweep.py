import math

import numpy as np
import pytest

from models.bloch_model import evolve_manifold
from models.errors import ConfigError, EstimatorError, WindowTooShort
from models.lindblad_model import ModelParams, ObservableRecord
from models.regimes import RegimeReport, knee_weak
from scripts.loss_sweep import (
    EXPONENTIAL,
    LINEAR,
    MAX_SWEEP_SAMPLES,
    MODAL,
    LossCurve,
    LossEstimatorConfig,
    LossPoint,
    SweepConfig,
    check_curve_invariants,
    classical_curve,
    compare_saturated_tails,
    find_ns_min,
    locate_knee,
    loss_from_trajectory,
    select_method,
    sweep_loss,
    sweep_time_grid,
)

WEAK = ModelParams.from_T2(0.2, 1.0, 0.2)
STRONG = ModelParams.from_T2(10.0, 1.0, 0.2)
GAMMA = 1.0 / 63.5


def make_records(t, n, sigma_pp, corr=None):
    corr = [None] * len(t) if corr is None else corr
    return [ObservableRecord(float(a), float(b), float(c), None, None, d) for a, b, c, d in zip(t, n, sigma_pp, corr)]


def synthetic_curve(params, n0_grid, plateau, tail):
    report = RegimeReport("weak", "unsaturated", 0.0, 1.0)
    points = tuple(
        LossPoint(n0, 0.0, q, q, math.nan, report)
        for n0, q in ((n0, min(plateau, tail / n0)) for n0 in n0_grid)
    )
    return LossCurve(params, points, 1.0)


# -------------------------------------------------
# Estimator
# -------------------------------------------------
def test_exponential_loss_from_synthetic_decay():
    t = np.linspace(0.0, 60.0, 601)
    records = make_records(t, 3.0 * np.exp(-0.0157 * t), np.zeros_like(t))
    params = WEAK.with_photon_number(3.0)
    est = loss_from_trajectory(records, params, LossEstimatorConfig(method=EXPONENTIAL))
    assert est.q_inv == pytest.approx(0.0157, abs=1e-4)
    assert est.method == EXPONENTIAL and not est.envelope
    assert est.r2 == pytest.approx(1.0)
    assert loss_from_trajectory(records, params).method == EXPONENTIAL


def test_linear_loss_from_saturated_decay():
    t = np.linspace(0.0, 500.0, 501)
    records = make_records(t, 500.0 - 0.5 * t, np.full_like(t, 0.5))
    params = WEAK.with_photon_number(500.0)
    est = loss_from_trajectory(records, params)
    assert est.method == LINEAR
    assert est.q_inv == pytest.approx(0.001)


def test_window_too_short():
    t = np.linspace(0.0, 2.0, 21)
    records = make_records(t, 3.0 * np.exp(-0.0157 * t), np.zeros_like(t))
    with pytest.raises(WindowTooShort):
        loss_from_trajectory(records, WEAK.with_photon_number(3.0))
    with pytest.raises(EstimatorError):
        loss_from_trajectory(records, WEAK.with_photon_number(3.0), LossEstimatorConfig(method=MODAL))


def test_oscillating_decay_uses_the_envelope():
    g = 10.0
    t = np.arange(321) * math.pi / (8.0 * g)
    energy = np.exp(-0.2 * t)
    records = make_records(t, energy * np.cos(g * t) ** 2, energy * np.sin(g * t) ** 2)
    est = loss_from_trajectory(records, STRONG.with_photon_number(1.0), LossEstimatorConfig(method=EXPONENTIAL))
    assert est.envelope
    assert est.q_inv == pytest.approx(0.2, rel=1e-6)


def test_modal_loss_from_manifold():
    params = STRONG.with_photon_number(0.005)
    t = np.arange(161) * math.pi / 80.0
    est = loss_from_trajectory(evolve_manifold(params, t), params)
    assert est.method == MODAL
    assert est.q_inv == pytest.approx(2.0, rel=1e-4)
    assert sum(est.modal_rates) == pytest.approx(6.0, rel=1e-4)


def test_manifold_loss_does_not_depend_on_n0():
    curve = sweep_loss(STRONG, (0.05, 0.1, 0.13, 0.3, 0.61, 2.0), SweepConfig(engine="manifold"))
    for p in curve.points:
        assert not p.failed, p.error
        assert p.method == MODAL
        assert p.q_inv == pytest.approx(2.0, rel=1e-4)


def test_select_method_reads_the_decay_law():
    t = np.linspace(0.0, 60.0, 601)
    params = WEAK.with_photon_number(3.0)
    assert select_method(make_records(t, 3.0 * np.exp(-0.0157 * t), np.zeros_like(t)), params) == EXPONENTIAL
    assert select_method(make_records(t, 3.0 - 0.02 * t, np.full_like(t, 0.5)), params) == LINEAR

    manifold = STRONG.with_photon_number(0.005)
    grid = np.arange(161) * math.pi / 80.0
    records = evolve_manifold(manifold, grid)
    assert select_method(records, manifold) == MODAL
    bare = make_records(grid, [r.n for r in records], [r.sigma_pp for r in records])
    assert select_method(bare, manifold) == EXPONENTIAL


@pytest.mark.parametrize(
    "kwargs, key",
    [({"method": "median"}, "estimator"), ({"window": (0.5, 0.9)}, "window"), ({"transient_skip": -1.0}, "transient_skip")],
)
def test_estimator_config_errors(kwargs, key):
    with pytest.raises(ConfigError) as exc:
        LossEstimatorConfig(**kwargs)
    assert key in exc.value.fields


# -------------------------------------------------
# Sweeps
# -------------------------------------------------
def test_sweep_grid():
    grid = sweep_time_grid(STRONG.with_photon_number(0.01), SweepConfig())
    assert np.allclose(np.diff(grid), math.pi / 80.0)
    assert grid[-1] > 3.0 * 0.2
    weak = sweep_time_grid(WEAK.with_photon_number(1.0), SweepConfig(samples=50))
    assert len(weak) == 50
    with pytest.raises(ConfigError):
        sweep_time_grid(ModelParams(g=0.0, T1=1.0, n0=1.0), SweepConfig())


def test_sweep_grid_starts_the_window_after_the_transient():
    no_dephasing = ModelParams.from_T2(10.0, 1.0, 2.0, n0=0.01)
    skip = SweepConfig().estimator.skip_time(no_dephasing)
    assert skip == pytest.approx(0.3)
    grid = sweep_time_grid(no_dephasing, SweepConfig())
    # energy decays at 1/(2 T1) and has to fall to 60% of its value at the skip
    assert grid[-1] > skip + 2.0 * math.log(1.0 / 0.6)


def test_sweep_grid_caps_the_sample_count():
    grid = sweep_time_grid(STRONG.with_photon_number(1000.0), SweepConfig())
    assert len(grid) <= MAX_SWEEP_SAMPLES + 1
    strides = np.diff(grid) / (math.pi / 80.0)
    assert np.allclose(strides, np.round(strides[0]))
    assert strides[0] > 1
    assert grid[-1] > 1000.0


def test_master_points_hand_off_to_bloch():
    cfg = SweepConfig()
    assert cfg.engine_for(1.0) == "master"
    assert cfg.engine_for(50.0) == "bloch"
    assert SweepConfig(master_n0_max=math.inf).engine_for(1e6) == "master"
    assert SweepConfig(engine="manifold").engine_for(50.0) == "manifold"
    curve = sweep_loss(WEAK, (100.0,), SweepConfig(engine="master"))
    assert curve.points[0].engine == "bloch"
    assert curve.to_frame()["engine"].tolist() == ["bloch"]


def test_sweep_config_errors():
    with pytest.raises(ConfigError):
        SweepConfig(engine="analytic")
    with pytest.raises(ConfigError):
        SweepConfig(jobs=0)
    with pytest.raises(ConfigError):
        SweepConfig(master_n0_max=0.0)
    with pytest.raises(ConfigError):
        sweep_loss(STRONG, (1.0, 0.5), SweepConfig(engine="manifold"))


def test_manifold_sweep_is_flat_in_the_unsaturated_regime():
    curve = sweep_loss(STRONG, (0.005, 0.01, 0.02), SweepConfig(engine="manifold"), label="strong")
    assert curve.normalization == pytest.approx(GAMMA)
    for p in curve.points:
        assert not p.failed
        assert p.q_inv == pytest.approx(2.0, rel=1e-4)
        assert p.q_inv_normalized == pytest.approx(127.0, rel=1e-4)
    df = curve.to_frame()
    assert list(df.columns[:3]) == ["curve", "n0", "R0"]
    assert (df["coupling"] == "strong").all()
    checks = {c.name: c for c in check_curve_invariants(curve)}
    assert all(c.passed for c in checks.values())
    assert checks["below_classical_plateau"].residual == pytest.approx(0.05, rel=1e-3)


def test_no_dephasing_sweep_is_estimated():
    curve = sweep_loss(ModelParams.from_T2(10.0, 1.0, 2.0), (0.005, 0.01), SweepConfig(engine="manifold"))
    for p in curve.points:
        assert not p.failed, p.error
        assert p.method == MODAL
        assert p.q_inv == pytest.approx(0.5, rel=1e-4)


def test_master_sweep_point_matches_strong_plateau():
    curve = sweep_loss(STRONG, (0.001,), SweepConfig(engine="master"))
    point = curve.points[0]
    assert not point.failed
    assert point.method == MODAL
    assert point.q_inv == pytest.approx(2.0, rel=0.1)


def test_failed_points_are_flagged():
    curve = sweep_loss(STRONG, (0.005, 0.01), SweepConfig(engine="manifold", t_end=0.01))
    assert all(p.failed and math.isnan(p.q_inv) for p in curve.points)
    assert "samples" in curve.points[0].error
    assert curve.ok_points == []
    checks = check_curve_invariants(curve)
    assert [c.name for c in checks] == ["failed_points"]
    assert not checks[0].passed


def test_classical_curve():
    df = classical_curve(WEAK, [1e-3, 10.0], GAMMA)
    assert df["q_inv"].iloc[0] == pytest.approx(0.016, rel=1e-3)
    assert df["q_inv_normalized"].iloc[0] == pytest.approx(0.016 * 63.5, rel=1e-3)
    assert (df["curve"] == "classical").all()


# -------------------------------------------------
# Knees
# -------------------------------------------------
def test_knee_from_weak_asymptotes():
    knee = locate_knee(synthetic_curve(WEAK, np.logspace(-2, 3, 24), GAMMA, 0.5))
    assert knee.knee == pytest.approx(31.75)
    assert knee.plateau == pytest.approx(GAMMA)
    assert knee.tail_coefficient == pytest.approx(0.5)


def test_knee_below_half_a_quantum_is_reported_as_is():
    knee = locate_knee(synthetic_curve(STRONG, np.logspace(-3, 2, 24), 2.0, 0.5))
    assert knee.knee == pytest.approx(0.25)
    assert knee.plateau == pytest.approx(2.0)


def test_knee_needs_points():
    with pytest.raises(WindowTooShort):
        locate_knee(synthetic_curve(WEAK, [1.0, 2.0, 3.0], GAMMA, 0.5))


def test_saturated_tails_coincide():
    grid = (200.0, 500.0, 1000.0)
    weak = synthetic_curve(WEAK, grid, 1.0, 0.5)
    strong = synthetic_curve(STRONG, grid, 1.0, 0.5)
    check = compare_saturated_tails(weak, strong)
    assert check.passed and check.residual == pytest.approx(0.0)
    off = synthetic_curve(STRONG, grid, 1.0, 0.6)
    assert not compare_saturated_tails(weak, off).passed


def test_ns_min_rejects_small_ratios():
    with pytest.raises(ConfigError):
        find_ns_min(ratio_grid=(0.2, 1.0))


@pytest.mark.slow
def test_bloch_sweep_recovers_weak_knee():
    curve = sweep_loss(WEAK, np.logspace(-1, 3, 16), SweepConfig(engine="bloch"))
    knee = locate_knee(curve)
    assert knee.knee == pytest.approx(knee_weak(0.2, 1.0, 0.2).n_w, rel=0.3)




DEEP_GRID = (0.005, 0.01, 0.02, 4.0, 8.0, 16.0)


@pytest.mark.slow
def test_find_ns_min_reports_the_smallest_knee():
    result = find_ns_min(ratio_grid=(0.5, 5.0), n0_grid=DEEP_GRID, cfg=SweepConfig(engine="master"), edge_points=3)
    table = result.table
    assert list(table["ratio"]) == [0.5, 5.0]
    assert (table["failed_points"] == 0).all()
    assert np.isfinite(table["knee"]).all()
    assert result.ns_min == table["knee"].min()
    assert table["n_s_formula"].tolist() == pytest.approx([1.0, 0.25])
    # without dephasing the plateau and the tail coefficient are both 1/2
    assert table["knee"].iloc[0] == pytest.approx(1.0, rel=0.25)


@pytest.mark.slow
def test_strong_knee_does_not_depend_on_g():
    knees = []
    for g in (10.0, 20.0):
        curve = sweep_loss(ModelParams.from_T2(g, 1.0, 0.2), DEEP_GRID, SweepConfig(engine="master"))
        assert not any(p.failed for p in curve.points)
        knees.append(locate_knee(curve, edge_points=3).knee)
    assert knees[0] == pytest.approx(knees[1], rel=0.2)
