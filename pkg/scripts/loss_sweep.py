# -------------------------------------------------
# scripts/loss_sweep.py
# -------------------------------------------------
# TLS Loss Lab - Loss Sweeper
# Loss tangents from simulated trajectories, sweeps over the
# initial photon number, knee location and the n_s,min search.
# -------------------------------------------------

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.linalg import logm
from sklearn.linear_model import LinearRegression

from models.bloch_model import evolve_bloch, evolve_manifold
from models.errors import ConfigError, NonMonotoneDecay, SimulationError, WindowTooShort
from models.integrators import ADAPTIVE, IntegratorConfig
from models.lindblad_model import MasterEquationEngine, ModelParams
from models.regimes import (
    STRONG,
    UNSATURATED,
    RegimeReport,
    classify_regime,
    dimensionless_field,
    gamma_effective,
    knee_strong,
    knee_weak,
    loss_classical,
    loss_saturated,
    loss_very_weak,
    loss_weak_unsaturated,
)

logger = logging.getLogger(__name__)

EXPONENTIAL = "exponential"
LINEAR = "linear"
MODAL = "modal"
AUTO = "auto"
ESTIMATOR_METHODS = (EXPONENTIAL, LINEAR, MODAL, AUTO)
SWEEP_ENGINES = ("master", "bloch", "manifold")

MIN_WINDOW_SAMPLES = 3
MONOTONE_TOL = 1e-7
MODAL_ENERGY_FLOOR = 0.05
ENVELOPE_TOL = 1e-6
MAX_SWEEP_SAMPLES = 4000
MASTER_N0_MAX = 20.0
WEAK_REFERENCE = (0.2, 1.0, 0.2)
DEFAULT_N0_GRID = tuple(np.logspace(-2, 3, 24))
DEFAULT_RATIO_GRID = (0.5, 1.0, 2.0, 3.0, 5.0)
DEFAULT_NS_N0_GRID = tuple(np.logspace(-2, np.log10(16.0), 14))


# -------------------------------------------------
# Estimator
# -------------------------------------------------
@dataclass(frozen=True)
class LossEstimatorConfig:
    """method: exponential | linear | modal | auto.

    The transient lasts transient_skip * min(T2, 1/g); window fractions
    are taken of the energy left when it ends.
    """

    method: str = AUTO
    window: tuple = (0.95, 0.60)
    transient_skip: float = 3.0

    def __post_init__(self):
        problems = {}
        if self.method not in ESTIMATOR_METHODS:
            problems["estimator"] = f"must be one of {ESTIMATOR_METHODS}, got {self.method!r}"
        start, end = self.window
        if not 0 < end < start <= 1:
            problems["window"] = f"need 0 < end < start <= 1, got ({start}, {end})"
        if not self.transient_skip >= 0:
            problems["transient_skip"] = f"must be >= 0, got {self.transient_skip}"
        if problems:
            raise ConfigError("invalid loss estimator", problems)
        object.__setattr__(self, "window", (float(start), float(end)))

    def skip_time(self, params: ModelParams) -> float:
        scale = params.T2 if params.g == 0 else min(params.T2, 1.0 / params.g)
        return self.transient_skip * scale


@dataclass(frozen=True)
class LossEstimate:
    q_inv: float
    method: str
    envelope: bool
    window: tuple
    r2: float
    modal_rates: Optional[tuple] = None


def _arrays(records):
    t = np.array([r.t for r in records], dtype=float)
    n = np.array([r.n for r in records], dtype=float)
    energy = n + np.array([r.sigma_pp for r in records], dtype=float)
    return t, n, energy


def _reference_energy(t, energy, t_skip: float) -> float:
    after = np.flatnonzero(t >= t_skip)
    if len(after) == 0:
        raise WindowTooShort(f"no samples after the transient (t={t_skip:g}); extend t_end")
    e_ref = float(energy[after[0]])
    if not e_ref > 0:
        raise WindowTooShort(f"no energy left at t={t_skip:g}")
    return e_ref


def _fit_window(t, energy, params: ModelParams, cfg: LossEstimatorConfig) -> np.ndarray:
    start, end = cfg.window
    t_skip = cfg.skip_time(params)
    e_ref = _reference_energy(t, energy, t_skip)
    mask = (t >= t_skip) & (energy <= start * e_ref) & (energy >= end * e_ref)
    if mask.sum() < MIN_WINDOW_SAMPLES:
        raise WindowTooShort(
            f"{int(mask.sum())} samples between {start:g} and {end:g} of the energy at t={t_skip:g}; "
            "extend t_end or raise samples"
        )
    return mask


def _line_fit(x, y):
    reg = LinearRegression().fit(x.reshape(-1, 1), y)
    r2 = reg.score(x.reshape(-1, 1), y) if np.ptp(y) > 0 else 1.0
    return float(reg.coef_[0]), float(r2)


def _oscillates(values) -> bool:
    return bool(np.any(np.diff(values) > MONOTONE_TOL * np.max(np.abs(values))))


def _uniform(t) -> bool:
    dt = np.diff(t)
    return len(dt) > 0 and np.ptp(dt) <= 1e-9 * dt.mean()


def _rabi_averaged(t, energy, params: ModelParams) -> np.ndarray:
    """Energy averaged over one vacuum-Rabi period pi/g; NaN where the period is cut off."""
    if params.g == 0 or not _uniform(t):
        return energy
    width = int(round(math.pi / (params.g * (t[1] - t[0]))))
    if width < 2:
        return energy
    return pd.Series(energy).rolling(width, center=True, min_periods=width).mean().to_numpy()


def select_method(records, params: ModelParams, cfg: Optional[LossEstimatorConfig] = None) -> str:
    """Decay law read off the trajectory: linear or exponential energy loss, modal for oscillating exponentials.

    Both laws are fitted to the energy over the window (Rabi-averaged when
    the photon number oscillates) and the better R^2 wins.
    """
    cfg = cfg or LossEstimatorConfig()
    t, n, energy = _arrays(records)
    mask = _fit_window(t, energy, params, cfg)
    oscillating = _oscillates(n[mask])
    smooth = _rabi_averaged(t, energy, params) if oscillating else energy
    keep = mask & np.isfinite(smooth)
    if keep.sum() < MIN_WINDOW_SAMPLES:
        keep = mask
        smooth = energy
    _, r2_linear = _line_fit(t[keep], smooth[keep])
    _, r2_log = _line_fit(t[keep], np.log(smooth[keep]))
    logger.debug("decay fit R^2: linear %.6f, exponential %.6f", r2_linear, r2_log)
    if r2_linear > r2_log:
        return LINEAR
    if oscillating and all(r.corr is not None for r in records) and _uniform(t):
        return MODAL
    return EXPONENTIAL


def _exponential(t, n, mask, params: ModelParams) -> LossEstimate:
    tw, nw = t[mask], n[mask]
    if np.any(nw <= 0) or _oscillates(nw):
        return _envelope(t, n, mask, params)
    slope, r2 = _line_fit(tw, np.log(nw))
    if slope >= 0:
        raise NonMonotoneDecay(f"ln<n> grows over the window (slope {slope:.3e})")
    return LossEstimate(-slope / params.omega, EXPONENTIAL, False, (float(tw[0]), float(tw[-1])), r2)


def _envelope(t, n, mask, params: ModelParams) -> LossEstimate:
    """Exponential fit restricted to t = k pi / g, where the vacuum-Rabi factor peaks."""
    if params.g == 0:
        raise NonMonotoneDecay("photon number is not monotone and g = 0 leaves no envelope")
    k = t * params.g / math.pi
    on_peak = np.abs(k - np.round(k)) <= ENVELOPE_TOL * np.maximum(1.0, k)
    sel = mask & on_peak & (n > 0)
    if sel.sum() < MIN_WINDOW_SAMPLES:
        raise NonMonotoneDecay(
            f"oscillating photon number with only {int(sel.sum())} samples on t = k*pi/g; sample with dt = pi/(8g)"
        )
    slope, r2 = _line_fit(t[sel], np.log(n[sel]))
    logger.warning("⚠️ oscillating decay, loss taken from the envelope at t = k*pi/g (%d points)", int(sel.sum()))
    return LossEstimate(-slope / params.omega, EXPONENTIAL, True, (float(t[sel][0]), float(t[sel][-1])), r2)


def _linear(t, n, mask, params: ModelParams) -> LossEstimate:
    if not params.n0 > 0:
        raise WindowTooShort("linear loss needs n0 > 0")
    slope, r2 = _line_fit(t[mask], n[mask])
    if slope >= 0:
        raise NonMonotoneDecay(f"<n> grows over the window (slope {slope:.3e})")
    return LossEstimate(-slope / (params.omega * params.n0), LINEAR, False, (float(t[mask][0]), float(t[mask][-1])), r2)


def _modal(records, t, energy, params: ModelParams, cfg: LossEstimatorConfig) -> LossEstimate:
    """Mean modal decay rate of (n, s++, Im<a^+ s->) from the fitted one-sample propagator."""
    if any(r.corr is None for r in records):
        raise WindowTooShort("modal loss needs <a^+ s-> in every record")
    t_skip = cfg.skip_time(params)
    e_ref = _reference_energy(t, energy, t_skip)
    mask = (t >= t_skip) & (energy >= MODAL_ENERGY_FLOOR * e_ref)
    idx = np.flatnonzero(mask)
    if len(idx) < 5:
        raise WindowTooShort(f"{len(idx)} samples for the modal fit")
    if not _uniform(t[idx]):
        raise WindowTooShort("modal loss needs uniformly spaced samples")
    states = np.array([[records[i].n, records[i].sigma_pp, records[i].corr.imag] for i in idx])
    x, y = states[:-1], states[1:]
    reg = LinearRegression(fit_intercept=False).fit(x, y)
    propagator = reg.coef_
    det = np.linalg.det(propagator)
    if not det > 0:
        raise NonMonotoneDecay(f"fitted propagator has det {det:.3e}")
    step = float(np.diff(t[idx]).mean())
    rates = tuple(sorted(-np.linalg.eigvals(logm(propagator) / step).real))
    q_inv = -math.log(det) / (3.0 * step * params.omega)
    return LossEstimate(q_inv, MODAL, False, (float(t[idx[0]]), float(t[idx[-1]])), float(reg.score(x, y)), rates)


def loss_from_trajectory(records: list, params: ModelParams, cfg: Optional[LossEstimatorConfig] = None) -> LossEstimate:
    cfg = cfg or LossEstimatorConfig()
    t, n, energy = _arrays(records)
    method = select_method(records, params, cfg) if cfg.method == AUTO else cfg.method
    if method == MODAL:
        return _modal(records, t, energy, params, cfg)
    mask = _fit_window(t, energy, params, cfg)
    if method == LINEAR:
        return _linear(t, n, mask, params)
    return _exponential(t, n, mask, params)


# -------------------------------------------------
# Sweeps
# -------------------------------------------------
@dataclass(frozen=True)
class SweepConfig:
    """master_n0_max: master-engine points above it run on the decorrelated Bloch engine."""

    engine: str = "master"
    estimator: LossEstimatorConfig = field(default_factory=LossEstimatorConfig)
    samples: int = 400
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    method: str = ADAPTIVE
    t_end: Optional[float] = None
    jobs: int = 1
    reference: tuple = WEAK_REFERENCE
    master_n0_max: float = MASTER_N0_MAX

    def __post_init__(self):
        if self.engine not in SWEEP_ENGINES:
            raise ConfigError("invalid sweep", {"engine": f"must be one of {SWEEP_ENGINES}, got {self.engine!r}"})
        if self.jobs == 0:
            raise ConfigError("invalid sweep", {"jobs": "must be non-zero"})
        if not self.master_n0_max > 0:
            raise ConfigError("invalid sweep", {"master_n0_max": f"must be > 0, got {self.master_n0_max}"})

    def engine_for(self, n0: float) -> str:
        return "bloch" if self.engine == "master" and n0 > self.master_n0_max else self.engine


@dataclass(frozen=True)
class LossPoint:
    n0: float
    R0: float
    q_inv: float
    q_inv_normalized: float
    q_inv_classical: float
    regime: RegimeReport
    method: str = ""
    envelope: bool = False
    failed: bool = False
    error: str = ""
    engine: str = ""


@dataclass(frozen=True)
class LossCurve:
    params: ModelParams
    points: tuple
    normalization: float
    label: str = ""

    @property
    def ok_points(self) -> list:
        return [p for p in self.points if not p.failed]

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "n0": p.n0,
                "R0": p.R0,
                "q_inv": p.q_inv,
                "q_inv_normalized": p.q_inv_normalized,
                "q_inv_classical": p.q_inv_classical,
                "coupling": p.regime.coupling,
                "saturation": p.regime.saturation,
                "engine": p.engine,
                "method": p.method,
                "envelope": p.envelope,
                "failed": p.failed,
            }
            for p in self.points
        ]
        df = pd.DataFrame(rows)
        if self.label:
            df.insert(0, "curve", self.label)
        return df


def sweep_time_grid(params: ModelParams, cfg: SweepConfig) -> np.ndarray:
    """Grid reaching past the fit window, which starts after the transient.

    Strong coupling samples on multiples of pi/(8g), at most
    MAX_SWEEP_SAMPLES samples.
    """
    if params.g == 0:
        raise ConfigError("loss sweep needs coupling", {"g": "must be > 0"})
    t_end = cfg.t_end
    if t_end is None:
        end_fraction = cfg.estimator.window[1]
        rate = min(
            gamma_effective(params.g, params.T1, params.T2),
            0.5 / params.T1,
            params.omega * float(loss_saturated(max(params.n0, 1e-12), params.T1, params.omega)),
        )
        t_end = cfg.estimator.skip_time(params) + 1.5 * math.log(1.0 / end_fraction) / rate
    if classify_regime(params).coupling == STRONG:
        dt = math.pi / (8.0 * params.g)
        count = int(math.ceil(t_end / dt))
        dt *= max(1, int(math.ceil(count / MAX_SWEEP_SAMPLES)))
        return np.arange(int(math.ceil(t_end / dt)) + 1) * dt
    return np.linspace(0.0, t_end, cfg.samples)


def run_engine(params: ModelParams, engine: str, t_grid, rel_tol=1e-8, abs_tol=1e-10, method=ADAPTIVE) -> list:
    t_grid = np.asarray(t_grid, dtype=float)
    if engine == "manifold":
        return evolve_manifold(params, t_grid)
    icfg = IntegratorConfig(
        t_end=float(t_grid[-1]), sample_count=len(t_grid), rel_tol=rel_tol, abs_tol=abs_tol, method=method
    )
    if engine == "bloch":
        return evolve_bloch(params, icfg, t_grid)
    return MasterEquationEngine(params, icfg).run(t_grid=t_grid)


def _evaluate_point(template: ModelParams, n0: float, cfg: SweepConfig, normalization: float) -> LossPoint:
    params = template.with_photon_number(n0)
    regime = classify_regime(params)
    classical = float(loss_classical(regime.R0, params.g, params.T2, params.omega))
    engine = cfg.engine_for(n0)
    try:
        records = run_engine(params, engine, sweep_time_grid(params, cfg), cfg.rel_tol, cfg.abs_tol, cfg.method)
        est = loss_from_trajectory(records, params, cfg.estimator)
    except SimulationError as e:
        logger.warning("⚠️ sweep point n0=%g failed: %s", n0, e)
        return LossPoint(n0, regime.R0, math.nan, math.nan, classical, regime, failed=True, error=str(e), engine=engine)
    return LossPoint(
        n0, regime.R0, est.q_inv, est.q_inv / normalization, classical, regime, est.method, est.envelope, engine=engine
    )


def sweep_loss(template: ModelParams, n0_grid=DEFAULT_N0_GRID, cfg: Optional[SweepConfig] = None, label: str = "") -> LossCurve:
    """One independent run per n0; failed points are kept and flagged."""
    cfg = cfg or SweepConfig()
    grid = [float(x) for x in n0_grid]
    if not grid or any(x <= 0 for x in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("invalid sweep grid", {"n0_grid": "must be positive and strictly increasing"})
    normalization = loss_weak_unsaturated(*cfg.reference, omega=template.omega)
    handed_off = sum(cfg.engine_for(x) != cfg.engine for x in grid)
    if handed_off:
        logger.info("%d of %d points above n0=%g run on the Bloch engine", handed_off, len(grid), cfg.master_n0_max)

    points = Parallel(n_jobs=cfg.jobs)(delayed(_evaluate_point)(template, n0, cfg, normalization) for n0 in grid)
    curve = LossCurve(template, tuple(points), normalization, label)
    failed = sum(p.failed for p in points)
    if failed:
        logger.warning("⚠️ %d of %d sweep points failed", failed, len(points))
    logger.info("✅ Swept %d points (g=%g, T1=%g, T2=%g, engine=%s)", len(points), template.g, template.T1, template.T2, cfg.engine)
    return curve


def classical_curve(template: ModelParams, n0_grid, normalization: float, label: str = "classical") -> pd.DataFrame:
    n0 = np.asarray(n0_grid, dtype=float)
    R0 = dimensionless_field(n0, template.g, template.T1, template.T2)
    q = loss_classical(R0, template.g, template.T2, template.omega)
    return pd.DataFrame({"curve": label, "n0": n0, "R0": R0, "q_inv": q, "q_inv_normalized": q / normalization})


# -------------------------------------------------
# Knees
# -------------------------------------------------
@dataclass(frozen=True)
class KneeEstimate:
    knee: float
    plateau: float
    tail_coefficient: float


def locate_knee(curve: LossCurve, edge_points: Optional[int] = None) -> KneeEstimate:
    """Intersection of the low-n0 plateau with the C/n0 tail, both fitted from the curve."""
    pts = sorted(curve.ok_points, key=lambda p: p.n0)
    k = edge_points or max(2, len(pts) // 4)
    if len(pts) < 2 * k:
        raise WindowTooShort(f"{len(pts)} usable sweep points, need {2 * k} for a knee")
    low, high = pts[:k], pts[-k:]
    plateau = float(np.median([p.q_inv for p in low]))
    inv_n0 = np.array([1.0 / p.n0 for p in high]).reshape(-1, 1)
    reg = LinearRegression(fit_intercept=False).fit(inv_n0, [p.q_inv for p in high])
    coefficient = float(reg.coef_[0])
    return KneeEstimate(coefficient / plateau, plateau, coefficient)


@dataclass(frozen=True)
class NsMinResult:
    ns_min: float
    table: pd.DataFrame


def find_ns_min(
    T1: float = 1.0,
    ratio_grid=DEFAULT_RATIO_GRID,
    cfg: Optional[SweepConfig] = None,
    g_T1: float = 50.0,
    n0_grid=DEFAULT_NS_N0_GRID,
    omega: float = 1.0,
    edge_points: Optional[int] = None,
) -> NsMinResult:
    """Minimum strong-coupling knee over T1/T2 ratios at fixed g*T1."""
    if any(r < 0.5 for r in ratio_grid):
        raise ConfigError("invalid ratio grid", {"ratio_grid": "T1/T2 must be >= 0.5"})
    rows = []
    for ratio in ratio_grid:
        T2 = T1 / ratio
        template = ModelParams.from_T2(g_T1 / T1, T1, T2, omega=omega)
        curve = sweep_loss(template, n0_grid, cfg, label=f"T1/T2={ratio:g}")
        knee = locate_knee(curve, edge_points)
        rows.append(
            {
                "ratio": ratio,
                "T2": T2,
                "knee": knee.knee,
                "n_s_formula": knee_strong(T1, T2),
                "plateau": knee.plateau,
                "tail_coefficient": knee.tail_coefficient,
                "failed_points": len(curve.points) - len(curve.ok_points),
            }
        )
    table = pd.DataFrame(rows)
    knees = table["knee"].to_numpy()
    if np.all(np.diff(knees) <= 0) or np.all(np.diff(knees) >= 0):
        logger.info("knee is monotone in T2 over the ratio grid")
    else:
        logger.info("knee is not monotone in T2 over the ratio grid")
    result = NsMinResult(float(knees.min()), table)
    logger.info("✅ n_s,min = %.4f over %d ratios", result.ns_min, len(table))
    return result


# -------------------------------------------------
# Curve invariants
# -------------------------------------------------
@dataclass(frozen=True)
class InvariantCheck:
    """t_min set when the check only covers samples with t >= t_min."""

    name: str
    residual: float
    passed: bool
    t_min: Optional[float] = None

    def as_dict(self) -> dict:
        out = {"name": self.name, "residual": self.residual, "pass": self.passed}
        if self.t_min is not None:
            out["t_min"] = self.t_min
        return out


def check_curve_invariants(curve: LossCurve) -> list:
    params = curve.params
    pts = curve.ok_points
    checks = [InvariantCheck("failed_points", float(len(curve.points) - len(pts)), len(pts) == len(curve.points))]
    if not pts:
        return checks
    q = np.array([p.q_inv for p in pts])
    checks.append(InvariantCheck("positive_loss", float(-min(q.min(), 0.0)), bool(np.all(q > 0))))
    r0 = dimensionless_field(np.array([p.n0 for p in pts]), params.g, params.T1, params.T2)
    drift = float(np.max(np.abs(r0 - np.array([p.R0 for p in pts]))))
    checks.append(InvariantCheck("r0_bijection", drift, drift <= 1e-12 * max(1.0, float(r0.max()))))
    if classify_regime(params).coupling == STRONG:
        low = [p.q_inv for p in pts if p.regime.saturation == UNSATURATED]
        if low:
            ratio = max(low) / loss_very_weak(params.g, params.T2, params.omega)
            checks.append(InvariantCheck("below_classical_plateau", ratio, ratio < 1.0))
    else:
        ratio = float(np.max(q / np.array([p.q_inv_classical for p in pts])))
        checks.append(InvariantCheck("classical_bound", ratio, ratio <= 1.1))
    return checks


def compare_saturated_tails(weak: LossCurve, strong: LossCurve, factor: float = 4.0) -> InvariantCheck:
    """Largest |ratio - 1| of weak and strong losses at n0 >= factor * max(n_w, n_s)."""
    wp, sp = weak.params, strong.params
    threshold = factor * max(knee_weak(wp.g, wp.T1, wp.T2).n_w, knee_strong(sp.T1, sp.T2))
    strong_by_n0 = {p.n0: p.q_inv for p in strong.ok_points}
    ratios = [p.q_inv / strong_by_n0[p.n0] for p in weak.ok_points if p.n0 >= threshold and p.n0 in strong_by_n0]
    if not ratios:
        return InvariantCheck("saturated_tails_coincide", math.nan, True)
    worst = float(max(abs(r - 1.0) for r in ratios))
    return InvariantCheck("saturated_tails_coincide", worst, worst <= 0.1)
