# -------------------------------------------------
# models/regimes.py
# -------------------------------------------------
# TLS Loss Lab - Analytic Regimes
# Closed-form solutions, loss tangents, critical photon numbers,
# regime classification, and the map from microscopic TLS
# parameters to the coupling g.
# All functions accept floats or numpy arrays where it makes sense.
# -------------------------------------------------

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from models.errors import ConfigError
from models.bloch_model import evolve_manifold
from models.lindblad_model import ModelParams, ObservableRecord

logger = logging.getLogger(__name__)

WEAK = "weak"
STRONG = "strong"
UNSATURATED = "unsaturated"
SATURATED = "saturated"
CROSSOVER = "crossover"
CROSSOVER_BAND = (0.5, 2.0)
RESONANCE_TOL = 1e-9


# -------------------------------------------------
# Microscopic parameters
# -------------------------------------------------
@dataclass(frozen=True)
class PhysicalParams:
    """Dipole TLS in a resonator mode; omega defaults to the resonant E/hbar."""

    p: float
    theta: float
    Delta: float
    Delta0: float
    epsilon: float
    V: float
    omega: Optional[float] = None
    hbar: float = 1.0

    def __post_init__(self):
        problems = {}
        if not self.Delta0 > 0:
            problems["Delta0"] = f"must be > 0, got {self.Delta0}"
        if not self.hbar > 0:
            problems["hbar"] = f"must be > 0, got {self.hbar}"
        if problems:
            raise ConfigError("invalid physical parameters", problems)
        energy = math.hypot(self.Delta, self.Delta0)
        if self.omega is None:
            object.__setattr__(self, "omega", energy / self.hbar)
        elif abs(self.hbar * self.omega - energy) > RESONANCE_TOL * energy:
            raise ConfigError(
                "resonator is not resonant with the TLS",
                {"omega": f"hbar*omega={self.hbar * self.omega:g} but E={energy:g}"},
            )

    @property
    def energy(self) -> float:
        return tls_energy(self)


def tls_energy(phys: PhysicalParams) -> float:
    return math.hypot(phys.Delta, phys.Delta0)


def mixing_angle(phys: PhysicalParams) -> float:
    """Angle with tan = Delta0 / Delta between the well basis and the energy basis."""
    return math.atan2(phys.Delta0, phys.Delta)


def field_per_photon(phys: PhysicalParams) -> float:
    """Vacuum field amplitude sqrt(hbar omega / (2 epsilon V))."""
    if not (phys.epsilon > 0 and phys.V > 0 and phys.omega > 0):
        raise ConfigError("field per photon needs positive epsilon, V, omega",
                          {"epsilon": phys.epsilon, "V": phys.V, "omega": phys.omega})
    if math.isinf(phys.epsilon) or math.isinf(phys.V):
        return 0.0
    return math.sqrt(phys.hbar * phys.omega / (2.0 * phys.epsilon * phys.V))


def compute_coupling(phys: PhysicalParams) -> float:
    return phys.p * math.cos(phys.theta) * field_per_photon(phys) * phys.Delta0 / (2.0 * phys.hbar * phys.energy)


def coherent_field_amplitude(phys: PhysicalParams, n0: float) -> float:
    """Classical field matching a coherent state: 2 sqrt(n0) times the field per photon."""
    return 2.0 * math.sqrt(n0) * field_per_photon(phys)


def classical_rabi_frequency(phys: PhysicalParams, field: float) -> float:
    return phys.p * math.cos(phys.theta) * phys.Delta0 * field / (2.0 * phys.hbar * phys.energy)


def critical_field(phys: PhysicalParams, T1: float, T2: float) -> float:
    """Field at which the classical Rabi frequency reaches 1/sqrt(T1 T2)."""
    dipole = phys.p * math.cos(phys.theta) * phys.Delta0
    if dipole == 0:
        return math.inf
    return 2.0 * phys.hbar * phys.energy / (abs(dipole) * math.sqrt(T1 * T2))


# -------------------------------------------------
# Drive strength
# -------------------------------------------------
def rabi_frequency(n, g):
    return 2.0 * g * np.sqrt(n)


def dimensionless_field(n, g, T1, T2):
    """R = 2 g sqrt(n T1 T2); at n = n0 this is also F0/Fc."""
    return 2.0 * g * np.sqrt(np.asarray(n, dtype=float) * T1 * T2)


# -------------------------------------------------
# Weak coupling
# -------------------------------------------------
def quasistatic_tls(R, T1, T2):
    """Steady TLS population and |<s+>|^2 under a quasistatic drive R."""
    R = np.asarray(R, dtype=float)
    if np.any(R < 0):
        raise ValueError("R must be >= 0")
    r2 = R * R
    sigma_pp = r2 / (2.0 * (1.0 + r2))
    coherence_sq = (T2 / (4.0 * T1)) * (R / (1.0 + r2)) ** 2
    if sigma_pp.ndim == 0:
        return float(sigma_pp), float(coherence_sq)
    return sigma_pp, coherence_sq


def gamma_effective(g, T1, T2) -> float:
    """Effective decay rate: 1/Gamma = 1/(2 g^2 T2) + T1."""
    if g == 0:
        return 0.0
    return 1.0 / (1.0 / (2.0 * g * g * T2) + T1)


def weak_unsaturated_n(t, n0, gamma):
    return n0 * np.exp(-gamma * np.asarray(t, dtype=float))


def weak_unsaturated_population(t, n0, g, T1, T2):
    """Born-Oppenheimer population along the exponential decay, R(t)^2 / 2 for R << 1."""
    n_t = weak_unsaturated_n(t, n0, gamma_effective(g, T1, T2))
    return quasistatic_tls(dimensionless_field(n_t, g, T1, T2), T1, T2)[0]


def saturated_n(t, n0, T1, n_w: float = 0.0):
    """Linear decay n0 - t/(2 T1) (unclamped) and its validity flag t <= 2 T1 (n0 - n_w)."""
    t = np.asarray(t, dtype=float)
    value = n0 - t / (2.0 * T1)
    valid = t <= 2.0 * T1 * (n0 - n_w)
    if t.ndim == 0:
        return float(value), bool(valid)
    return value, valid


def saturated_population(t):
    return np.full_like(np.asarray(t, dtype=float), 0.5)


# -------------------------------------------------
# Loss tangents
# -------------------------------------------------
def loss_classical(R0, g, T2, omega):
    return 2.0 * g * g * T2 / (omega * (1.0 + np.asarray(R0, dtype=float) ** 2))


def loss_very_weak(g, T2, omega) -> float:
    return 2.0 * g * g * T2 / omega


def is_strong(g, T1, T2) -> bool:
    return g > max(1.0 / T1, 1.0 / T2)


def loss_weak_unsaturated(g, T1, T2, omega) -> float:
    if is_strong(g, T1, T2):
        logger.warning("⚠️ weak-coupling loss evaluated at strong coupling (g=%g, T1=%g, T2=%g)", g, T1, T2)
    return gamma_effective(g, T1, T2) / omega


def loss_saturated(n0, T1, omega):
    return 1.0 / (2.0 * np.asarray(n0, dtype=float) * T1 * omega)


def loss_strong_unsaturated(T1, T2, omega) -> float:
    return (1.0 / T1 + 1.0 / T2) / (3.0 * omega)


def loss_strong_unsaturated_dephasing(T1, Tphi: Optional[float], omega) -> float:
    """Same plateau written with the pure-dephasing time (None = no dephasing)."""
    dephasing = 0.0 if Tphi is None else 1.0 / (3.0 * Tphi)
    return (0.5 / T1 + dephasing) / omega


# -------------------------------------------------
# Knees
# -------------------------------------------------
class KneeWeak(NamedTuple):
    n_w: float
    very_weak: float


def knee_weak(g, T1, T2) -> KneeWeak:
    gamma = gamma_effective(g, T1, T2)
    n_w = math.inf if gamma == 0 else 1.0 / (2.0 * T1 * gamma)
    approx = math.inf if g == 0 else 1.0 / (4.0 * g * g * T1 * T2)
    return KneeWeak(n_w, approx)


def knee_strong(T1, T2) -> float:
    return 1.5 / (1.0 + T1 / T2)


# -------------------------------------------------
# Strong coupling without dephasing
# -------------------------------------------------
class ManifoldClosedForm(NamedTuple):
    n: np.ndarray
    sigma_pp: np.ndarray
    corr_sq: np.ndarray


def _rates(g, T1):
    gamma = 1.0 / (4.0 * T1)
    if g <= gamma:
        raise ValueError(f"closed forms need g > 1/(4 T1); got g={g}, T1={T1}")
    return gamma, math.sqrt(g * g - gamma * gamma)


def strong_no_dephasing_exact(t, n0, g, T1) -> ManifoldClosedForm:
    """Exact manifold solution for T2 = 2 T1, oscillating at sqrt(g^2 - 1/(16 T1^2))."""
    gamma, big_omega = _rates(g, T1)
    t = np.asarray(t, dtype=float)
    envelope = np.exp(-2.0 * gamma * t)
    ground = np.cos(big_omega * t) + (gamma / big_omega) * np.sin(big_omega * t)
    n = n0 * envelope * ground ** 2
    sigma_pp = n0 * (g / big_omega) ** 2 * envelope * np.sin(big_omega * t) ** 2
    return ManifoldClosedForm(n, sigma_pp, n * sigma_pp)


def strong_no_dephasing_corr(t, n0, g, T1):
    """-Im<a^+ s-> of the exact solution; the correlation itself is purely imaginary."""
    gamma, big_omega = _rates(g, T1)
    t = np.asarray(t, dtype=float)
    ground = np.cos(big_omega * t) + (gamma / big_omega) * np.sin(big_omega * t)
    return n0 * (g / big_omega) * np.exp(-2.0 * gamma * t) * ground * np.sin(big_omega * t)


def strong_no_dephasing_approx(t, n0, g, T1) -> ManifoldClosedForm:
    """Large-coupling forms: n0 e^{-t/2T1} cos^2 gt, n0 e^{-t/2T1} sin^2 gt,
    and the correlation as n0^2 e^{-t/2T1} sin^2(2gt)/4."""
    t = np.asarray(t, dtype=float)
    envelope = np.exp(-t / (2.0 * T1))
    return ManifoldClosedForm(
        n0 * envelope * np.cos(g * t) ** 2,
        n0 * envelope * np.sin(g * t) ** 2,
        n0 * n0 * envelope * np.sin(2.0 * g * t) ** 2 / 4.0,
    )


def no_dephasing_zero_crossings(g, T1, count: int) -> np.ndarray:
    """First `count` zeros of the exact photon number; tend to (2k+1) pi / (2g)."""
    gamma, big_omega = _rates(g, T1)
    k = np.arange(count)
    return ((k + 0.5) * math.pi + math.atan(gamma / big_omega)) / big_omega


# -------------------------------------------------
# Classification
# -------------------------------------------------
@dataclass(frozen=True)
class RegimeReport:
    coupling: str
    saturation: str
    R0: float
    n_crit: float

    def summary(self) -> str:
        return f"{self.coupling}, {self.saturation} (R0={self.R0:.4g}, n_crit={self.n_crit:.4g})"


def classify_regime(params: ModelParams) -> RegimeReport:
    T1, T2 = params.T1, params.T2
    strong = is_strong(params.g, T1, T2)
    n_crit = knee_strong(T1, T2) if strong else knee_weak(params.g, T1, T2).n_w
    low, high = CROSSOVER_BAND
    if params.n0 < low * n_crit:
        saturation = UNSATURATED
    elif params.n0 > high * n_crit:
        saturation = SATURATED
    else:
        saturation = CROSSOVER
    return RegimeReport(
        coupling=STRONG if strong else WEAK,
        saturation=saturation,
        R0=float(dimensionless_field(params.n0, params.g, T1, T2)),
        n_crit=float(n_crit),
    )


# -------------------------------------------------
# Analytic trajectories
# -------------------------------------------------
def _linear_then_exponential(t, n0, T1, knee, tail_rate):
    """Linear decay at 1/(2 T1) down to the knee, exponential below it."""
    t_star = max(0.0, 2.0 * T1 * (n0 - knee))
    start = min(n0, knee) if t_star > 0 else n0
    linear = t < t_star
    n = np.where(linear, n0 - t / (2.0 * T1), start * np.exp(-tail_rate * (t - t_star)))
    return n, linear


def analytic_records(params: ModelParams, t_grid) -> list:
    """Closed-form trajectory for the regime of `params`.

    Strong coupling below n_s follows the restricted manifold (exact forms
    when there is no dephasing); otherwise the linear saturated decay with
    s++ = 1/2 hands over to the exponential decay at the knee.
    """
    t = np.asarray(t_grid, dtype=float)
    T1, T2, n0 = params.T1, params.T2, params.n0
    report = classify_regime(params)
    corr = [None] * len(t)

    if report.coupling == STRONG and n0 <= report.n_crit:
        if not params.has_dephasing and params.g > 1.0 / (4.0 * T1):
            exact = strong_no_dephasing_exact(t, n0, params.g, T1)
            n, sigma_pp = exact.n, exact.sigma_pp
            corr = [complex(0.0, -v) for v in strong_no_dephasing_corr(t, n0, params.g, T1)]
        else:
            return evolve_manifold(params, t)
    elif report.coupling == STRONG:
        n, linear = _linear_then_exponential(t, n0, T1, report.n_crit, params.omega * loss_strong_unsaturated(T1, T2, params.omega))
        sigma_pp = np.where(linear, 0.5, 0.5 * np.minimum(n / report.n_crit, 1.0))
    else:
        gamma = gamma_effective(params.g, T1, T2)
        n, linear = _linear_then_exponential(t, n0, T1, report.n_crit, gamma)
        sigma_pp = np.where(linear, 0.5, quasistatic_tls(dimensionless_field(np.maximum(n, 0.0), params.g, T1, T2), T1, T2)[0])

    return [
        ObservableRecord(t=float(ti), n=float(ni), sigma_pp=float(si), sigma_minus=None, a_expect=None, corr=ci)
        for ti, ni, si, ci in zip(t, np.atleast_1d(n), np.atleast_1d(sigma_pp), corr)
    ]


if __name__ == "__main__":
    weak = ModelParams.from_T2(0.2, 1.0, 0.2, n0=3.0)
    strong = ModelParams.from_T2(10.0, 1.0, 0.2, n0=0.005)
    for label, params in (("weak", weak), ("strong", strong)):
        print(f"{label}: {classify_regime(params).summary()}")
    print(f"Gamma = {gamma_effective(0.2, 1.0, 0.2):.6f}, n_w = {knee_weak(0.2, 1.0, 0.2).n_w:.4f}")
    print(f"strong plateau = {loss_strong_unsaturated(1.0, 0.2, 1.0):.4f}, n_s = {knee_strong(1.0, 0.2):.4f}")
