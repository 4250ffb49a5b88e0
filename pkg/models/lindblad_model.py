# -------------------------------------------------
# models/lindblad_model.py
# -------------------------------------------------
# TLS Loss Lab - Master Equation Engine
# Resonator + resonant TLS with T1 relaxation and pure dephasing:
#
#   drho/dt = -i g [a^+ s- + a s+, rho]
#             + (1/2Tphi)(sz rho sz - rho)
#             + (1/2T1)(2 s- rho s+ - s+s- rho - rho s+s-)
#
# The integrator path works on index slices (O(d^2) per call);
# lindblad_rhs and the Liouvillian oracle use the dense operators.
# -------------------------------------------------

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import expm

from models.errors import ConfigError, DimensionMismatch, OracleCapExceeded, TruncationError
from models.integrators import IntegratorConfig, integrate_on_grid
from models.quantum_core import (
    DensityMatrix,
    HilbertDims,
    OperatorSet,
    build_operators,
    coherent_tls_ground,
)

logger = logging.getLogger(__name__)

TAIL_POPULATION_LIMIT = 1e-6
ORACLE_CAP = 64
DIAGNOSTIC_SAMPLES = 10


# -------------------------------------------------
# Parameters and records
# -------------------------------------------------
@dataclass(frozen=True)
class ModelParams:
    """Dimensionless model parameters. Tphi=None means no pure dephasing."""

    g: float
    T1: float
    Tphi: Optional[float] = None
    omega: float = 1.0
    n0: float = 0.0
    dims: Optional[HilbertDims] = None

    def __post_init__(self):
        problems = {}
        if not self.g >= 0 or not math.isfinite(self.g):
            problems["g"] = f"must be finite and >= 0, got {self.g}"
        if not self.T1 > 0 or not math.isfinite(self.T1):
            problems["T1"] = f"must be finite and > 0, got {self.T1}"
        if self.Tphi is not None and (not self.Tphi > 0 or math.isinf(self.Tphi)):
            problems["Tphi"] = f"must be > 0 (use no-dephasing for infinity), got {self.Tphi}"
        if not self.omega > 0:
            problems["omega"] = f"must be > 0, got {self.omega}"
        if not self.n0 >= 0 or not math.isfinite(self.n0):
            problems["n0"] = f"must be finite and >= 0, got {self.n0}"
        if problems:
            raise ConfigError("invalid model parameters", problems)
        if self.dims is None:
            object.__setattr__(self, "dims", HilbertDims.for_photon_number(self.n0))

    @classmethod
    def from_T2(cls, g: float, T1: float, T2: float, **kwargs) -> "ModelParams":
        """Back-solve Tphi from 1/T2 = 1/(2 T1) + 1/Tphi."""
        return cls(g=g, T1=T1, Tphi=dephasing_time(T1, T2), **kwargs)

    @property
    def has_dephasing(self) -> bool:
        return self.Tphi is not None

    @property
    def dephasing_rate(self) -> float:
        return 0.0 if self.Tphi is None else 1.0 / self.Tphi

    @property
    def T2(self) -> float:
        return 1.0 / (0.5 / self.T1 + self.dephasing_rate)

    def with_photon_number(self, n0: float, dims: Optional[HilbertDims] = None) -> "ModelParams":
        return replace(self, n0=n0, dims=dims or HilbertDims.for_photon_number(n0))


def dephasing_time(T1: float, T2: float, rel_tol: float = 1e-12) -> Optional[float]:
    """Tphi from (T1, T2); None when T2 = 2 T1 within rel_tol."""
    if not T2 > 0 or not T1 > 0:
        raise ConfigError("invalid relaxation times", {"T1": T1, "T2": T2})
    rate = 1.0 / T2 - 0.5 / T1
    if abs(rate) <= rel_tol / T2:
        return None
    if rate < 0:
        raise ConfigError("T2 exceeds 2*T1", {"T2": f"{T2} > 2*T1 = {2 * T1}"})
    return 1.0 / rate


@dataclass(frozen=True)
class ObservableRecord:
    t: float
    n: float
    sigma_pp: float
    sigma_minus: Optional[complex]
    a_expect: Optional[complex]
    corr: Optional[complex]
    trace: float = 1.0
    purity: Optional[float] = None

    def violations(self) -> list:
        out = []
        if not -1e-12 <= self.sigma_pp <= 1.0 + 1e-6:
            out.append(f"sigma_pp={self.sigma_pp:.3e} outside [0, 1]")
        if self.n < -1e-8:
            out.append(f"n={self.n:.3e} negative")
        if abs(self.trace - 1.0) > 1e-6:
            out.append(f"trace={self.trace:.12f}")
        return out


@dataclass(frozen=True)
class StateDiagnostics:
    t: float
    trace_error: float
    hermiticity: float
    min_eigenvalue: float


# -------------------------------------------------
# Right-hand sides
# -------------------------------------------------
def lindblad_rhs(rho: DensityMatrix, params: ModelParams, ops: OperatorSet) -> np.ndarray:
    """Dense reference evaluation of the master equation."""
    if ops.dims != rho.dims:
        raise DimensionMismatch(f"operators built for {ops.dims}, state lives in {rho.dims}")
    r = rho.matrix
    h = params.g * (ops.a_dag @ ops.sigma_minus + ops.a @ ops.sigma_plus)
    out = -1j * (h @ r - r @ h)
    if params.has_dephasing:
        out += (ops.sigma_z @ r @ ops.sigma_z - r) * (0.5 * params.dephasing_rate)
    jump = 2.0 * ops.sigma_minus @ r @ ops.sigma_plus - ops.sigma_pp @ r - r @ ops.sigma_pp
    out += jump * (0.5 / params.T1)
    return out


class LindbladGenerator:
    """Slice-based master-equation right-hand side on raw matrices.

    The coupling Hamiltonian only links |n,+> (index 2n+1) with
    |n+1,-> (index 2n+2) at amplitude g*sqrt(n+1); sz and s+s- are
    diagonal; s- rho s+ copies the excited block onto the ground block.
    """

    def __init__(self, params: ModelParams):
        dims = params.dims
        d = dims.total_dim
        k = np.arange(d - 1)
        self.dims = dims
        self.hop = np.where(k % 2 == 1, params.g * np.sqrt((k + 1) // 2), 0.0)
        z = np.tile([-1.0, 1.0], dims.fock_levels)
        excited = (z + 1.0) / 2.0
        self.gamma1 = 1.0 / params.T1
        self.decay = 0.5 * params.dephasing_rate * (np.outer(z, z) - 1.0) - 0.5 * self.gamma1 * (
            excited[:, None] + excited[None, :]
        )

    def commutator(self, rho: np.ndarray) -> np.ndarray:
        """[H, rho] for the coupling Hamiltonian."""
        out = np.zeros_like(rho)
        hop = self.hop
        out[:-1] += hop[:, None] * rho[1:]
        out[1:] += hop[:, None] * rho[:-1]
        out[:, :-1] -= rho[:, 1:] * hop[None, :]
        out[:, 1:] -= rho[:, :-1] * hop[None, :]
        return out

    def __call__(self, t: float, rho: np.ndarray) -> np.ndarray:
        out = -1j * self.commutator(rho)
        out += self.decay * rho
        out[0::2, 0::2] += self.gamma1 * rho[1::2, 1::2]
        return out


# -------------------------------------------------
# Observables
# -------------------------------------------------
def observables(t: float, rho: np.ndarray, dims: HilbertDims) -> ObservableRecord:
    """Record from a raw matrix using the index structure of each operator."""
    diag = np.real(np.diagonal(rho))
    photons = np.repeat(np.arange(dims.fock_levels, dtype=float), 2)
    sub2 = np.diagonal(rho, offset=-2)
    a_weights = np.sqrt(np.arange(len(sub2)) // 2 + 1.0)
    corr_diag = np.diagonal(rho, offset=1)[1::2]
    return ObservableRecord(
        t=float(t),
        n=float(diag @ photons),
        sigma_pp=float(diag[1::2].sum()),
        sigma_minus=complex(np.diagonal(rho, offset=-1)[0::2].sum()),
        a_expect=complex(sub2 @ a_weights),
        corr=complex(corr_diag @ np.sqrt(np.arange(1, len(corr_diag) + 1.0))),
        trace=float(diag.sum()),
        purity=float(np.real(np.vdot(rho, rho))),
    )


def tail_population(rho: np.ndarray) -> float:
    """Population in the top Fock level."""
    return float(np.real(rho[-2, -2] + rho[-1, -1]))


def energy_flow_residual(records: list, T1: float, t_min: float = 0.0) -> float:
    """Relative residual of d(n + s++)/dt = -s++/T1 on samples with t >= t_min.

    Each pair of uniform sample intervals is balanced with Simpson's rule:
    E(t+2h) - E(t) against -(h/3)(s(t) + 4 s(t+h) + s(t+2h))/T1.
    """
    kept = [r for r in records if r.t >= t_min]
    if len(kept) < 3:
        return 0.0
    t = np.array([r.t for r in kept])
    energy = np.array([r.n + r.sigma_pp for r in kept])
    loss = np.array([r.sigma_pp for r in kept]) / T1
    h = (t[2:] - t[:-2]) / 2.0
    drop = energy[2:] - energy[:-2]
    outflow = (h / 3.0) * (loss[:-2] + 4.0 * loss[1:-1] + loss[2:])
    residual = np.abs(drop + outflow)[0::2]
    scale = 2.0 * h[0::2] * float(np.max(np.abs(loss)))
    if not np.any(loss):
        return float(np.max(residual / (2.0 * h[0::2])))
    return float(np.max(residual / scale))


def energy_increase(records: list) -> float:
    """Largest increase of n + s++ between consecutive samples (0 when monotone)."""
    energy = np.array([r.n + r.sigma_pp for r in records])
    return float(max(0.0, np.max(np.diff(energy), initial=0.0)))


# -------------------------------------------------
# Time evolution
# -------------------------------------------------
class MasterEquationEngine:
    """One master-equation evolution; construct a fresh engine per run."""

    def __init__(self, params: ModelParams, cfg: IntegratorConfig):
        self.params = params
        self.cfg = cfg
        self.generator = LindbladGenerator(params)
        self.diagnostics: list = []
        self.energy_flow = 0.0

    def initial_state(self) -> DensityMatrix:
        return coherent_tls_ground(math.sqrt(self.params.n0), self.params.dims)

    def run(self, rho0: Optional[DensityMatrix] = None, t_grid=None) -> list:
        dims = self.params.dims
        rho0 = rho0 if rho0 is not None else self.initial_state()
        if rho0.dims != dims:
            raise DimensionMismatch(f"initial state lives in {rho0.dims}, parameters use {dims}")
        t_grid = self.cfg.time_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
        checkpoints = set(np.linspace(0, len(t_grid) - 1, min(DIAGNOSTIC_SAMPLES, len(t_grid))).round().astype(int))
        records = []
        self.diagnostics = []
        excitations = np.repeat(np.arange(dims.fock_levels, dtype=float), 2) + np.tile([0.0, 1.0], dims.fock_levels)
        flow = {"worst": 0.0, "scale": 0.0}

        def on_sample(t, rho):
            tail = tail_population(rho)
            if tail > TAIL_POPULATION_LIMIT:
                raise TruncationError(
                    f"population {tail:.3e} in Fock level {dims.fock_cutoff} at t={t:.6g}; raise fock_cutoff"
                )
            if len(records) in checkpoints:
                state = DensityMatrix(dims, rho)
                self.diagnostics.append(
                    StateDiagnostics(t, abs(state.trace() - 1.0), state.hermiticity_residual(), state.min_eigenvalue())
                )
            record = observables(t, rho, dims)
            records.append(record)
            # d(n + s++)/dt from the generator against the T1 outflow
            outflow = record.sigma_pp / self.params.T1
            rate = float(np.real(np.diagonal(self.generator(t, rho))) @ excitations)
            flow["worst"] = max(flow["worst"], abs(rate + outflow))
            flow["scale"] = max(flow["scale"], outflow)

        logger.info(
            "Master equation: n0=%g, g=%g, T1=%g, T2=%g, dim=%d, %d samples",
            self.params.n0, self.params.g, self.params.T1, self.params.T2, dims.total_dim, len(t_grid),
        )
        integrate_on_grid(
            self.generator,
            np.array(rho0.matrix, dtype=complex),
            t_grid,
            self.cfg,
            post_step=lambda r: 0.5 * (r + r.conj().T),
            on_sample=on_sample,
        )
        self.energy_flow = flow["worst"] / flow["scale"] if flow["scale"] > 0 else flow["worst"]
        return records


def evolve_master(params: ModelParams, cfg: IntegratorConfig) -> list:
    return MasterEquationEngine(params, cfg).run()


# -------------------------------------------------
# Liouvillian oracle
# -------------------------------------------------
def _left(op: np.ndarray) -> np.ndarray:
    """Superoperator of left multiplication, row-major vec."""
    return np.kron(op, np.eye(op.shape[0]))


def _right(op: np.ndarray) -> np.ndarray:
    """Superoperator of right multiplication, row-major vec."""
    return np.kron(np.eye(op.shape[0]), op.T)


def liouvillian_matrix(params: ModelParams, ops: OperatorSet, cap: int = ORACLE_CAP) -> np.ndarray:
    """L with vec(drho/dt) = L @ vec(rho), vec = row-major ravel."""
    d = ops.dims.total_dim
    if d > cap:
        raise OracleCapExceeded(f"total_dim {d} exceeds oracle cap {cap}")
    h = params.g * (ops.a_dag @ ops.sigma_minus + ops.a @ ops.sigma_plus)
    ident = np.eye(d * d)
    liou = -1j * (_left(h) - _right(h))
    if params.has_dephasing:
        liou += (0.5 * params.dephasing_rate) * (_left(ops.sigma_z) @ _right(ops.sigma_z) - ident)
    liou += (0.5 / params.T1) * (
        2.0 * _left(ops.sigma_minus) @ _right(ops.sigma_plus) - _left(ops.sigma_pp) - _right(ops.sigma_pp)
    )
    return liou


def evolve_oracle(
    params: ModelParams,
    t_grid,
    rho0: Optional[DensityMatrix] = None,
    cap: int = ORACLE_CAP,
) -> list:
    """Exact propagation rho(t) = expm(L t) rho(0) on each grid time."""
    dims = params.dims
    ops = build_operators(dims)
    liou = liouvillian_matrix(params, ops, cap)
    rho0 = rho0 if rho0 is not None else coherent_tls_ground(math.sqrt(params.n0), dims)
    vec0 = np.array(rho0.matrix, dtype=complex).ravel()
    d = dims.total_dim
    records = []
    for t in np.asarray(t_grid, dtype=float):
        vec = vec0 if t == 0.0 else expm(liou * t) @ vec0
        records.append(observables(t, vec.reshape(d, d), dims))
    return records
