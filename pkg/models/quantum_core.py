# -------------------------------------------------
# models/quantum_core.py
# -------------------------------------------------
# TLS Loss Lab - Quantum Core
# Truncated Fock (x) TLS Hilbert space, operators, coherent
# initial states and expectation values.
#
# Basis ordering: index = 2*n + s, Fock index n major, TLS index
# s minor, s=0 is the TLS ground state |->, s=1 the excited |+>.
# Units: hbar = 1.
# -------------------------------------------------

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from models.errors import ConfigError, DimensionMismatch, TruncationError

TAIL_WEIGHT_LIMIT = 1e-8
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-9


def _frozen(matrix: np.ndarray) -> np.ndarray:
    matrix = np.array(matrix, dtype=complex)
    matrix.setflags(write=False)
    return matrix


# -------------------------------------------------
# Hilbert space
# -------------------------------------------------
@dataclass(frozen=True)
class HilbertDims:
    fock_cutoff: int

    def __post_init__(self):
        if int(self.fock_cutoff) != self.fock_cutoff or self.fock_cutoff < 1:
            raise ConfigError("invalid Hilbert space", {"fock_cutoff": f"must be an integer >= 1, got {self.fock_cutoff}"})
        object.__setattr__(self, "fock_cutoff", int(self.fock_cutoff))

    @property
    def fock_levels(self) -> int:
        return self.fock_cutoff + 1

    @property
    def total_dim(self) -> int:
        return 2 * (self.fock_cutoff + 1)

    def index(self, n: int, excited: bool) -> int:
        return 2 * n + int(excited)

    @classmethod
    def for_photon_number(cls, n0: float) -> "HilbertDims":
        """Default truncation N = ceil(n0 + 10*sqrt(n0 + 1) + 10)."""
        return cls(int(math.ceil(n0 + 10.0 * math.sqrt(n0 + 1.0) + 10.0)))


# -------------------------------------------------
# Operators
# -------------------------------------------------
@dataclass(frozen=True, eq=False)
class OperatorSet:
    dims: HilbertDims
    a: np.ndarray
    a_dag: np.ndarray
    sigma_minus: np.ndarray
    sigma_plus: np.ndarray
    sigma_z: np.ndarray
    sigma_pp: np.ndarray
    number_op: np.ndarray

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.dims.total_dim, dtype=complex)


def build_operators(dims: HilbertDims) -> OperatorSet:
    """Dense joint-space operators in the (Fock major, TLS minor) ordering."""
    levels = dims.fock_levels
    fock_a = np.diag(np.sqrt(np.arange(1, levels, dtype=float)), k=1)
    id_fock = np.eye(levels)
    id_tls = np.eye(2)
    tls_minus = np.array([[0.0, 1.0], [0.0, 0.0]])
    tls_z = np.diag([-1.0, 1.0])

    a = np.kron(fock_a, id_tls)
    sigma_minus = np.kron(id_fock, tls_minus)
    sigma_z = np.kron(id_fock, tls_z)
    a_dag = a.conj().T
    sigma_plus = sigma_minus.conj().T
    return OperatorSet(
        dims=dims,
        a=_frozen(a),
        a_dag=_frozen(a_dag),
        sigma_minus=_frozen(sigma_minus),
        sigma_plus=_frozen(sigma_plus),
        sigma_z=_frozen(sigma_z),
        sigma_pp=_frozen((np.eye(dims.total_dim) + sigma_z) / 2.0),
        number_op=_frozen(a_dag @ a),
    )


# -------------------------------------------------
# Density matrices
# -------------------------------------------------
@dataclass(frozen=True, eq=False)
class DensityMatrix:
    dims: HilbertDims
    matrix: np.ndarray

    def __post_init__(self):
        d = self.dims.total_dim
        if np.shape(self.matrix) != (d, d):
            raise DimensionMismatch(f"density matrix shape {np.shape(self.matrix)} does not match total_dim {d}")
        object.__setattr__(self, "matrix", _frozen(self.matrix))

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue of the Hermitian part; O(d^3), diagnostics only."""
        herm = (self.matrix + self.matrix.conj().T) / 2.0
        return float(np.linalg.eigvalsh(herm)[0])

    def validate(self, check_positivity: bool = False) -> None:
        if self.hermiticity_residual() > HERMITIAN_TOL:
            raise ValueError(f"density matrix not Hermitian (residual {self.hermiticity_residual():.3e})")
        if abs(self.trace() - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace {self.trace():.12f} != 1")
        if check_positivity and self.min_eigenvalue() < -POSITIVITY_TOL:
            raise ValueError(f"density matrix not positive (min eigenvalue {self.min_eigenvalue():.3e})")


def basis_state(dims: HilbertDims, n: int, excited: bool = False) -> DensityMatrix:
    """Projector |n, +/-><n, +/-|."""
    if not 0 <= n <= dims.fock_cutoff:
        raise TruncationError(f"Fock level {n} outside cutoff {dims.fock_cutoff}")
    rho = np.zeros((dims.total_dim, dims.total_dim), dtype=complex)
    k = dims.index(n, excited)
    rho[k, k] = 1.0
    return DensityMatrix(dims, rho)


def coherent_amplitudes(alpha: complex, levels: int) -> np.ndarray:
    """Amplitudes <k|alpha> for k < levels, evaluated in log space."""
    k = np.arange(levels)
    if alpha == 0:
        return (k == 0).astype(complex)
    log_mag = -abs(alpha) ** 2 / 2.0 + k * math.log(abs(alpha)) - 0.5 * gammaln(k + 1.0)
    return np.exp(log_mag) * np.exp(1j * k * np.angle(alpha))


def coherent_tls_ground(alpha: complex, dims: HilbertDims) -> DensityMatrix:
    """Truncated, renormalized coherent state with the TLS in its ground state."""
    mean_n = abs(alpha) ** 2
    tail = float(poisson.sf(dims.fock_cutoff, mean_n)) if mean_n > 0 else 0.0
    if tail > TAIL_WEIGHT_LIMIT:
        raise TruncationError(
            f"coherent tail weight {tail:.3e} above {TAIL_WEIGHT_LIMIT:g} for |alpha|^2={mean_n:g}, "
            f"fock_cutoff={dims.fock_cutoff}"
        )
    amps = coherent_amplitudes(alpha, dims.fock_levels)
    amps /= np.linalg.norm(amps)
    psi = np.zeros(dims.total_dim, dtype=complex)
    psi[0::2] = amps
    return DensityMatrix(dims, np.outer(psi, psi.conj()))


def expectation(rho: DensityMatrix, op: np.ndarray) -> complex:
    """trace(rho @ op) in O(d^2)."""
    if np.shape(op) != rho.matrix.shape:
        raise DimensionMismatch(f"operator shape {np.shape(op)} does not match state shape {rho.matrix.shape}")
    return complex(np.einsum("ij,ji->", rho.matrix, op))
