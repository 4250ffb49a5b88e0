# -------------------------------------------------
# models/bloch_model.py
# -------------------------------------------------
# TLS Loss Lab - Maxwell-Bloch and Restricted-Manifold Engines
# Decorrelated mean-field equations for <a>, <s->, <s++> and the
# exact linear dynamics of the {|0,->, |1,->, |0,+>} manifold.
# -------------------------------------------------

import logging
import math
from dataclasses import dataclass

import numpy as np

from models.errors import DegenerateEigenproblem, IntegratorError
from models.integrators import IntegratorConfig, integrate_on_grid
from models.lindblad_model import ModelParams, ObservableRecord

logger = logging.getLogger(__name__)

BLOCH_TOL = 1e-9
EIGENBASIS_COND_LIMIT = 1e8
NEGATIVE_TOL = 1e-9


# -------------------------------------------------
# Decorrelated Maxwell-Bloch equations
# -------------------------------------------------
@dataclass(frozen=True)
class BlochState:
    """Mean-field variables; also used for their time derivatives."""

    a_expect: complex
    sigma_minus: complex
    sigma_pp: float

    def validate(self) -> None:
        if not -BLOCH_TOL <= self.sigma_pp <= 1.0 + BLOCH_TOL:
            raise IntegratorError(f"Bloch population {self.sigma_pp:.3e} left [0, 1]")
        if abs(self.sigma_minus) > 0.5 + BLOCH_TOL:
            raise IntegratorError(f"Bloch coherence |s-|={abs(self.sigma_minus):.6f} exceeds 1/2")

    def to_array(self) -> np.ndarray:
        return np.array([self.a_expect, self.sigma_minus, self.sigma_pp], dtype=complex)

    @classmethod
    def from_array(cls, y: np.ndarray) -> "BlochState":
        return cls(complex(y[0]), complex(y[1]), float(np.real(y[2])))


def bloch_rhs(state: BlochState, params: ModelParams) -> BlochState:
    g = params.g
    a, sm, pp = state.a_expect, state.sigma_minus, state.sigma_pp
    da = -1j * g * sm
    dsm = 2j * g * a * pp - 1j * g * a - sm / params.T2
    # -ig(<a><s+> - <a>*<s->) is real: 2g Im(<a> <s->*)
    dpp = 2.0 * g * (a * sm.conjugate()).imag - pp / params.T1
    return BlochState(da, dsm, dpp)


def _bloch_array_rhs(params: ModelParams):
    g, inv_t1, inv_t2 = params.g, 1.0 / params.T1, 1.0 / params.T2

    def f(t, y):
        a, sm, pp = y[0], y[1], y[2].real
        return np.array(
            [
                -1j * g * sm,
                2j * g * a * pp - 1j * g * a - sm * inv_t2,
                2.0 * g * (a * np.conj(sm)).imag - pp * inv_t1,
            ],
            dtype=complex,
        )

    return f


def evolve_bloch(params: ModelParams, cfg: IntegratorConfig, t_grid=None) -> list:
    """Decorrelated evolution from <a>=sqrt(n0), <s->=0, <s++>=0; n is reported as |<a>|^2."""
    t_grid = cfg.time_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    y0 = BlochState(complex(math.sqrt(params.n0)), 0j, 0.0).to_array()
    records = []

    def on_sample(t, y):
        state = BlochState.from_array(y)
        state.validate()
        records.append(
            ObservableRecord(
                t=float(t),
                n=abs(state.a_expect) ** 2,
                sigma_pp=state.sigma_pp,
                sigma_minus=state.sigma_minus,
                a_expect=state.a_expect,
                corr=None,
                trace=1.0,
                purity=None,
            )
        )

    logger.info("Maxwell-Bloch: n0=%g, g=%g, T1=%g, T2=%g", params.n0, params.g, params.T1, params.T2)
    integrate_on_grid(
        _bloch_array_rhs(params),
        y0,
        t_grid,
        cfg,
        post_step=lambda y: np.array([y[0], y[1], y[2].real], dtype=complex),
        on_sample=on_sample,
    )
    return records


# -------------------------------------------------
# Restricted manifold
# -------------------------------------------------
# Sign convention (the only place it is fixed):
#   dn/dt   = ig(<a^+ s->* - <a^+ s->) = +2g Im<a^+ s->
#   ds++/dt = -2g Im<a^+ s-> - s++/T1
#   dc/dt   = ig(s++ - n) - c/T2,   c = <a^+ s->
# so photons leave the resonator first (Im c < 0 from c(0)=0).
@dataclass(frozen=True)
class ManifoldState:
    n: float
    sigma_pp: float
    corr: complex

    def to_vector(self) -> np.ndarray:
        return np.array([self.n, self.sigma_pp, self.corr.real, self.corr.imag])

    @classmethod
    def from_vector(cls, x) -> "ManifoldState":
        return cls(float(x[0]), float(x[1]), complex(x[2], x[3]))


def manifold_rhs(state: ManifoldState, params: ModelParams) -> ManifoldState:
    g = params.g
    c = state.corr
    dn = 2.0 * g * c.imag
    dpp = -2.0 * g * c.imag - state.sigma_pp / params.T1
    dc = 1j * g * (state.sigma_pp - state.n) - c / params.T2
    return ManifoldState(dn, dpp, dc)


def manifold_matrix(params: ModelParams) -> np.ndarray:
    """Generator M of x' = M x for x = (n, s++, Re c, Im c)."""
    g, r1, r2 = params.g, 1.0 / params.T1, 1.0 / params.T2
    return np.array(
        [
            [0.0, 0.0, 0.0, 2.0 * g],
            [0.0, -r1, 0.0, -2.0 * g],
            [0.0, 0.0, -r2, 0.0],
            [-g, g, 0.0, -r2],
        ]
    )


def _modal_solution(m: np.ndarray, x0: np.ndarray, t_grid: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eig(m)
    cond = np.linalg.cond(v)
    if not np.isfinite(cond) or cond > EIGENBASIS_COND_LIMIT:
        raise DegenerateEigenproblem(f"eigenbasis condition number {cond:.3e}")
    coeffs = np.linalg.solve(v, x0)
    return np.real(np.einsum("ij,tj->ti", v, np.exp(np.outer(t_grid, w)) * coeffs))


def evolve_manifold(params: ModelParams, t_grid) -> list:
    """Exact restricted-manifold evolution from (n0, 0, 0)."""
    t_grid = np.asarray(t_grid, dtype=float)
    m = manifold_matrix(params)
    x0 = ManifoldState(params.n0, 0.0, 0j).to_vector()
    # Re c decays on its own at 1/T2; its eigenvalue can coincide with the block's
    block = [0, 1, 3]
    sub = m[np.ix_(block, block)]
    xs = np.zeros((len(t_grid), 4))
    xs[:, 2] = x0[2] * np.exp(-t_grid / params.T2)
    try:
        xs[:, block] = _modal_solution(sub, x0[block], t_grid)
    except DegenerateEigenproblem as e:
        logger.warning("⚠️ %s; falling back to ODE integration", e)
        cfg = IntegratorConfig(t_end=float(t_grid[-1]) or 1.0, rel_tol=1e-12, abs_tol=1e-14)
        xs[:, block] = np.array(integrate_on_grid(lambda t, x: sub @ x, x0[block], t_grid, cfg))

    records = []
    for t, x in zip(t_grid, xs):
        state = ManifoldState.from_vector(x)
        if state.n < -NEGATIVE_TOL or state.sigma_pp < -NEGATIVE_TOL:
            logger.warning("⚠️ manifold left its regime at t=%.4g (n=%.3e, s++=%.3e)", t, state.n, state.sigma_pp)
        records.append(
            ObservableRecord(
                t=float(t), n=state.n, sigma_pp=state.sigma_pp,
                sigma_minus=None, a_expect=None, corr=state.corr, trace=1.0, purity=None,
            )
        )
    return records


def manifold_energy_residual(records: list, params: ModelParams) -> float:
    """Max |d(n + s++)/dt + s++/T1| along a manifold trajectory, from the exact derivative."""
    worst = 0.0
    for r in records:
        d = manifold_rhs(ManifoldState(r.n, r.sigma_pp, r.corr), params)
        worst = max(worst, abs(d.n + d.sigma_pp + r.sigma_pp / params.T1))
    return worst


def bloch_energy_residual(records: list, params: ModelParams) -> float:
    """Max |d(|<a>|^2 + s++)/dt + s++/T1| along a Bloch trajectory, from the decorrelated right-hand side."""
    worst = 0.0
    for r in records:
        state = BlochState(r.a_expect, r.sigma_minus, r.sigma_pp)
        d = bloch_rhs(state, params)
        photon_rate = 2.0 * (state.a_expect.conjugate() * d.a_expect).real
        worst = max(worst, abs(photon_rate + d.sigma_pp + r.sigma_pp / params.T1))
    return worst
