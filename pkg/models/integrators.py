# -------------------------------------------------
# models/integrators.py
# -------------------------------------------------
# TLS Loss Lab - Time Steppers
# Adaptive Dormand-Prince 5(4) through scipy's RK45 stepper and a
# fixed-step RK4, on arbitrary (complex) numpy arrays. Each sample
# interval is its own solve with t_bound on the sample time, so
# states land exactly on the grid; no dense-output interpolation.
# -------------------------------------------------

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import RK45

from models.errors import ConfigError, IntegratorError

logger = logging.getLogger(__name__)

ADAPTIVE = "adaptive"
RK4 = "rk4"

Rhs = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class IntegratorConfig:
    t_end: float
    sample_count: int = 201
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    method: str = ADAPTIVE
    rk4_substeps: int = 50
    max_steps: int = 5_000_000

    def __post_init__(self):
        problems = {}
        if not 0 < self.rel_tol <= 1e-3:
            problems["rel_tol"] = f"must lie in (0, 1e-3], got {self.rel_tol}"
        if not 0 < self.abs_tol <= 1e-3:
            problems["abs_tol"] = f"must lie in (0, 1e-3], got {self.abs_tol}"
        if not self.t_end > 0:
            problems["t_end"] = f"must be > 0, got {self.t_end}"
        if self.sample_count < 2:
            problems["samples"] = f"must be >= 2, got {self.sample_count}"
        if self.method not in (ADAPTIVE, RK4):
            problems["method"] = f"must be '{ADAPTIVE}' or '{RK4}', got {self.method!r}"
        if self.rk4_substeps < 1:
            problems["rk4_substeps"] = f"must be >= 1, got {self.rk4_substeps}"
        if problems:
            raise ConfigError("invalid integrator configuration", problems)

    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.sample_count)


def rk4_step(f: Rhs, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# -------------------------------------------------
# Grid integration
# -------------------------------------------------
def integrate_on_grid(
    f: Rhs,
    y0: np.ndarray,
    t_grid,
    cfg: IntegratorConfig,
    post_step: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    on_sample: Optional[Callable[[float, np.ndarray], None]] = None,
) -> list:
    """Integrate y' = f(t, y), returning y at every grid time.

    post_step projects each sampled state (after every RK4 substep on the
    fixed-step path) before the next interval starts from it; on_sample
    sees each sampled state and may raise to abort.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 1 or np.any(np.diff(t_grid) <= 0):
        raise ConfigError("invalid time grid", {"t_grid": "must be strictly increasing"})

    y = np.array(y0, copy=True)
    samples = [y.copy()]
    if on_sample:
        on_sample(float(t_grid[0]), y)

    if cfg.method == RK4:
        t = float(t_grid[0])
        for t_next in t_grid[1:]:
            h = (t_next - t) / cfg.rk4_substeps
            for i in range(cfg.rk4_substeps):
                y = rk4_step(f, t + i * h, y, h)
                if post_step:
                    y = post_step(y)
            t = float(t_next)
            samples.append(y.copy())
            if on_sample:
                on_sample(t, y)
        return samples

    shape = y.shape

    def flat_rhs(t, v):
        return np.asarray(f(t, v.reshape(shape))).ravel()

    steps, h = 0, None
    for t_start, t_next in zip(t_grid[:-1], t_grid[1:]):
        span = float(t_next - t_start)
        solver = RK45(
            flat_rhs,
            float(t_start),
            y.ravel(),
            float(t_next),
            rtol=cfg.rel_tol,
            atol=cfg.abs_tol,
            first_step=None if h is None else min(h, span),
        )
        proposed = solver.h_abs
        while solver.status == "running":
            proposed = solver.h_abs
            message = solver.step()
            steps += 1
            if solver.status == "failed":
                raise IntegratorError(f"{message} at t={solver.t:.6g}")
            if not np.all(np.isfinite(solver.y)):
                raise IntegratorError(f"non-finite state at t={solver.t:.6g}")
            if steps > cfg.max_steps:
                raise IntegratorError(f"step budget {cfg.max_steps} exhausted at t={solver.t:.6g}")
        # the last step is clipped onto the sample time; carry the unclipped stride
        h = max(proposed, solver.h_abs)
        y = solver.y.reshape(shape)
        if post_step:
            y = post_step(y)
        samples.append(y.copy())
        if on_sample:
            on_sample(float(t_next), y)
    logger.debug("RK45: %d steps over %d samples", steps, len(t_grid))
    return samples
