# -------------------------------------------------
# app.py
# -------------------------------------------------
# TLS Loss Lab - Command Line
#   python app.py evolve --fig fig1 --engine all
#   python app.py sweep --fig fig5
#   python app.py regime -g 10 -T1 1 -T2 0.2 -n0 0.005
# -------------------------------------------------

import argparse
import logging
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

# --- Local imports ---
from models.bloch_model import bloch_energy_residual, evolve_bloch, evolve_manifold, manifold_energy_residual
from models.errors import SimulationError
from models.lindblad_model import MasterEquationEngine, ModelParams, energy_flow_residual, energy_increase
from models.regimes import (
    STRONG,
    analytic_records,
    classify_regime,
    compute_coupling,
    field_per_photon,
    gamma_effective,
    knee_strong,
    knee_weak,
    loss_saturated,
    loss_strong_unsaturated,
    loss_weak_unsaturated,
    mixing_angle,
)
from scripts.loss_sweep import (
    InvariantCheck,
    check_curve_invariants,
    classical_curve,
    compare_saturated_tails,
    find_ns_min,
    locate_knee,
    sweep_loss,
)
from scripts.run_config import RunConfig, validate_config
from scripts.write_outputs import build_metadata, records_frame, write_sidecar, write_table

logger = logging.getLogger(__name__)

TRACE_LIMIT = 1e-9
HERMITIAN_LIMIT = 1e-9
EIGENVALUE_FLOOR = -1e-8
ENERGY_FLOW_LIMIT = 1e-3
AGREEMENT_LIMIT = 0.1

FLAG_NAMES = (
    "mode", "fig", "engine", "g", "T1", "T2", "Tphi", "n0", "omega", "fock_cutoff", "t_end", "samples",
    "rel_tol", "abs_tol", "method", "estimator", "n0_grid", "ratio_grid", "g_T1", "jobs", "master_n0_max", "out", "format",
    "p", "theta", "Delta", "Delta0", "epsilon", "V", "hbar",
)


@dataclass
class RunResult:
    exit_code: int = 0
    outputs: list = field(default_factory=list)
    table: Optional[pd.DataFrame] = None
    summary: str = ""
    checks: list = field(default_factory=list)


# -------------------------------------------------
# Evolve
# -------------------------------------------------
def engines_for(config: RunConfig, params: ModelParams) -> list:
    if config.engine != "all":
        return [config.engine]
    report = classify_regime(params)
    companion = "manifold" if report.coupling == STRONG and params.n0 <= report.n_crit else "bloch"
    return ["master", companion, "analytic"]


def evolve_engine(engine: str, params: ModelParams, config: RunConfig):
    """Records for one engine plus the invariant checks that apply to it."""
    cfg = config.integrator
    t_grid = cfg.time_grid()
    # the sampled balance (Simpson derivative) is only resolved past the TLS transient
    settle = 3.0 * max(params.T1, params.T2)
    checks = []
    if engine == "master":
        runner = MasterEquationEngine(params, cfg)
        records = runner.run()
        diag = runner.diagnostics
        trace = max(d.trace_error for d in diag)
        herm = max(d.hermiticity for d in diag)
        min_eig = min(d.min_eigenvalue for d in diag)
        sampled = energy_flow_residual(records, params.T1, settle)
        rise = energy_increase(records)
        checks += [
            InvariantCheck("master:trace", trace, trace < TRACE_LIMIT),
            InvariantCheck("master:hermiticity", herm, herm < HERMITIAN_LIMIT),
            InvariantCheck("master:min_eigenvalue", min_eig, min_eig > EIGENVALUE_FLOOR),
            InvariantCheck("master:energy_flow", runner.energy_flow, runner.energy_flow < ENERGY_FLOW_LIMIT),
            InvariantCheck(
                "master:energy_balance_sampled", sampled, sampled < ENERGY_FLOW_LIMIT, t_min=settle
            ),
            InvariantCheck("master:energy_monotone", rise, rise <= 1e-7 * max(1.0, params.n0)),
        ]
    elif engine == "bloch":
        records = evolve_bloch(params, cfg)
        flow = bloch_energy_residual(records, params)
        sampled = energy_flow_residual(records, params.T1, settle)
        checks += [
            InvariantCheck("bloch:energy_flow", flow, flow < 1e-9 * max(1.0, params.n0)),
            InvariantCheck(
                "bloch:energy_balance_sampled", sampled, sampled < ENERGY_FLOW_LIMIT, t_min=settle
            ),
        ]
    elif engine == "manifold":
        records = evolve_manifold(params, t_grid)
        residual = manifold_energy_residual(records, params)
        checks.append(InvariantCheck("manifold:energy_identity", residual, residual < 1e-9 * max(1.0, params.n0)))
    else:
        records = analytic_records(params, t_grid)
    bad = sum(1 for r in records if r.violations())
    checks.append(InvariantCheck(f"{engine}:record_invariants", float(bad), bad == 0))
    return records, checks


def agreement_checks(frames: dict, params: ModelParams) -> list:
    """Deviation of <n> from the master run after the transient.

    Weak coupling is compared pointwise; vacuum-Rabi oscillations at strong
    coupling pass through zero, so those runs use the relative L2 error.
    """
    if "master" not in frames:
        return []
    ref = frames["master"]
    keep = ref["t"].to_numpy() >= 3.0 * params.T2
    scale = ref["n"].to_numpy()[keep]
    oscillating = classify_regime(params).coupling == STRONG
    checks = []
    for engine, df in frames.items():
        if engine == "master" or not keep.any():
            continue
        diff = df["n"].to_numpy()[keep] - scale
        if oscillating:
            worst = float(np.linalg.norm(diff) / max(np.linalg.norm(scale), 1e-300))
            checks.append(InvariantCheck(f"{engine}:l2_vs_master", worst, worst < 0.05))
        else:
            worst = float(np.max(np.abs(diff) / np.maximum(np.abs(scale), 1e-300)))
            checks.append(InvariantCheck(f"{engine}:agrees_with_master", worst, worst <= AGREEMENT_LIMIT))
    return checks


def run_evolve(config: RunConfig) -> RunResult:
    params = config.model
    frames, checks = {}, []
    for engine in engines_for(config, params):
        records, engine_checks = evolve_engine(engine, params, config)
        frames[engine] = records_frame(records, engine)
        checks += engine_checks
    checks += agreement_checks(frames, params)
    table = pd.concat(list(frames.values()), ignore_index=True)
    out = write_table(table, config.out, config.format)
    meta = write_sidecar(config.out, build_metadata(config, checks))
    return RunResult(0, [out, meta], table, f"{len(frames)} engine(s), {len(table)} rows", checks)


# -------------------------------------------------
# Sweeps
# -------------------------------------------------
def run_sweep(config: RunConfig) -> RunResult:
    frames, checks, knees, curves = [], [], {}, {}
    for label, template in config.models:
        curve = sweep_loss(template, config.n0_grid, config.sweep, label=label)
        curves[label] = curve
        frames.append(curve.to_frame())
        frames.append(classical_curve(template, config.n0_grid, curve.normalization, label=f"classical_{label}"))
        checks += [InvariantCheck(f"{label}:{c.name}", c.residual, c.passed) for c in check_curve_invariants(curve)]
        try:
            knee = locate_knee(curve)
            knees[label] = {"knee": knee.knee, "plateau": knee.plateau}
        except SimulationError as e:
            logger.warning("⚠️ no knee for curve %s: %s", label, e)
    if "weak" in curves and "strong" in curves:
        checks.append(compare_saturated_tails(curves["weak"], curves["strong"]))
    table = pd.concat(frames, ignore_index=True)
    out = write_table(table, config.out, config.format)
    meta = write_sidecar(config.out, build_metadata(config, checks, {"knees": knees}))
    return RunResult(0, [out, meta], table, f"{len(curves)} curve(s), knees {knees}", checks)


def run_ns_min(config: RunConfig) -> RunResult:
    result = find_ns_min(config.ns_T1, config.ratio_grid, config.sweep, config.g_T1, config.n0_grid)
    checks = [InvariantCheck("ns_min_bound", result.ns_min, result.ns_min >= 0.45)]
    out = write_table(result.table, config.out, config.format)
    extra = {"ns_min": result.ns_min}
    meta = write_sidecar(config.out, build_metadata(config, checks, extra))
    return RunResult(0, [out, meta], result.table, f"n_s,min = {result.ns_min:.4f}", checks)


# -------------------------------------------------
# Reports
# -------------------------------------------------
def run_regime(config: RunConfig) -> RunResult:
    p = config.model
    report = classify_regime(p)
    lines = [
        report.summary(),
        f"Gamma = {gamma_effective(p.g, p.T1, p.T2):.6g}",
        f"n_w = {knee_weak(p.g, p.T1, p.T2).n_w:.6g}, n_s = {knee_strong(p.T1, p.T2):.6g}",
    ]
    if report.coupling == STRONG:
        lines.append(f"1/Q strong unsaturated = {loss_strong_unsaturated(p.T1, p.T2, p.omega):.6g}")
    else:
        lines.append(f"1/Q weak unsaturated = {loss_weak_unsaturated(p.g, p.T1, p.T2, p.omega):.6g}")
    if p.n0 > 0:
        lines.append(f"1/Q saturated = {float(loss_saturated(p.n0, p.T1, p.omega)):.6g}")
    return RunResult(0, [], None, "\n".join(lines))


def run_params(config: RunConfig) -> RunResult:
    phys = config.physical
    g = compute_coupling(phys)
    lines = [
        f"g = {g:.10g}",
        f"field per photon = {field_per_photon(phys):.10g}",
        f"E = {phys.energy:.10g}, omega = {phys.omega:.10g}, mixing angle = {mixing_angle(phys):.10g}",
    ]
    return RunResult(0, [], None, "\n".join(lines))


MODE_RUNNERS = {
    "evolve": run_evolve,
    "sweep": run_sweep,
    "ns-min": run_ns_min,
    "regime": run_regime,
    "params": run_params,
}


def run(config: RunConfig) -> RunResult:
    logger.info("Running mode=%s engine=%s fig=%s", config.mode, config.engine, config.fig)
    result = MODE_RUNNERS[config.mode](config)
    failed = [c.name for c in result.checks if not c.passed]
    if failed:
        logger.warning("⚠️ invariant checks not met: %s", ", ".join(failed))
    logger.info("✅ %s finished: %s", config.mode, result.summary.splitlines()[0] if result.summary else "")
    return result


# -------------------------------------------------
# Entry point
# -------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tls-loss-lab", description="Resonator loss from a single TLS.")
    parser.add_argument("mode", nargs="?", choices=["evolve", "sweep", "regime", "params", "ns-min"])
    parser.add_argument("--config", help="flat KEY=value configuration file")
    parser.add_argument("--fig", help="figure recipe fig1..fig8")
    parser.add_argument("--engine", help="master | bloch | manifold | analytic | all")
    parser.add_argument("-g", "--g", dest="g")
    parser.add_argument("-T1", "--T1", dest="T1")
    parser.add_argument("-T2", "--T2", dest="T2")
    parser.add_argument("--Tphi", dest="Tphi", help="pure dephasing time; inf for none")
    parser.add_argument("-n0", "--n0", dest="n0")
    parser.add_argument("--omega")
    parser.add_argument("--fock-cutoff", dest="fock_cutoff")
    parser.add_argument("--t-end", dest="t_end")
    parser.add_argument("--samples")
    parser.add_argument("--rel-tol", dest="rel_tol")
    parser.add_argument("--abs-tol", dest="abs_tol")
    parser.add_argument("--method", help="adaptive | rk4")
    parser.add_argument("--estimator", help="auto | exponential | linear | modal")
    parser.add_argument("--n0-grid", dest="n0_grid", help="comma separated")
    parser.add_argument("--ratio-grid", dest="ratio_grid", help="comma separated T1/T2 values")
    parser.add_argument("--g-T1", dest="g_T1")
    parser.add_argument("--jobs")
    parser.add_argument("--master-n0-max", dest="master_n0_max", help="sweep points above it use the Bloch engine; inf to disable")
    parser.add_argument("--out")
    parser.add_argument("--format", help="csv | json")
    for name in ("p", "theta", "Delta", "Delta0", "epsilon", "V", "hbar"):
        parser.add_argument(f"--{name}", dest=name)
    parser.add_argument("--log-level", default="INFO")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    text = ""
    if args.config:
        with open(args.config) as f:
            text = f.read()
    overrides = {name: getattr(args, name) for name in FLAG_NAMES if getattr(args, name, None) is not None}
    return validate_config(text, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        result = run(load_config(args))
    except SimulationError as e:
        logger.error("❌ %s: %s", type(e).__name__, e)
        return e.exit_code
    except OSError as e:
        logger.error("❌ %s", e)
        return 1
    if result.summary:
        print(result.summary)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
