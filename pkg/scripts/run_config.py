# -------------------------------------------------
# scripts/run_config.py
# -------------------------------------------------
# TLS Loss Lab - Run Configuration
# Flat KEY=value documents (parsed with python-dotenv), figure
# recipes, and validation into a typed RunConfig.
# Precedence: recipe defaults < config file < command-line flags.
# -------------------------------------------------

import logging
import math
from dataclasses import dataclass, field
from io import StringIO
from typing import Optional

from dotenv import dotenv_values

from models.errors import ConfigError
from models.integrators import ADAPTIVE, IntegratorConfig
from models.lindblad_model import ModelParams
from models.quantum_core import HilbertDims
from models.regimes import PhysicalParams
from scripts.loss_sweep import (
    DEFAULT_N0_GRID,
    DEFAULT_NS_N0_GRID,
    DEFAULT_RATIO_GRID,
    MASTER_N0_MAX,
    SWEEP_ENGINES,
    LossEstimatorConfig,
    SweepConfig,
)

logger = logging.getLogger(__name__)

MODES = ("evolve", "sweep", "regime", "params", "ns-min")
ENGINES = ("master", "bloch", "manifold", "analytic", "all")
FORMATS = ("csv", "json")
T2_CONSISTENCY_TOL = 1e-6
OUTPUT_DIR = "data/runs"


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _text(text: str) -> str:
    return text.strip()


SCHEMA = {
    "mode": _text,
    "engine": _text,
    "fig": _text,
    "g": _float,
    "T1": _float,
    "T2": _float,
    "Tphi": _float,
    "n0": _float,
    "omega": _float,
    "fock_cutoff": _int,
    "t_end": _float,
    "samples": _int,
    "rel_tol": _float,
    "abs_tol": _float,
    "method": _text,
    "rk4_substeps": _int,
    "estimator": _text,
    "window_start": _float,
    "window_end": _float,
    "transient_skip": _float,
    "n0_grid": _floats,
    "ratio_grid": _floats,
    "g_T1": _float,
    "jobs": _int,
    "master_n0_max": _float,
    "out": _text,
    "format": _text,
    "p": _float,
    "theta": _float,
    "Delta": _float,
    "Delta0": _float,
    "epsilon": _float,
    "V": _float,
    "hbar": _float,
}


# -------------------------------------------------
# Figure recipes
# -------------------------------------------------
@dataclass(frozen=True)
class FigureRecipe:
    name: str
    mode: str
    engine: str
    values: dict = field(default_factory=dict)
    description: str = ""


_WEAK = {"g": 0.2, "T1": 1.0, "T2": 0.2}
_STRONG = {"g": 10.0, "T1": 1.0, "T2": 0.2}

FIGURES = {
    "fig1": FigureRecipe("fig1", "evolve", "all", {**_WEAK, "n0": 3.0, "t_end": 250.0, "samples": 501},
                         "weak coupling, unsaturated: photon number"),
    "fig2": FigureRecipe("fig2", "evolve", "all", {**_WEAK, "n0": 3.0, "t_end": 250.0, "samples": 501},
                         "weak coupling, unsaturated: TLS population"),
    "fig3": FigureRecipe("fig3", "evolve", "bloch", {**_WEAK, "n0": 500.0, "t_end": 1100.0, "samples": 1101},
                         "weak coupling, saturated: photon number"),
    "fig4": FigureRecipe("fig4", "evolve", "bloch", {**_WEAK, "n0": 500.0, "t_end": 1100.0, "samples": 1101},
                         "weak coupling, saturated: TLS population"),
    "fig5": FigureRecipe("fig5", "sweep", "master", dict(_STRONG), "loss tangent against n0, weak/strong/classical"),
    "fig6": FigureRecipe("fig6", "sweep", "master", dict(_STRONG), "loss tangent against R0, weak/strong/classical"),
    "fig7": FigureRecipe("fig7", "evolve", "all", {**_STRONG, "n0": 0.005, "t_end": 4.0, "samples": 401},
                         "strong coupling, unsaturated: photon number"),
    "fig8": FigureRecipe("fig8", "evolve", "all", {**_STRONG, "n0": 0.005, "t_end": 4.0, "samples": 401},
                         "strong coupling, unsaturated: TLS population and correlation"),
}
SWEEP_FIGURES = ("fig5", "fig6")
WEAK_CURVE_G = _WEAK["g"]


# -------------------------------------------------
# Parsing
# -------------------------------------------------
def parse_flat(text: str) -> dict:
    """KEY=value text -> typed values; unknown keys and unparsable values raise ConfigError."""
    raw = dotenv_values(stream=StringIO(text))
    return parse_values(raw)


def parse_values(raw: dict) -> dict:
    problems, values = {}, {}
    for key, text in raw.items():
        if key not in SCHEMA:
            problems[key] = "unknown key"
            continue
        if text is None or str(text).strip() == "":
            problems[key] = "missing value"
            continue
        try:
            values[key] = SCHEMA[key](str(text))
        except ValueError as e:
            problems[key] = f"cannot parse {text!r}: {e}"
    if problems:
        raise ConfigError("invalid configuration document", problems)
    return values


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(float(x)) for x in value)
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def flat_to_text(flat: dict) -> str:
    return "".join(f"{key}={value}\n" for key, value in flat.items())


# -------------------------------------------------
# RunConfig
# -------------------------------------------------
@dataclass(frozen=True)
class RunConfig:
    settings: tuple
    mode: str
    engine: str
    fig: Optional[str]
    models: tuple = ()
    physical: Optional[PhysicalParams] = None
    integrator: Optional[IntegratorConfig] = None
    estimator: LossEstimatorConfig = field(default_factory=LossEstimatorConfig)
    sweep: Optional[SweepConfig] = None
    n0_grid: tuple = DEFAULT_N0_GRID
    ratio_grid: tuple = DEFAULT_RATIO_GRID
    g_T1: float = 50.0
    ns_T1: float = 1.0
    out: str = ""
    format: str = "csv"

    @property
    def model(self) -> Optional[ModelParams]:
        return self.models[0][1] if self.models else None

    def to_flat(self) -> dict:
        """Canonical flat document; validate_config(flat_to_text(...)) rebuilds an equal RunConfig."""
        return {key: _format(value) for key, value in self.settings}


def _model_from(values: dict, g: Optional[float] = None) -> ModelParams:
    problems = {}
    g = values.get("g") if g is None else g
    T1 = values.get("T1")
    for key, value in (("g", g), ("T1", T1)):
        if value is None:
            problems[key] = "required"
    T2, tphi = values.get("T2"), values.get("Tphi")
    if T2 is None and tphi is None:
        problems["T2"] = "give T2 or Tphi"
    if problems:
        raise ConfigError("incomplete model parameters", problems)

    if tphi is not None:
        if not tphi > 0:
            raise ConfigError("invalid dephasing time", {"Tphi": f"must be > 0 or inf, got {tphi}"})
        tphi = None if math.isinf(tphi) else tphi
        if T2 is not None:
            implied = 1.0 / (0.5 / T1 + (0.0 if tphi is None else 1.0 / tphi))
            if abs(T2 - implied) > T2_CONSISTENCY_TOL * implied:
                raise ConfigError(
                    "inconsistent relaxation times",
                    {"T2": f"{T2} but T1 and Tphi imply {implied:.12g}"},
                )
        kwargs = {"Tphi": tphi}
    else:
        if T2 > 2.0 * T1:
            raise ConfigError("T2 exceeds 2*T1", {"T2": f"{T2} > 2*T1 = {2.0 * T1}"})
        kwargs = {"T2": T2}

    n0 = values.get("n0", 0.0)
    dims = HilbertDims(values["fock_cutoff"]) if "fock_cutoff" in values else None
    common = {"omega": values.get("omega", 1.0), "n0": n0, "dims": dims}
    if "T2" in kwargs:
        return ModelParams.from_T2(g, T1, kwargs["T2"], **common)
    return ModelParams(g=g, T1=T1, Tphi=kwargs["Tphi"], **common)


def _physical_from(values: dict) -> PhysicalParams:
    keys = ("p", "theta", "Delta", "Delta0", "epsilon", "V")
    missing = {k: "required in params mode" for k in keys if k not in values}
    if missing:
        raise ConfigError("incomplete physical parameters", missing)
    return PhysicalParams(
        **{k: values[k] for k in keys},
        omega=values.get("omega"),
        hbar=values.get("hbar", 1.0),
    )


def build_run_config(values: dict) -> RunConfig:
    """Typed values (recipe defaults already merged) -> validated RunConfig."""
    fig = values.get("fig")
    recipe = None
    if fig is not None:
        if fig not in FIGURES:
            raise ConfigError("unknown figure", {"fig": f"must be one of {tuple(FIGURES)}, got {fig!r}"})
        recipe = FIGURES[fig]
    merged = {**(recipe.values if recipe else {}), **values}

    mode = merged.get("mode", recipe.mode if recipe else "evolve")
    if mode not in MODES:
        raise ConfigError("invalid mode", {"mode": f"must be one of {MODES}, got {mode!r}"})
    engine = merged.get("engine", recipe.engine if recipe else "master")
    if engine not in ENGINES:
        raise ConfigError("invalid engine", {"engine": f"must be one of {ENGINES}, got {engine!r}"})
    if engine == "all" and mode != "evolve":
        raise ConfigError("invalid engine", {"engine": "'all' is only valid with mode=evolve"})
    if mode in ("sweep", "ns-min") and engine not in SWEEP_ENGINES:
        raise ConfigError("invalid engine", {"engine": f"sweeps run on {SWEEP_ENGINES}, got {engine!r}"})
    fmt = merged.get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError("invalid format", {"format": f"must be one of {FORMATS}, got {fmt!r}"})

    window = (merged.get("window_start", 0.95), merged.get("window_end", 0.60))
    estimator = LossEstimatorConfig(merged.get("estimator", "auto"), window, merged.get("transient_skip", 3.0))

    models, physical, integrator, sweep = (), None, None, None
    if mode == "params":
        physical = _physical_from(merged)
    elif mode in ("evolve", "regime"):
        if "n0" not in merged:
            raise ConfigError("incomplete model parameters", {"n0": "required"})
        models = ((mode, _model_from(merged)),)
    elif mode == "sweep":
        strong = _model_from(merged)
        if fig in SWEEP_FIGURES:
            models = (("weak", _model_from(merged, g=WEAK_CURVE_G)), ("strong", strong))
        else:
            models = (("sweep", strong),)

    if mode == "evolve":
        if "t_end" not in merged:
            raise ConfigError("incomplete integrator settings", {"t_end": "required for mode=evolve"})
        integrator = IntegratorConfig(
            t_end=merged["t_end"],
            sample_count=merged.get("samples", 201),
            rel_tol=merged.get("rel_tol", 1e-8),
            abs_tol=merged.get("abs_tol", 1e-10),
            method=merged.get("method", ADAPTIVE),
            rk4_substeps=merged.get("rk4_substeps", 50),
        )
    if mode in ("sweep", "ns-min"):
        sweep = SweepConfig(
            engine=engine,
            estimator=estimator,
            samples=merged.get("samples", 400),
            rel_tol=merged.get("rel_tol", 1e-8),
            abs_tol=merged.get("abs_tol", 1e-10),
            method=merged.get("method", ADAPTIVE),
            t_end=merged.get("t_end"),
            jobs=merged.get("jobs", 1),
            master_n0_max=merged.get("master_n0_max", MASTER_N0_MAX),
        )

    default_grid = DEFAULT_NS_N0_GRID if mode == "ns-min" else DEFAULT_N0_GRID
    n0_grid = merged.get("n0_grid", default_grid)
    ratio_grid = merged.get("ratio_grid", DEFAULT_RATIO_GRID)
    if mode in ("sweep", "ns-min") and (not n0_grid or any(b <= a for a, b in zip(n0_grid, n0_grid[1:])) or min(n0_grid) <= 0):
        raise ConfigError("invalid sweep grid", {"n0_grid": "must be positive and strictly increasing"})

    out = merged.get("out", f"{OUTPUT_DIR}/{fig or mode}.{fmt}")
    return RunConfig(
        settings=tuple(sorted(values.items())),
        mode=mode,
        engine=engine,
        fig=fig,
        models=models,
        physical=physical,
        integrator=integrator,
        estimator=estimator,
        sweep=sweep,
        n0_grid=tuple(float(x) for x in n0_grid),
        ratio_grid=tuple(float(x) for x in ratio_grid),
        g_T1=merged.get("g_T1", 50.0),
        ns_T1=merged.get("T1", 1.0),
        out=out,
        format=fmt,
    )


def validate_config(raw: str, overrides: Optional[dict] = None) -> RunConfig:
    """Parse a KEY=value document, apply flag overrides, and validate."""
    values = parse_flat(raw)
    if overrides:
        values.update(parse_values({k: v for k, v in overrides.items() if v is not None}))
    config = build_run_config(values)
    logger.debug("validated configuration: %s", config.to_flat())
    return config
