# -------------------------------------------------
# scripts/write_outputs.py
# -------------------------------------------------
# TLS Loss Lab - Output Writers
# Time-series and loss-curve tables (CSV or JSON) plus the
# <out>.meta.json sidecar that records every run parameter.
# -------------------------------------------------

import json
import logging
import math
import os
from dataclasses import asdict

import numpy as np
import pandas as pd

from models.lindblad_model import ModelParams
from scripts.run_config import RunConfig, flat_to_text, validate_config

logger = logging.getLogger(__name__)

TIME_SERIES_COLUMNS = [
    "t", "n", "sigma_pp", "sigma_minus_re", "sigma_minus_im", "corr_re", "corr_im", "trace", "purity", "engine",
]
CSV_FLOAT_FORMAT = "%.17g"


def _parts(value):
    if value is None:
        return np.nan, np.nan
    return float(np.real(value)), float(np.imag(value))


def records_frame(records: list, engine: str) -> pd.DataFrame:
    """ObservableRecords -> one row per sample; absent observables become NaN."""
    rows = []
    for r in records:
        sm_re, sm_im = _parts(r.sigma_minus)
        c_re, c_im = _parts(r.corr)
        rows.append(
            {
                "t": r.t,
                "n": r.n,
                "sigma_pp": r.sigma_pp,
                "sigma_minus_re": sm_re,
                "sigma_minus_im": sm_im,
                "corr_re": c_re,
                "corr_im": c_im,
                "trace": r.trace,
                "purity": np.nan if r.purity is None else r.purity,
                "engine": engine,
            }
        )
    return pd.DataFrame(rows, columns=TIME_SERIES_COLUMNS)


def write_table(df: pd.DataFrame, path: str, fmt: str = "csv") -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    if fmt == "json":
        df.to_json(path, orient="records", indent=2, double_precision=15)
    else:
        df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.info("✅ Wrote %d rows -> %s", len(df), path)
    return path


# -------------------------------------------------
# Metadata sidecar
# -------------------------------------------------
def sidecar_path(out: str) -> str:
    return f"{out}.meta.json"


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def describe_model(params: ModelParams) -> dict:
    return {
        "g": params.g,
        "T1": params.T1,
        "T2": params.T2,
        "Tphi": math.inf if params.Tphi is None else params.Tphi,
        "omega": params.omega,
        "n0": params.n0,
        "fock_cutoff": params.dims.fock_cutoff,
    }


def build_metadata(config: RunConfig, invariant_checks: list, extra: dict | None = None) -> dict:
    params = {label: describe_model(m) for label, m in config.models}
    if config.physical is not None:
        params["physical"] = asdict(config.physical)
    meta = {
        "config": config.to_flat(),
        "mode": config.mode,
        "engine": config.engine,
        "params": params,
        "integrator": asdict(config.integrator) if config.integrator else None,
        "estimator": asdict(config.estimator),
        "invariant_checks": [c.as_dict() for c in invariant_checks],
    }
    if extra:
        meta.update(extra)
    return _clean(meta)


def write_sidecar(out: str, meta: dict) -> str:
    path = sidecar_path(out)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    logger.info("✅ Wrote metadata -> %s", path)
    return path


def config_from_sidecar(path: str) -> RunConfig:
    """Rebuild the RunConfig recorded in a sidecar."""
    with open(path) as f:
        meta = json.load(f)
    return validate_config(flat_to_text(meta["config"]))
