import math

import pytest

from models.errors import ConfigError
from scripts.run_config import FIGURES, flat_to_text, parse_flat, validate_config


def regime_doc(**extra):
    values = {"mode": "regime", "g": "0.2", "T1": "1", "n0": "3", **extra}
    return "".join(f"{k}={v}\n" for k, v in values.items())


def test_parse_flat_types_values():
    values = parse_flat("# weak run\ng=0.2\nsamples=501\nn0_grid=0.1,1,10\nengine=master\n")
    assert values == {"g": 0.2, "samples": 501, "n0_grid": (0.1, 1.0, 10.0), "engine": "master"}


@pytest.mark.parametrize(
    "text, key",
    [("colour=red\n", "colour"), ("samples=1.5\n", "samples"), ("g=strong\n", "g"), ("T1=\n", "T1")],
)
def test_parse_flat_errors(text, key):
    with pytest.raises(ConfigError) as exc:
        parse_flat(text)
    assert key in exc.value.fields


def test_dephasing_time_gives_T2():
    config = validate_config(regime_doc(Tphi=repr(2.0 / 9.0)))
    assert config.model.T2 == pytest.approx(0.2)


def test_infinite_dephasing_time():
    config = validate_config(regime_doc(Tphi="inf"))
    assert config.model.Tphi is None
    assert config.model.T2 == pytest.approx(2.0)


def test_T2_above_twice_T1_is_rejected():
    with pytest.raises(ConfigError) as exc:
        validate_config(regime_doc(T2="3"))
    assert "T2" in exc.value.fields


def test_inconsistent_T2_and_Tphi():
    with pytest.raises(ConfigError) as exc:
        validate_config(regime_doc(T2="0.3", Tphi=repr(2.0 / 9.0)))
    assert "T2" in exc.value.fields
    assert validate_config(regime_doc(T2="0.2", Tphi=repr(2.0 / 9.0))).model.T2 == pytest.approx(0.2)


def test_missing_relaxation_time():
    with pytest.raises(ConfigError) as exc:
        validate_config(regime_doc())
    assert "T2" in exc.value.fields


def test_fock_cutoff_sets_dims():
    config = validate_config(regime_doc(T2="0.2", fock_cutoff="12"))
    assert config.model.dims.fock_cutoff == 12


def test_weak_figure_recipe():
    config = validate_config("fig=fig1\n")
    assert (config.mode, config.engine) == ("evolve", "all")
    assert config.model.g == 0.2 and config.model.n0 == 3.0
    assert config.model.T2 == pytest.approx(0.2)
    assert config.integrator.t_end == 250.0
    assert config.integrator.sample_count == 501
    assert config.out == "data/runs/fig1.csv"


def test_loss_figure_recipe_builds_weak_and_strong_curves():
    config = validate_config("fig=fig5\n")
    assert config.mode == "sweep"
    assert [label for label, _ in config.models] == ["weak", "strong"]
    assert [m.g for _, m in config.models] == [0.2, 10.0]
    assert config.sweep.engine == "master"
    assert config.integrator is None


def test_flag_overrides_win_over_recipe():
    config = validate_config("fig=fig7\nsamples=51\n", {"t_end": "1.0", "engine": "manifold", "n0": None})
    assert config.engine == "manifold"
    assert config.integrator.t_end == 1.0
    assert config.integrator.sample_count == 51
    assert config.model.n0 == 0.005


def test_engine_all_only_for_evolve():
    with pytest.raises(ConfigError) as exc:
        validate_config("mode=sweep\nengine=all\ng=10\nT1=1\nT2=0.2\n")
    assert "engine" in exc.value.fields
    with pytest.raises(ConfigError):
        validate_config("mode=sweep\nengine=analytic\ng=10\nT1=1\nT2=0.2\n")


@pytest.mark.parametrize(
    "doc, key",
    [
        ("mode=evolve\ng=0.2\nT1=1\nT2=0.2\nn0=3\n", "t_end"),
        ("mode=fit\n", "mode"),
        ("fig=fig9\n", "fig"),
        ("fig=fig1\nformat=xml\n", "format"),
        ("mode=sweep\ng=10\nT1=1\nT2=0.2\nn0_grid=1,0.5\n", "n0_grid"),
        ("mode=params\np=1\n", "Delta0"),
    ],
)
def test_invalid_documents(doc, key):
    with pytest.raises(ConfigError) as exc:
        validate_config(doc)
    assert key in exc.value.fields


def test_params_mode():
    config = validate_config("mode=params\np=1\ntheta=0\nDelta=1.6\nDelta0=1.2\nepsilon=1\nV=1\n")
    assert config.physical.omega == pytest.approx(2.0)
    assert config.models == ()


def test_flat_document_round_trip():
    for doc in ("fig=fig5\nn0_grid=0.01,0.1,1\njobs=2\n", regime_doc(Tphi="inf"), "fig=fig3\nformat=json\n"):
        config = validate_config(doc)
        again = validate_config(flat_to_text(config.to_flat()))
        assert again == config


def test_every_recipe_validates():
    for name, recipe in FIGURES.items():
        config = validate_config(f"fig={name}\n")
        assert config.mode == recipe.mode
        assert config.fig == name
        assert all(math.isfinite(m.T2) for _, m in config.models)


def test_master_handoff_threshold():
    assert validate_config("fig=fig5\n").sweep.master_n0_max == pytest.approx(20.0)
    config = validate_config("fig=fig5\nmaster_n0_max=inf\n")
    assert config.sweep.engine_for(1000.0) == "master"
    assert validate_config(flat_to_text(config.to_flat())) == config
