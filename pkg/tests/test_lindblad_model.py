import numpy as np
import pytest

from models.errors import ConfigError, OracleCapExceeded, TruncationError
from models.integrators import IntegratorConfig
from models.lindblad_model import (
    LindbladGenerator,
    MasterEquationEngine,
    ModelParams,
    ObservableRecord,
    dephasing_time,
    energy_flow_residual,
    energy_increase,
    evolve_master,
    evolve_oracle,
    lindblad_rhs,
    liouvillian_matrix,
    observables,
)
from models.quantum_core import DensityMatrix, HilbertDims, basis_state, build_operators, expectation


def random_state(dims, seed):
    rng = np.random.default_rng(seed)
    d = dims.total_dim
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = m @ m.conj().T
    return DensityMatrix(dims, rho / np.trace(rho).real)


def test_relaxation_times():
    params = ModelParams.from_T2(0.2, 1.0, 0.2)
    assert params.Tphi == pytest.approx(2.0 / 9.0)
    assert params.T2 == pytest.approx(0.2)
    assert dephasing_time(1.0, 2.0) is None
    assert ModelParams(g=0.2, T1=1.0).T2 == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        dephasing_time(1.0, 3.0)


@pytest.mark.parametrize("kwargs, key", [({"g": -1.0}, "g"), ({"T1": 0.0}, "T1"), ({"n0": -2.0}, "n0")])
def test_invalid_parameters(kwargs, key):
    base = {"g": 0.2, "T1": 1.0}
    base.update(kwargs)
    with pytest.raises(ConfigError) as exc:
        ModelParams(**base)
    assert key in exc.value.fields


def test_structured_generator_matches_dense_reference():
    dims = HilbertDims(4)
    params = ModelParams(g=0.7, T1=1.3, Tphi=0.4, dims=dims)
    ops = build_operators(dims)
    rho = random_state(dims, 1)
    fast = LindbladGenerator(params)(0.0, np.array(rho.matrix))
    assert np.allclose(fast, lindblad_rhs(rho, params, ops), atol=1e-12)


def test_liouvillian_matches_generator():
    dims = HilbertDims(3)
    params = ModelParams(g=1.1, T1=0.8, Tphi=0.5, dims=dims)
    liou = liouvillian_matrix(params, build_operators(dims))
    rho = np.array(random_state(dims, 2).matrix)
    assert np.allclose(liou @ rho.ravel(), LindbladGenerator(params)(0.0, rho).ravel(), atol=1e-12)


def test_observables_match_dense_expectations():
    dims = HilbertDims(5)
    ops = build_operators(dims)
    rho = random_state(dims, 3)
    rec = observables(0.0, np.array(rho.matrix), dims)
    assert rec.n == pytest.approx(expectation(rho, ops.number_op).real)
    assert rec.sigma_pp == pytest.approx(expectation(rho, ops.sigma_pp).real)
    assert rec.sigma_minus == pytest.approx(expectation(rho, ops.sigma_minus))
    assert rec.a_expect == pytest.approx(expectation(rho, ops.a))
    assert rec.corr == pytest.approx(expectation(rho, ops.a_dag @ ops.sigma_minus))
    assert rec.purity == pytest.approx(rho.purity())


@pytest.mark.parametrize("seed", range(5))
def test_master_equation_matches_liouvillian_oracle(seed):
    rng = np.random.default_rng(seed)
    dims = HilbertDims(3)
    params = ModelParams(
        g=rng.uniform(0.1, 3.0), T1=rng.uniform(0.5, 2.0), Tphi=rng.uniform(0.3, 3.0), dims=dims
    )
    rho0 = basis_state(dims, 2)
    cfg = IntegratorConfig(t_end=3.0, sample_count=13, rel_tol=1e-10, abs_tol=1e-12)
    fast = MasterEquationEngine(params, cfg).run(rho0=rho0)
    exact = evolve_oracle(params, cfg.time_grid(), rho0=rho0)
    assert np.allclose([r.n for r in fast], [r.n for r in exact], atol=1e-6)
    assert np.allclose([r.sigma_pp for r in fast], [r.sigma_pp for r in exact], atol=1e-6)


def test_oracle_cap():
    params = ModelParams(g=0.2, T1=1.0, dims=HilbertDims(40))
    with pytest.raises(OracleCapExceeded):
        liouvillian_matrix(params, build_operators(params.dims))


def test_weak_run_keeps_state_physical():
    params = ModelParams.from_T2(0.2, 1.0, 0.2, n0=3.0)
    cfg = IntegratorConfig(t_end=20.0, sample_count=2001)
    engine = MasterEquationEngine(params, cfg)
    records = engine.run()
    assert len(engine.diagnostics) == 10
    for d in engine.diagnostics:
        assert d.trace_error < 1e-9
        assert d.hermiticity < 1e-9
        assert d.min_eigenvalue > -1e-8
    assert all(not r.violations() for r in records)
    assert energy_flow_residual(records, params.T1) < 1e-3
    assert engine.energy_flow < 1e-10
    assert energy_increase(records) < 1e-7
    assert records[0].n == pytest.approx(3.0, abs=1e-9)
    assert records[-1].n < 3.0


def test_decoupled_resonator_keeps_its_photons():
    params = ModelParams(g=0.0, T1=1.0, n0=2.0)
    records = evolve_master(params, IntegratorConfig(t_end=5.0, sample_count=6))
    assert [r.n for r in records] == pytest.approx([2.0] * 6, abs=1e-9)
    assert max(r.sigma_pp for r in records) < 1e-12


def test_excited_tls_relaxes_at_T1():
    dims = HilbertDims(1)
    params = ModelParams(g=0.0, T1=2.0, dims=dims)
    records = MasterEquationEngine(params, IntegratorConfig(t_end=4.0, sample_count=5)).run(
        rho0=basis_state(dims, 0, excited=True)
    )
    assert [r.sigma_pp for r in records] == pytest.approx(np.exp(-np.arange(5) / 2.0), rel=1e-7)


def test_truncation_errors():
    with pytest.raises(TruncationError):
        MasterEquationEngine(
            ModelParams(g=0.2, T1=1.0, n0=3.0, dims=HilbertDims(5)), IntegratorConfig(t_end=1.0)
        ).run()


def test_record_violations():
    good = ObservableRecord(0.0, 1.0, 0.5, None, None, None)
    bad = ObservableRecord(0.0, -1.0, 1.5, None, None, None, trace=0.9)
    assert good.violations() == []
    assert len(bad.violations()) == 3


def test_energy_flow_residual_on_synthetic_decay():
    t = np.linspace(0.0, 4.0, 41)
    balanced = [ObservableRecord(ti, 0.0, float(np.exp(-ti)), None, None, None) for ti in t]
    assert energy_flow_residual(balanced, 1.0) < 1e-5
    # same trajectory against a T1 that would drain twice as fast
    assert energy_flow_residual(balanced, 0.5) > 0.1
    assert energy_flow_residual(balanced, 0.5, t_min=10.0) == 0.0


def test_energy_flow_is_checked_from_the_first_sample():
    params = ModelParams(g=10.0, T1=1.0, n0=0.5)
    engine = MasterEquationEngine(params, IntegratorConfig(t_end=1.0, sample_count=41))
    engine.run()
    assert engine.energy_flow < 1e-10


def test_vacuum_rabi_decay_without_dephasing():
    params = ModelParams(g=10.0, T1=1.0, n0=0.005)
    records = evolve_master(params, IntegratorConfig(t_end=4.0, sample_count=401))
    t = np.array([r.t for r in records])
    n = np.array([r.n for r in records])
    expected = 0.005 * np.exp(-t / 2.0) * np.cos(10.0 * t) ** 2
    assert np.linalg.norm(n - expected) / np.linalg.norm(expected) < 0.05
