import numpy as np
import pytest

from models.errors import ConfigError, IntegratorError
from models.integrators import IntegratorConfig, integrate_on_grid, rk4_step


def test_adaptive_exponential_decay():
    cfg = IntegratorConfig(t_end=5.0, sample_count=11, rel_tol=1e-10, abs_tol=1e-12)
    out = integrate_on_grid(lambda t, y: -y, np.array([1.0]), cfg.time_grid(), cfg)
    assert len(out) == 11
    assert np.allclose([y[0] for y in out], np.exp(-cfg.time_grid()), rtol=1e-8)


def test_adaptive_complex_rotation():
    cfg = IntegratorConfig(t_end=20.0, sample_count=41)
    out = integrate_on_grid(lambda t, y: 1j * y, np.array([1.0 + 0j]), cfg.time_grid(), cfg)
    assert np.allclose([y[0] for y in out], np.exp(1j * cfg.time_grid()), atol=1e-5)


def test_rk4_fixed_step():
    cfg = IntegratorConfig(t_end=1.0, sample_count=5, method="rk4", rk4_substeps=100)
    out = integrate_on_grid(lambda t, y: -2.0 * y, np.array([1.0]), cfg.time_grid(), cfg)
    assert out[-1][0] == pytest.approx(np.exp(-2.0), rel=1e-9)
    y = rk4_step(lambda t, y: y, 0.0, np.array([1.0]), 0.1)
    assert y[0] == pytest.approx(np.exp(0.1), rel=1e-6)


def test_matrix_state_keeps_its_shape():
    gen = np.array([[0.0, 1.0], [-1.0, 0.0]])
    cfg = IntegratorConfig(t_end=1.0, sample_count=4, rel_tol=1e-10, abs_tol=1e-12)
    out = integrate_on_grid(lambda t, m: gen @ m, np.eye(2, dtype=complex), cfg.time_grid(), cfg)
    assert all(m.shape == (2, 2) for m in out)
    c, s = np.cos(1.0), np.sin(1.0)
    assert np.allclose(out[-1], [[c, s], [-s, c]], atol=1e-8)


def test_time_dependent_right_hand_side():
    cfg = IntegratorConfig(t_end=2.0, sample_count=3)
    out = integrate_on_grid(lambda t, y: np.array([t]), np.array([0.0]), cfg.time_grid(), cfg)
    assert out[-1][0] == pytest.approx(2.0, rel=1e-10)


def test_post_step_and_sample_hooks():
    cfg = IntegratorConfig(t_end=1.0, sample_count=6)
    seen = []
    integrate_on_grid(
        lambda t, y: -y,
        np.array([1.0 + 0.5j]),
        cfg.time_grid(),
        cfg,
        post_step=lambda y: y.real.astype(complex),
        on_sample=lambda t, y: seen.append((t, y[0])),
    )
    assert [t for t, _ in seen] == pytest.approx(cfg.time_grid().tolist())
    assert all(abs(v.imag) == 0.0 for _, v in seen[1:])


def test_blow_up_is_an_integrator_error():
    cfg = IntegratorConfig(t_end=2.0, sample_count=3)
    with pytest.raises(IntegratorError):
        integrate_on_grid(lambda t, y: y * y, np.array([1.0]), cfg.time_grid(), cfg)


def test_step_budget():
    cfg = IntegratorConfig(t_end=100.0, sample_count=2, max_steps=5)
    with pytest.raises(IntegratorError):
        integrate_on_grid(lambda t, y: 1j * 50.0 * y, np.array([1.0 + 0j]), cfg.time_grid(), cfg)


@pytest.mark.parametrize(
    "kwargs, key",
    [
        ({"rel_tol": 0.0}, "rel_tol"),
        ({"abs_tol": 1.0}, "abs_tol"),
        ({"sample_count": 1}, "samples"),
        ({"method": "euler"}, "method"),
        ({"t_end": -1.0}, "t_end"),
    ],
)
def test_config_errors_name_the_field(kwargs, key):
    base = {"t_end": 1.0}
    base.update(kwargs)
    with pytest.raises(ConfigError) as exc:
        IntegratorConfig(**base)
    assert key in exc.value.fields


def test_grid_must_increase():
    cfg = IntegratorConfig(t_end=1.0)
    with pytest.raises(ConfigError):
        integrate_on_grid(lambda t, y: y, np.array([1.0]), [0.0, 0.5, 0.5], cfg)
