import numpy as np
import pytest

from spinburst.errors import IntegrationError
from spinburst.integrate import integrate_sampled, sample_grid


def test_sample_grid():
    g = sample_grid(10.0, 5)
    assert np.allclose(g, [0.0, 2.5, 5.0, 7.5, 10.0])
    with pytest.raises(IntegrationError):
        sample_grid(-1.0, 5)
    with pytest.raises(IntegrationError):
        sample_grid(1.0, 1)


def test_exponential_decay():
    grid = sample_grid(2.0, 9)
    y = integrate_sampled(lambda t, y: -y, np.array([1.0]), grid)
    assert y.shape == (9, 1)
    assert np.allclose(y[:, 0], np.exp(-grid), atol=1e-8)


def test_grid_validation():
    with pytest.raises(IntegrationError):
        integrate_sampled(lambda t, y: -y, np.array([1.0]),
                          np.array([0.0, 1.0, 0.5]))
    with pytest.raises(IntegrationError):
        integrate_sampled(lambda t, y: -y, np.array([1.0]), np.array([0.0]))


def test_complex_rotation():
    # oscillator in a 2-vector; checks the wrapper keeps vector shape
    def rhs(t, y):
        return np.array([y[1], -y[0]])

    grid = sample_grid(np.pi, 31)
    y = integrate_sampled(rhs, np.array([1.0, 0.0]), grid)
    assert y[-1, 0] == pytest.approx(-1.0, abs=1e-8)
    assert y[-1, 1] == pytest.approx(0.0, abs=1e-8)


def test_stiff_problem_handled():
    grid = sample_grid(0.2, 5)
    y = integrate_sampled(lambda t, y: -1e5 * (y - 1.0), np.array([0.0]),
                          grid, rtol=1e-6, atol=1e-9)
    assert y[-1, 0] == pytest.approx(1.0, abs=1e-5)


def test_explicit_method_choice():
    grid = sample_grid(1.0, 5)
    y = integrate_sampled(lambda t, y: -y, np.array([1.0]), grid,
                          method="BDF", rtol=1e-8, atol=1e-12)
    assert y[-1, 0] == pytest.approx(np.exp(-1.0), abs=1e-6)


def test_failure_reports_last_time():
    def blows_up(t, y):
        return y * y

    with pytest.raises(IntegrationError) as err:
        integrate_sampled(blows_up, np.array([1.0]), sample_grid(5.0, 10))
    assert err.value.last_good_time is not None
