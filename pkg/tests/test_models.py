import math

import numpy as np
import pytest
from scipy import stats

from reshuffle.models import (
    NLModel,
    PriceDataError,
    SVModel,
    log_returns,
    nl_model,
    read_prices,
    simulate,
    sv_model,
)


def test_sv_initial_density_at_zero():
    m = SVModel(sigma=1.0, beta=0.5, phi=0.0)
    assert m.initial_log_density(0.0) == pytest.approx(-0.5 * math.log(2 * math.pi))


def test_sv_transition_mode():
    m = sv_model()
    x_prev = 0.7
    grid = np.linspace(-3, 3, 601)
    dens = m.transition_log_density(grid, x_prev, 2)
    assert grid[np.argmax(dens)] == pytest.approx(m.phi * x_prev, abs=0.01)
    assert m.transition_log_density(m.phi * x_prev, x_prev, 2) >= dens.max()


def test_sv_variance_parameterization():
    m = SVModel.from_variances(4.0, 0.25, 0.5)
    assert (m.sigma, m.beta) == (2.0, 0.5)
    assert m.initial_var() == pytest.approx(4.0 / 0.75)


def test_sv_stationary_moments(rng):
    m = sv_model()
    x = m.sample_initial(200_000, rng)
    assert x.var() == pytest.approx(m.sigma2 / (1 - m.phi**2), rel=0.02)
    assert abs(x.mean()) < 0.03


def test_sv_emission_matches_scipy():
    m = SVModel(1.0, 0.7, 0.9)
    x, y = np.array([-1.0, 0.3, 2.0]), 0.4
    expected = stats.norm.logpdf(y, 0, 0.7 * np.exp(x / 2))
    np.testing.assert_allclose(m.emission_log_density(y, x, 1), expected, rtol=1e-12)


def test_nl_drift_at_origin():
    assert NLModel().transition_mean(0.0, 1) == pytest.approx(2.8989, abs=1e-4)


def test_nl_drift_independent(rng):
    xs = rng.normal(scale=10, size=100)
    ns = rng.integers(1, 500, size=100)
    m = nl_model()
    for x, n in zip(xs, ns):
        ref = 0.5 * x + 25 * x / (1 + x * x) + 8 * math.cos(1.2 * n)
        assert m.transition_mean(x, int(n)) == pytest.approx(ref, abs=1e-12)


def test_nl_emission_matches_scipy():
    m = NLModel(2.0, 3.0)
    x = np.array([-4.0, 0.0, 5.0])
    np.testing.assert_allclose(
        m.emission_log_density(1.1, x, 3), stats.norm.logpdf(1.1, x**2 / 20, math.sqrt(3.0)), rtol=1e-12
    )


@pytest.mark.parametrize("model", [SVModel(1.0, 0.5, 0.91), NLModel(1.0, 1.0), NLModel(10.0, 10.0)])
def test_transition_sampler_matches_density(model, rng):
    x_prev, n = 1.3, 7
    draws = model.sample_transition(np.full(10_000, x_prev), n, rng)
    mean = float(model.transition_mean(x_prev, n))
    res = stats.kstest(draws, "norm", args=(mean, math.sqrt(model.transition_var())))
    assert res.pvalue > 0.01
    # the closed-form reference must agree with the model's own density
    grid = np.linspace(mean - 3, mean + 3, 7)
    np.testing.assert_allclose(
        model.transition_log_density(grid, x_prev, n),
        stats.norm.logpdf(grid, mean, math.sqrt(model.transition_var())),
        rtol=1e-12,
    )


@pytest.mark.parametrize("bad", [dict(sigma=0.0), dict(beta=-1.0), dict(phi=1.0)])
def test_sv_invalid(bad):
    with pytest.raises(ValueError):
        SVModel(**bad)


def test_nl_invalid():
    with pytest.raises(ValueError):
        NLModel(0.0, 1.0)


def test_simulate_single_step(rng):
    x, y = simulate(sv_model(), 1, rng)
    assert x.shape == y.shape == (1,)


def test_simulate_deterministic():
    a = simulate(nl_model(), 50, np.random.default_rng(3))
    b = simulate(nl_model(), 50, np.random.default_rng(3))
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


class TestPrices:
    def test_log_returns(self):
        np.testing.assert_allclose(log_returns([1, math.e, math.e]), [1.0, 0.0])
        assert log_returns([100, 100]).tolist() == [0.0]
        assert log_returns([2, 1])[0] == pytest.approx(-math.log(2))

    def test_nonpositive(self):
        with pytest.raises(PriceDataError, match="row 2"):
            log_returns([1.0, 0.0, 2.0])

    def test_read(self, tmp_path):
        p = tmp_path / "px.csv"
        p.write_text("date,close\n2006-04-03,100\n2006-04-04,101.5\n\n2006-04-05,99\n")
        dates, closes = read_prices(p)
        assert dates == ["2006-04-03", "2006-04-04", "2006-04-05"]
        np.testing.assert_allclose(closes, [100, 101.5, 99])

    @pytest.mark.parametrize("body, where", [
        ("2006-04-03,100\n2006-04-04,abc\n", ":3:"),
        ("2006-04-03,100\n2006-04-04,-5\n", ":3:"),
        ("2006-04-03\n", ":2:"),
    ])
    def test_errors_name_line(self, tmp_path, body, where):
        p = tmp_path / "px.csv"
        p.write_text("date,close\n" + body)
        with pytest.raises(PriceDataError, match=where):
            read_prices(p)

    def test_empty(self, tmp_path):
        p = tmp_path / "px.csv"
        p.write_text("")
        with pytest.raises(PriceDataError):
            read_prices(p)
