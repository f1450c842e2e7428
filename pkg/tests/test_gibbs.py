import math

import numpy as np
import pytest
from scipy import stats

from reshuffle.gibbs import (
    ChainRecord,
    IGPrior,
    PGConfig,
    acf,
    beta2_posterior,
    chain_median,
    particle_gibbs,
    sample_beta2,
    sample_phi,
    sample_sigma2,
    sigma2_posterior,
)
from reshuffle.models import simulate, sv_model


def _ar1(phi, n, rng, sigma=1.0):
    x = np.empty(n)
    x[0] = rng.normal(0, sigma / math.sqrt(1 - phi**2))
    for t in range(1, n):
        x[t] = phi * x[t - 1] + sigma * rng.normal()
    return x


class TestConjugate:
    def test_worked_example(self):
        shape, rate = sigma2_posterior([1.0, 0.5], 0.5)
        assert shape == pytest.approx(1.001)
        assert rate == pytest.approx(0.376, abs=1e-15)

    def test_zero_path(self):
        shape, rate = sigma2_posterior(np.zeros(6), 0.3, IGPrior(2.0, 0.7))
        assert (shape, rate) == (5.0, 0.7)

    def test_beta2_zero_data(self):
        assert beta2_posterior(np.ones(4), np.zeros(4), IGPrior(1.0, 2.0)) == (3.0, 2.0)

    def test_beta2_single(self):
        shape, rate = beta2_posterior([0.0], [2.0])
        assert shape == pytest.approx(0.501) and rate == pytest.approx(2.001)

    def test_beta2_length_mismatch(self):
        with pytest.raises(ValueError):
            beta2_posterior([0.0, 1.0], [1.0])

    def test_prior_validation(self):
        with pytest.raises(ValueError):
            IGPrior(0.0, 1.0)

    def test_ig_mean(self, rng):
        # a one-step zero path turns IG(2.5, 2) into IG(3, 2), mean 2 / (3 - 1)
        draws = np.array([sample_sigma2(np.zeros(1), 0.0, IGPrior(2.5, 2.0), rng) for _ in range(100_000)])
        assert draws.mean() == pytest.approx(1.0, rel=0.01)

    def test_sigma2_ks(self, rng):
        x = _ar1(0.8, 30, rng)
        prior = IGPrior()
        shape, rate = sigma2_posterior(x, 0.8, prior)
        draws = [sample_sigma2(x, 0.8, prior, rng) for _ in range(10_000)]
        assert stats.kstest(draws, stats.invgamma(shape, scale=rate).cdf).pvalue > 0.01

    def test_beta2_ks(self, rng):
        x = _ar1(0.9, 40, rng)
        y = 0.5 * np.exp(x / 2) * rng.normal(size=x.size)
        shape, rate = beta2_posterior(x, y)
        draws = [sample_beta2(x, y, IGPrior(), rng) for _ in range(10_000)]
        assert stats.kstest(draws, stats.invgamma(shape, scale=rate).cdf).pvalue > 0.01


class TestPhi:
    def test_concentrates(self, rng):
        x = _ar1(0.9, 10_000, rng)
        draws = [sample_phi(x, 1.0, rng) for _ in range(50)]
        assert np.all(np.abs(np.array(draws) - 0.9) < 0.05)

    def test_inside_interval(self, rng):
        x = _ar1(0.99, 50, rng)
        for _ in range(200):
            assert -1 < sample_phi(x, 0.5, rng) < 1

    def test_fallback(self, rng, caplog):
        # mean 3 with a tiny spread leaves no mass inside (-1, 1)
        x = 3.0 ** np.arange(10)
        with caplog.at_level("WARNING"):
            assert sample_phi(x, 1e-6, rng, phi_prev=0.42) == 0.42
        assert "tries" in caplog.text

    def test_symmetric_when_uncorrelated(self, rng):
        x = np.array([0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0])
        assert np.dot(x[1:], x[:-1]) == 0
        draws = np.array([sample_phi(x, 1.0, rng) for _ in range(10_000)])
        assert abs(draws.mean()) < 3 * draws.std() / math.sqrt(draws.size)

    def test_zero_path_uniform(self, rng):
        draws = np.array([sample_phi(np.zeros(5), 1.0, rng) for _ in range(2000)])
        assert np.all(np.abs(draws) < 1)
        assert stats.kstest(draws, stats.uniform(-1, 2).cdf).pvalue > 0.01

    def test_needs_two_states(self, rng):
        with pytest.raises(ValueError):
            sample_phi([1.0], 1.0, rng)

    def test_acceptance_matches_target(self, rng):
        # target density on a grid versus the sampler's histogram
        x = _ar1(0.5, 6, rng)
        s2 = 0.7
        draws = np.array([sample_phi(x, s2, rng) for _ in range(20_000)])
        grid = np.linspace(-0.999, 0.999, 4001)
        logp = (-0.5 / s2 * ((x[1:, None] - grid * x[:-1, None]) ** 2).sum(0)
                + 0.5 * np.log(1 - grid**2) - x[0] ** 2 * (1 - grid**2) / (2 * s2))
        p = np.exp(logp - logp.max())
        cdf = np.cumsum(p) / p.sum()
        res = stats.kstest(draws, lambda v: np.interp(v, grid, cdf))
        assert res.pvalue > 0.01


@pytest.fixture(scope="module")
def data():
    return simulate(sv_model(), 25, np.random.default_rng(1))[1]


class TestPG:
    def test_lengths(self, data):
        cfg = PGConfig(S=8, M=11, burn_in=10, trajectory_thin=5)
        ch = particle_gibbs(data, cfg, rng=np.random.default_rng(0))
        assert ch.sigma2.shape == ch.beta2.shape == ch.phi.shape == (11,)
        assert ch.trajectories.shape == (3, 25)
        assert ch.trajectory_iterations.tolist() == [0, 5, 10]
        kept = ch.retained(10)
        assert kept.sigma2.size == 1 and kept.trajectory_iterations.tolist() == [0]

    def test_reproducible_and_valid(self, data):
        cfg = PGConfig(S=10, M=40, scheme="tv_p")
        a = particle_gibbs(data, cfg, rng=np.random.default_rng(5))
        b = particle_gibbs(data, cfg, rng=np.random.default_rng(5))
        for k in ("sigma2", "beta2", "phi"):
            np.testing.assert_array_equal(getattr(a, k), getattr(b, k))
        assert np.all(a.sigma2 > 0) and np.all(a.beta2 > 0)
        assert np.all(np.abs(a.phi) < 1)
        np.testing.assert_allclose(a.beta, np.sqrt(a.beta2))

    def test_initial_state(self, data):
        ch = particle_gibbs(data, PGConfig(S=5, M=2), rng=np.random.default_rng(3))
        assert ch.sigma2[0] == 1.0 and ch.beta2[0] == 1.0
        assert -0.5 <= ch.phi[0] <= 0.5

    def test_config_checks(self):
        with pytest.raises(ValueError):
            PGConfig(S=5, M=10, burn_in=10)
        with pytest.raises(ValueError):
            PGConfig(S=0, M=10)

    def test_too_short(self):
        with pytest.raises(ValueError):
            particle_gibbs(np.zeros(1), PGConfig(S=5, M=3))


class TestDiagnostics:
    def test_acf_lag0(self, rng):
        assert acf(rng.normal(size=50), 5)[0] == 1.0

    def test_alternating(self):
        M = 1000
        c = np.tile([1.0, -1.0], M // 2)
        assert abs(acf(c, 1)[1] + 1) <= 2 / M

    def test_white_noise(self, rng):
        rho = acf(rng.normal(size=100_000), 20)
        assert np.all(np.abs(rho[1:]) < 0.02)

    def test_bounds(self, rng):
        rho = acf(np.cumsum(rng.normal(size=300)), 100)
        assert np.all(np.abs(rho) <= 1 + 1e-12)

    def test_constant(self):
        with pytest.raises(ValueError, match="constant chain"):
            acf(np.ones(10), 2)

    def test_too_short(self):
        with pytest.raises(ValueError):
            acf(np.arange(3.0), 3)

    @pytest.mark.parametrize("chain, window, expected", [
        ([1, 2, 3], 3, 2.0), ([1, 2, 3], 1, 3.0), ([1, 2, 3, 4], 4, 2.5), ([9, 1, 2, 3, 4], 4, 2.5),
    ])
    def test_median(self, chain, window, expected):
        assert chain_median(chain, window) == expected

    def test_median_window_check(self):
        with pytest.raises(ValueError):
            chain_median([1.0], 2)
