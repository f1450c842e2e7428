"""Particle Gibbs for the stochastic volatility model, plus chain diagnostics.

Parameter updates per sweep, in order:

* ``sigma^2 | x, phi``: inverse gamma, conjugate to the AR(1) latent path
  including its stationary start.
* ``beta^2 | x, y``: inverse gamma, conjugate to ``y_n ~ N(0, beta^2 e^{x_n})``.
* ``phi | x, sigma^2``: rejection sampler. Proposals come from the Gaussian
  conditional implied by the transitions ``n >= 2``; the stationary
  initial density supplies the acceptance ratio.

The latent path is then refreshed with one conditional SMC sweep.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from reshuffle.filters import FilterConfig, bpf, csmc_kernel
from reshuffle.models import SVModel
from reshuffle.selection import SelectionScheme

log = logging.getLogger(__name__)

PHI_MAX_TRIES = 1000
_PHI_BATCH = 50


@dataclass(frozen=True)
class IGPrior:
    shape: float = 0.001
    rate: float = 0.001

    def __post_init__(self):
        if not self.shape > 0 or not self.rate > 0:
            raise ValueError("inverse gamma shape and rate must be positive")


def _draw_inverse_gamma(shape: float, rate: float, rng: np.random.Generator) -> float:
    return float(rate / rng.gamma(shape))


def sigma2_posterior(x, phi: float, prior: IGPrior = IGPrior()) -> tuple[float, float]:
    """(shape, rate) of the inverse gamma conditional of ``sigma^2``."""
    x = np.asarray(x, dtype=float)
    resid = x[1:] - phi * x[:-1]
    rate = prior.rate + 0.5 * x[0] ** 2 * (1.0 - phi**2) + 0.5 * np.dot(resid, resid)
    return prior.shape + 0.5 * x.size, float(rate)


def beta2_posterior(x, y, prior: IGPrior = IGPrior()) -> tuple[float, float]:
    """(shape, rate) of the inverse gamma conditional of ``beta^2``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y differ in length")
    rate = prior.rate + 0.5 * np.sum(y**2 * np.exp(-x))
    return prior.shape + 0.5 * x.size, float(rate)


def sample_sigma2(x, phi: float, prior: IGPrior, rng: np.random.Generator) -> float:
    return _draw_inverse_gamma(*sigma2_posterior(x, phi, prior), rng)


def sample_beta2(x, y, prior: IGPrior, rng: np.random.Generator) -> float:
    return _draw_inverse_gamma(*beta2_posterior(x, y, prior), rng)


def _log_stationary_factor(phi, c):
    # log of sqrt(1 - phi^2) exp(-c (1 - phi^2)), c = x_1^2 / (2 sigma^2)
    t = 1.0 - phi**2
    return 0.5 * np.log(t) - c * t


def sample_phi(
    x,
    sigma2: float,
    rng: np.random.Generator,
    phi_prev: Optional[float] = None,
    max_tries: int = PHI_MAX_TRIES,
) -> float:
    """Draw ``phi | x, sigma^2`` under a flat prior on (-1, 1).

    Falls back to ``phi_prev`` (or a uniform draw when it is None) if no
    proposal is accepted within ``max_tries``.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two states to update phi")
    ss = float(np.dot(x[:-1], x[:-1]))
    if ss == 0.0:
        return float(rng.uniform(-1.0, 1.0))
    mean = float(np.dot(x[1:], x[:-1])) / ss
    sd = math.sqrt(sigma2 / ss)

    c = x[0] ** 2 / (2.0 * sigma2)
    # maximum of the stationary factor over t = 1 - phi^2 in (0, 1]
    t_star = min(1.0, 0.5 / c) if c > 0 else 1.0
    log_bound = 0.5 * math.log(t_star) - c * t_star

    tries = 0
    while tries < max_tries:
        # proposals are tested in order, a batch at a time
        batch = min(_PHI_BATCH, max_tries - tries)
        tries += batch
        phi = rng.normal(mean, sd, size=batch)
        log_u = np.log(rng.uniform(size=batch))
        inside = np.abs(phi) < 1.0
        ok = np.zeros(batch, dtype=bool)
        ok[inside] = log_u[inside] <= _log_stationary_factor(phi[inside], c) - log_bound
        hit = np.flatnonzero(ok)
        if hit.size:
            return float(phi[hit[0]])
    log.warning("phi rejection sampler hit %d tries; keeping previous value", max_tries)
    if phi_prev is None:
        return float(rng.uniform(-1.0, 1.0))
    return float(phi_prev)


@dataclass(frozen=True)
class PGConfig:
    """Particle Gibbs run settings.

    ``trajectory_thin`` keeps every k-th latent path (0 keeps none).
    """

    S: int
    M: int
    scheme: object = "kl_w"
    burn_in: int = 0
    estimate_window: int = 5000
    ess_threshold_fraction: float = 0.5
    trajectory_thin: int = 0

    def __post_init__(self):
        if isinstance(self.scheme, str):
            object.__setattr__(self, "scheme", SelectionScheme.parse(self.scheme))
        if self.S < 1:
            raise ValueError("S must be at least 1")
        if not self.M > self.burn_in >= 0:
            raise ValueError("need M > burn_in >= 0")
        if self.estimate_window < 1:
            raise ValueError("estimate_window must be positive")


@dataclass
class ChainRecord:
    """Per-iteration particle Gibbs output (including burn-in)."""

    sigma2: np.ndarray
    beta2: np.ndarray
    phi: np.ndarray
    trajectories: np.ndarray
    trajectory_iterations: np.ndarray

    @property
    def beta(self) -> np.ndarray:
        return np.sqrt(self.beta2)

    def retained(self, burn_in: int) -> "ChainRecord":
        keep = self.trajectory_iterations >= burn_in
        return ChainRecord(
            self.sigma2[burn_in:], self.beta2[burn_in:], self.phi[burn_in:],
            self.trajectories[keep], self.trajectory_iterations[keep] - burn_in,
        )


class GibbsError(RuntimeError):
    pass


def particle_gibbs(
    y,
    cfg: PGConfig,
    prior_sigma2: IGPrior = IGPrior(),
    prior_beta2: IGPrior = IGPrior(),
    rng: Optional[np.random.Generator] = None,
    init_trajectory=None,
) -> ChainRecord:
    """Run ``cfg.M`` particle Gibbs iterations on the SV model.

    Iteration 0 holds the initial state: ``sigma^2 = beta^2 = 1``,
    ``phi ~ U(-0.5, 0.5)`` and a path sampled from a plain filter run with
    the same scheme (unless ``init_trajectory`` is given).
    """
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        raise ValueError("particle Gibbs needs N >= 2")
    if rng is None:
        rng = np.random.default_rng()
    fcfg = FilterConfig(cfg.S, cfg.scheme, None, cfg.ess_threshold_fraction)

    sigma2, beta2 = 1.0, 1.0
    phi = float(rng.uniform(-0.5, 0.5))
    if init_trajectory is None:
        out = bpf(SVModel.from_variances(sigma2, beta2, phi), y, fcfg, rng)
        w = out.final_system.norm_weights
        x = out.trajectory(int(rng.choice(w.size, p=w)))
    else:
        x = np.asarray(init_trajectory, dtype=float).copy()

    chains = np.empty((3, cfg.M))
    kept, kept_at = [], []

    def record(m):
        chains[:, m] = sigma2, beta2, phi
        if cfg.trajectory_thin and m % cfg.trajectory_thin == 0:
            kept.append(x.copy())
            kept_at.append(m)

    record(0)
    for m in range(1, cfg.M):
        sigma2 = sample_sigma2(x, phi, prior_sigma2, rng)
        beta2 = sample_beta2(x, y, prior_beta2, rng)
        phi = sample_phi(x, sigma2, rng, phi_prev=phi)
        model = SVModel.from_variances(sigma2, beta2, phi)
        try:
            x = csmc_kernel(model, y, fcfg, x, rng)
        except Exception as exc:
            raise GibbsError(f"particle Gibbs failed at iteration {m}: {exc}") from exc
        record(m)

    traj = np.array(kept) if kept else np.empty((0, y.size))
    return ChainRecord(chains[0], chains[1], chains[2], traj, np.array(kept_at, dtype=np.int64))


def acf(chain, max_lag: int) -> np.ndarray:
    """Sample autocorrelation ``rho(0..max_lag)`` normalized by the lag-0 sum of squares."""
    c = np.asarray(chain, dtype=float)
    if c.size <= max_lag:
        raise ValueError(f"chain of length {c.size} too short for max_lag={max_lag}")
    d = c - c.mean()
    denom = float(np.dot(d, d))
    if denom == 0.0 or not np.isfinite(denom):
        raise ValueError("constant chain")
    M = d.size
    return np.array([np.dot(d[: M - k], d[k:]) / denom for k in range(max_lag + 1)])


def chain_median(chain, window: int) -> float:
    """Median of the trailing ``window`` samples."""
    c = np.asarray(chain, dtype=float)
    if not 1 <= window <= c.size:
        raise ValueError(f"window {window} outside [1, {c.size}]")
    return float(np.median(c[-window:]))
