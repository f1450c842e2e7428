"""State-space models: stochastic volatility and the non-linear benchmark.

All density and sampling methods are vectorized over particles. The time
index ``n`` is one-based and names the step being entered, so the
transition producing ``x_n`` from ``x_{n-1}`` receives ``n``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_LOG_2PI = math.log(2.0 * math.pi)


def _norm_logpdf(x, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


class StateSpaceModel:
    """Scalar Gaussian-transition state-space model.

    Subclasses provide the initial variance, the transition mean and
    variance, and the emission density.
    """

    def initial_var(self) -> float:
        raise NotImplementedError

    def transition_mean(self, x_prev, n: int):
        raise NotImplementedError

    def transition_var(self) -> float:
        raise NotImplementedError

    def emission_log_density(self, y, x, n: int):
        raise NotImplementedError

    def sample_emission(self, x, n: int, rng: np.random.Generator):
        raise NotImplementedError

    def transition_noise_std(self) -> float:
        return math.sqrt(self.transition_var())

    def sample_initial(self, size, rng: np.random.Generator):
        return rng.normal(0.0, math.sqrt(self.initial_var()), size=size)

    def initial_log_density(self, x):
        return _norm_logpdf(np.asarray(x, dtype=float), 0.0, self.initial_var())

    def sample_transition(self, x_prev, n: int, rng: np.random.Generator):
        mean = self.transition_mean(np.asarray(x_prev, dtype=float), n)
        return mean + self.transition_noise_std() * rng.standard_normal(np.shape(mean))

    def transition_log_density(self, x, x_prev, n: int):
        mean = self.transition_mean(np.asarray(x_prev, dtype=float), n)
        return _norm_logpdf(np.asarray(x, dtype=float), mean, self.transition_var())


@dataclass(frozen=True)
class SVModel(StateSpaceModel):
    """Stochastic volatility model.

    ``x_1 ~ N(0, sigma^2 / (1 - phi^2))``, ``x_n = phi x_{n-1} + sigma v_n``,
    ``y_n = beta exp(x_n / 2) e_n`` with standard normal ``v_n, e_n``.
    """

    sigma: float = 1.0
    beta: float = 0.5
    phi: float = 0.91

    def __post_init__(self):
        if not self.sigma > 0 or not self.beta > 0:
            raise ValueError("sigma and beta must be positive")
        if not abs(self.phi) < 1:
            raise ValueError("phi must lie in (-1, 1)")

    @classmethod
    def from_variances(cls, sigma2: float, beta2: float, phi: float) -> "SVModel":
        return cls(math.sqrt(sigma2), math.sqrt(beta2), phi)

    @property
    def sigma2(self) -> float:
        return self.sigma**2

    @property
    def beta2(self) -> float:
        return self.beta**2

    def initial_var(self):
        return self.sigma2 / (1.0 - self.phi**2)

    def transition_mean(self, x_prev, n):
        return self.phi * x_prev

    def transition_var(self):
        return self.sigma2

    def transition_noise_std(self):
        return self.sigma

    def emission_log_density(self, y, x, n):
        x = np.asarray(x, dtype=float)
        return -0.5 * (_LOG_2PI + math.log(self.beta2) + x + y**2 * np.exp(-x) / self.beta2)

    def sample_emission(self, x, n, rng):
        x = np.asarray(x, dtype=float)
        return self.beta * np.exp(x / 2.0) * rng.standard_normal(np.shape(x))


@dataclass(frozen=True)
class NLModel(StateSpaceModel):
    """Non-linear, non-Gaussian benchmark model.

    ``x_1 ~ N(0, sx2)``,
    ``x_n = x_{n-1}/2 + 25 x_{n-1} / (1 + x_{n-1}^2) + 8 cos(1.2 n) + v_n``,
    ``y_n = x_n^2 / 20 + u_n`` with ``v_n ~ N(0, sx2)``, ``u_n ~ N(0, sy2)``.
    """

    sigma2_x: float = 1.0
    sigma2_y: float = 1.0

    def __post_init__(self):
        if not self.sigma2_x > 0 or not self.sigma2_y > 0:
            raise ValueError("NL model variances must be positive")

    def initial_var(self):
        return self.sigma2_x

    def transition_mean(self, x_prev, n):
        return x_prev / 2.0 + 25.0 * x_prev / (1.0 + x_prev**2) + 8.0 * np.cos(1.2 * n)

    def transition_var(self):
        return self.sigma2_x

    def emission_log_density(self, y, x, n):
        x = np.asarray(x, dtype=float)
        return _norm_logpdf(y, x**2 / 20.0, self.sigma2_y)

    def sample_emission(self, x, n, rng):
        x = np.asarray(x, dtype=float)
        return x**2 / 20.0 + math.sqrt(self.sigma2_y) * rng.standard_normal(np.shape(x))


def sv_model(sigma: float = 1.0, beta: float = 0.5, phi: float = 0.91) -> SVModel:
    return SVModel(sigma, beta, phi)


def nl_model(sigma2_x: float = 1.0, sigma2_y: float = 1.0) -> NLModel:
    return NLModel(sigma2_x, sigma2_y)


def simulate(model: StateSpaceModel, N: int, rng: np.random.Generator):
    """Draw a latent path and its observations.

    Returns:
        (x, y), both of length ``N``.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    x = np.empty(N)
    y = np.empty(N)
    x[0] = model.sample_initial(None, rng)
    y[0] = model.sample_emission(x[0], 1, rng)
    for n in range(1, N):
        x[n] = model.sample_transition(x[n - 1], n + 1, rng)
        y[n] = model.sample_emission(x[n], n + 1, rng)
    return x, y


class PriceDataError(ValueError):
    pass


def log_returns(prices) -> np.ndarray:
    """``y_n = log(r_n / r_{n-1})`` for a positive price series."""
    prices = np.asarray(prices, dtype=float)
    if prices.size < 2:
        raise PriceDataError("need at least two prices")
    bad = np.flatnonzero(~(prices > 0))
    if bad.size:
        raise PriceDataError(f"non-positive price at row {bad[0] + 1}: {prices[bad[0]]}")
    return np.diff(np.log(prices))


def read_prices(path) -> tuple[list[str], np.ndarray]:
    """Read a ``date,close`` CSV with a header row.

    Line numbers in error messages count the header as line 1.
    """
    dates, closes = [], []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise PriceDataError(f"{path}: empty price file")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise PriceDataError(f"{path}:{lineno}: expected 'date,close', got {row!r}")
            try:
                close = float(row[1])
            except ValueError:
                raise PriceDataError(f"{path}:{lineno}: unparsable price {row[1]!r}") from None
            if not math.isfinite(close) or close <= 0:
                raise PriceDataError(f"{path}:{lineno}: non-positive price {row[1]!r}")
            dates.append(row[0].strip())
            closes.append(close)
    if len(closes) < 2:
        raise PriceDataError(f"{path}: need at least two prices")
    return dates, np.array(closes)
