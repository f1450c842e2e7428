"""Particle bookkeeping: weights, effective sample size and genealogies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp


class ParticleCollapse(RuntimeError):
    """Every particle has zero weight."""

    def __init__(self, message: str = "all particles have zero weight", step: Optional[int] = None):
        if step is not None:
            message = f"{message} (particle collapse at step {step})"
        super().__init__(message)
        self.step = step


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Independent generator for the stream ``(seed, stream_id)``.

    The same pair always reproduces the same draws.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream_id)]))


def log_normalize(log_w) -> tuple[np.ndarray, float]:
    """Normalize log weights onto the simplex.

    Args:
        log_w: [S] unnormalized log weights, at least one finite.

    Returns:
        (w, log_total) where ``w`` sums to one and ``log_total`` is
        ``log(sum(exp(log_w)))``.

    Raises:
        ParticleCollapse: if no entry is finite.
    """
    log_w = np.asarray(log_w, dtype=float)
    if log_w.size == 0:
        raise ValueError("need at least one particle")
    if np.any(np.isnan(log_w)) or not np.any(np.isfinite(log_w)):
        raise ParticleCollapse()
    log_total = float(logsumexp(log_w))
    w = np.exp(log_w - log_total)
    # one more pass removes the residual rounding error of exp
    w /= w.sum()
    return w, log_total


def ess(w) -> float:
    """Effective sample size ``1 / sum(w**2)`` of normalized weights."""
    w = np.asarray(w, dtype=float)
    return float(1.0 / np.dot(w, w))


def multiplicity_to_ancestors(counts) -> np.ndarray:
    """Expand offspring counts into a sorted ancestor index list.

    Index ``s`` appears ``counts[s]`` times, in ascending particle order.
    """
    counts = np.asarray(counts)
    if counts.ndim != 1 or np.any(counts < 0):
        raise ValueError("counts must be a non-negative 1-d vector")
    if counts.sum() != counts.size:
        raise ValueError(
            f"multiplicities sum to {int(counts.sum())}, expected {counts.size}"
        )
    return np.repeat(np.arange(counts.size), counts.astype(np.int64))


def ancestors_to_multiplicity(ancestors, S: int) -> np.ndarray:
    return np.bincount(np.asarray(ancestors, dtype=np.int64), minlength=S)


@dataclass
class ParticleSystem:
    """Particles at one time step.

    Attributes:
        states: [S] latent values.
        log_weights: [S] carried unnormalized log weights.
        norm_weights: [S] normalized weights.
        log_joint: [S] running ``log p(x_{1:n}, y_{1:n})`` per particle, or
            None when likelihood tracking is off.
    """

    states: np.ndarray
    log_weights: np.ndarray
    norm_weights: np.ndarray
    log_joint: Optional[np.ndarray] = None

    def __post_init__(self):
        S = len(self.states)
        if S < 1:
            raise ValueError("need at least one particle")
        arrays = [self.log_weights, self.norm_weights]
        if self.log_joint is not None:
            arrays.append(self.log_joint)
        if any(len(a) != S for a in arrays):
            raise ValueError("particle arrays differ in length")

    @property
    def S(self) -> int:
        return len(self.states)


@dataclass
class Genealogy:
    """Ancestor indices over time.

    ``ancestors[n, s]`` is the parent (at step ``n - 1``) of particle ``s``
    at step ``n``; row 0 is the identity. ``resample_flags[n]`` records
    whether offspring selection fired before step ``n``.
    """

    ancestors: np.ndarray
    resample_flags: np.ndarray

    @property
    def N(self) -> int:
        return self.ancestors.shape[0]

    @property
    def S(self) -> int:
        return self.ancestors.shape[1]

    def lineage(self, final_index: int) -> np.ndarray:
        """Particle index occupied at each step by the ancestry of ``final_index``."""
        idx = np.empty(self.N, dtype=np.int64)
        k = int(final_index)
        for n in range(self.N - 1, -1, -1):
            idx[n] = k
            k = self.ancestors[n, k]
        return idx

    def lineages(self) -> np.ndarray:
        """[N, S] lineage indices of every final particle."""
        idx = np.empty(self.ancestors.shape, dtype=np.int64)
        k = np.arange(self.S)
        for n in range(self.N - 1, -1, -1):
            idx[n] = k
            k = self.ancestors[n, k]
        return idx

    def distinct_ancestor_counts(self) -> np.ndarray:
        """Number of distinct time-1 ancestors among the population alive at each step."""
        counts = np.empty(self.N, dtype=np.int64)
        origin = np.arange(self.S)
        for n in range(self.N):
            if n > 0:
                origin = origin[self.ancestors[n]]
            counts[n] = np.unique(origin).size
        return counts


def extract_trajectory(genealogy: Genealogy, stored_states, final_index: int) -> np.ndarray:
    """Latent path ending in particle ``final_index``, traced back through the genealogy."""
    stored_states = np.asarray(stored_states)
    idx = genealogy.lineage(final_index)
    return stored_states[np.arange(genealogy.N), idx]


def extract_trajectories(genealogy: Genealogy, stored_states) -> np.ndarray:
    """[N, S] paths of all final particles (column s ends in particle s)."""
    stored_states = np.asarray(stored_states)
    idx = genealogy.lineages()
    return np.take_along_axis(stored_states, idx, axis=1)
