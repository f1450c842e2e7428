"""Bootstrap particle filter, its joint-likelihood variant and conditional SMC."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from reshuffle.models import StateSpaceModel
from reshuffle.particles import (
    Genealogy,
    ParticleCollapse,
    ParticleSystem,
    ancestors_to_multiplicity,
    ess,
    extract_trajectories,
    extract_trajectory,
    log_normalize,
    multiplicity_to_ancestors,
)
from reshuffle.selection import SelectionScheme


@dataclass(frozen=True)
class FilterConfig:
    """Particle count, selection scheme and adaptive-selection threshold.

    Selection fires before step ``n >= 2`` whenever
    ``ESS < ess_threshold_fraction * S``. ``track_likelihood`` defaults to
    whatever the scheme needs.
    """

    S: int
    scheme: Union[SelectionScheme, str] = "stratified"
    track_likelihood: Optional[bool] = None
    ess_threshold_fraction: float = 0.5

    def __post_init__(self):
        if isinstance(self.scheme, str):
            object.__setattr__(self, "scheme", SelectionScheme.parse(self.scheme))
        if int(self.S) < 1:
            raise ValueError("S must be at least 1")
        if not 0.0 < self.ess_threshold_fraction <= 1.0:
            raise ValueError("ess_threshold_fraction must lie in (0, 1]")
        if self.track_likelihood is None:
            object.__setattr__(self, "track_likelihood", self.scheme.likelihood)
        elif self.scheme.likelihood and not self.track_likelihood:
            raise ValueError(f"{self.scheme.name} needs track_likelihood=True")


@dataclass
class FilterOutput:
    """Everything a filter run leaves behind.

    Attributes:
        final_system: particles after the last step.
        genealogy: ancestor indices and selection flags.
        stored_states: [N, S] particle states per step.
        weight_history: [N, S] normalized weights per step, before any reset.
        ess_history: [N] effective sample size per step.
        log_joint_history: [N, S] running log joint likelihoods, or None.
    """

    final_system: ParticleSystem
    genealogy: Genealogy
    stored_states: np.ndarray
    weight_history: np.ndarray
    ess_history: np.ndarray
    log_joint_history: Optional[np.ndarray] = None

    @property
    def N(self) -> int:
        return self.stored_states.shape[0]

    @property
    def S(self) -> int:
        return self.stored_states.shape[1]

    def trajectory(self, final_index: int) -> np.ndarray:
        return extract_trajectory(self.genealogy, self.stored_states, final_index)

    def trajectories(self) -> np.ndarray:
        """[N, S] ancestral paths; column ``s`` ends in final particle ``s``."""
        return extract_trajectories(self.genealogy, self.stored_states)


def _pin_reference(scheme: SelectionScheme, ancestors, counts=None):
    # the last slot always descends from the conditioned particle
    S = len(ancestors)
    if not scheme.deterministic:
        ancestors = ancestors.copy()
        ancestors[-1] = S - 1
        return ancestors
    if counts[-1] > 0:
        return ancestors
    counts = counts.copy()
    counts[int(np.argmax(counts))] -= 1
    counts[-1] += 1
    return multiplicity_to_ancestors(counts)


def _run(model: StateSpaceModel, y, cfg: FilterConfig, rng, reference=None) -> FilterOutput:
    y = np.asarray(y, dtype=float)
    N, S = y.size, int(cfg.S)
    if N < 1:
        raise ValueError("need at least one observation")
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
        if reference.shape != (N,):
            raise ValueError(f"reference has shape {reference.shape}, expected ({N},)")
    scheme = cfg.scheme
    track = cfg.track_likelihood

    states = np.empty((N, S))
    ancestors = np.empty((N, S), dtype=np.int64)
    flags = np.zeros(N, dtype=bool)
    weights = np.empty((N, S))
    ess_hist = np.empty(N)
    joint_hist = np.empty((N, S)) if track else None
    identity = np.arange(S)

    x = model.sample_initial(S, rng)
    if reference is not None:
        x[-1] = reference[0]
    log_g = model.emission_log_density(y[0], x, 1)
    log_w = log_g
    log_joint = log_g + model.initial_log_density(x) if track else None
    a = identity

    for n in range(N):
        if n > 0:
            if ess(weights[n - 1]) < cfg.ess_threshold_fraction * S:
                flags[n] = True
                counts = None
                if scheme.deterministic:
                    counts = scheme.multiplicities(log_w_norm, log_joint)
                    a = multiplicity_to_ancestors(counts)
                else:
                    a = scheme.select(log_w_norm, rng=rng)
                if reference is not None:
                    if counts is None:
                        counts = ancestors_to_multiplicity(a, S)
                    a = _pin_reference(scheme, a, counts)
                carried = np.zeros(S)
            else:
                a = identity
                carried = log_w_norm
            x_prev = x[a]
            x = model.sample_transition(x_prev, n + 1, rng)
            if reference is not None:
                x[-1] = reference[n]
            log_g = model.emission_log_density(y[n], x, n + 1)
            log_w = carried + log_g
            if track:
                log_joint = log_g + model.transition_log_density(x, x_prev, n + 1) + log_joint[a]

        try:
            w, log_total = log_normalize(log_w)
        except ParticleCollapse:
            raise ParticleCollapse(step=n + 1) from None
        log_w_norm = log_w - log_total
        states[n] = x
        ancestors[n] = a
        weights[n] = w
        ess_hist[n] = ess(w)
        if track:
            joint_hist[n] = log_joint

    system = ParticleSystem(x, log_w, w, log_joint)
    return FilterOutput(system, Genealogy(ancestors, flags), states, weights, ess_hist, joint_hist)


def bpf(model: StateSpaceModel, y, cfg: FilterConfig, rng: np.random.Generator) -> FilterOutput:
    """Bootstrap particle filter with adaptive offspring selection.

    Deterministic schemes receive weights or joint likelihoods according to
    their input mode; stochastic ones receive weights. After selection the
    carried weights reset to one.
    """
    return _run(model, y, cfg, rng)


def bpf_with_likelihood(model: StateSpaceModel, y, cfg: FilterConfig, rng: np.random.Generator) -> FilterOutput:
    """Bootstrap particle filter that also tracks ``log p(x_{1:n}, y_{1:n})`` per particle.

    The joint is re-indexed through the ancestors at every selection, so it
    always belongs to the particle's own path.
    """
    if not cfg.track_likelihood:
        cfg = FilterConfig(cfg.S, cfg.scheme, True, cfg.ess_threshold_fraction)
    return _run(model, y, cfg, rng)


def conditional_smc(model: StateSpaceModel, y, cfg: FilterConfig, reference, rng: np.random.Generator):
    """Conditional SMC sweep with the last particle pinned to ``reference``.

    Returns:
        (output, b): the filter output and the drawn final index.
    """
    out = _run(model, y, cfg, rng, reference=reference)
    if cfg.scheme.likelihood:
        p, _ = log_normalize(out.final_system.log_joint)
    else:
        p = out.final_system.norm_weights
    b = int(rng.choice(out.S, p=p))
    return out, b


def csmc_kernel(model: StateSpaceModel, y, cfg: FilterConfig, reference, rng: np.random.Generator) -> np.ndarray:
    """Particle Gibbs kernel: one conditional SMC sweep, returns the drawn path."""
    out, b = conditional_smc(model, y, cfg, reference, rng)
    return out.trajectory(b)
