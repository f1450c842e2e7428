"""State estimators read off a filter run, and per-step losses against ground truth.

``mmse`` and ``mmae`` weight every final particle's ancestral path by its
final weight, so each step is judged with all observations. With
``smoothed=False`` they summarize the particle cloud at each step under
that step's own weights instead. ``map`` and ``sampled`` always return one
ancestral path.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from reshuffle.filters import FilterOutput

ESTIMATORS = ("map", "mmae", "mmse", "sampled")
LOSSES = ("l01", "l1", "l2")

# Bayesian estimator matching each loss
ESTIMATOR_FOR_LOSS = {"l01": "map", "l1": "mmae", "l2": "mmse"}


def weighted_median(values, weights) -> float:
    """Smallest value whose cumulative weight (values ascending) reaches one half."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(np.asarray(weights, dtype=float)[order])
    k = int(np.searchsorted(cum, 0.5 * cum[-1] * (1 - 1e-12), side="left"))
    return float(values[order[min(k, values.size - 1)]])


def estimate(
    out: FilterOutput,
    kind: str,
    rng: Optional[np.random.Generator] = None,
    smoothed: bool = True,
) -> np.ndarray:
    """Per-step state estimate of length N.

    Args:
        out: completed filter run.
        kind: ``map`` (path of the heaviest final particle), ``mmae``
            (weighted median), ``mmse`` (weighted mean) or ``sampled`` (path
            of one particle drawn from the final weights).
        rng: required for ``sampled``.
        smoothed: weight ancestral paths by the final weights (default);
            False uses each step's own weights (``mmse``/``mmae`` only).
    """
    w = out.final_system.norm_weights
    if kind == "map":
        return out.trajectory(int(np.argmax(w)))
    if kind == "sampled":
        if rng is None:
            raise ValueError("the sampled estimator needs a random generator")
        return out.trajectory(int(rng.choice(w.size, p=w)))
    if kind not in ("mmse", "mmae"):
        raise ValueError(f"unknown estimator {kind!r}")
    if smoothed:
        values = out.trajectories()
        weights = np.broadcast_to(w, values.shape)
    else:
        values, weights = out.stored_states, out.weight_history
    if kind == "mmse":
        return np.einsum("ns,ns->n", values, weights)
    return np.array([weighted_median(v, q) for v, q in zip(values, weights)])


def loss(x_true, x_hat, kind: str, threshold: Optional[float] = None) -> float:
    """Average loss per time step.

    ``l01`` counts steps with ``|x - x_hat| > threshold`` (the model's
    transition noise std over two); ``l1`` and ``l2`` are absolute and
    squared error.
    """
    x_true = np.asarray(x_true, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x_true.shape != x_hat.shape:
        raise ValueError(f"length mismatch: {x_true.shape} vs {x_hat.shape}")
    diff = np.abs(x_true - x_hat)
    if kind == "l01":
        if threshold is None or not threshold > 0:
            raise ValueError("l01 loss needs a positive threshold")
        return float(np.mean(diff > threshold))
    if kind == "l1":
        return float(np.mean(diff))
    if kind == "l2":
        return float(np.mean(diff**2))
    raise ValueError(f"unknown loss {kind!r}")
