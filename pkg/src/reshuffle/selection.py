"""Offspring selection: KL and TV reshuffling, ML selection and stochastic resampling.

Deterministic schemes return multiplicity vectors (offspring counts per
particle, in the caller's particle order). Stochastic schemes return sorted
ancestor index lists. ``SelectionScheme.select`` gives both families the
same ancestor-list interface.

Every scheme accepts values either in linear space or, with ``log=True``,
as logarithms. Joint likelihoods underflow doubles after a few dozen time
steps, so the filters always pass logs.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Optional

import numpy as np
from scipy.special import xlogy

from reshuffle.particles import log_normalize, multiplicity_to_ancestors

BRUTE_FORCE_MAX_S = 10

# relative gap below which two greedy gains count as tied
_TIE_RTOL = 1e-12


def _as_log(u, log: bool) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("selection input must be a non-empty 1-d vector")
    if log:
        if np.any(np.isnan(u)) or np.any(u == np.inf):
            raise ValueError("log-space selection input must be finite or -inf")
        if not np.any(np.isfinite(u)):
            raise ValueError("all selection inputs are zero")
        return u
    if np.any(~np.isfinite(u)) or np.any(u < 0):
        raise ValueError("selection input must be finite and non-negative")
    if not np.any(u > 0):
        raise ValueError("all selection inputs are zero")
    with np.errstate(divide="ignore"):
        return np.log(u)


def _check_S(S, K: int) -> int:
    S = K if S is None else int(S)
    if S < 1:
        raise ValueError("S must be at least 1")
    return S


def _gain_offset(a):
    # (a+1) log(a+1) - a log a, the count-dependent part of C+(a, s)
    return xlogy(a + 1, a + 1) - xlogy(a, a)


def kl_reshuffle(u, S: Optional[int] = None, log: bool = False) -> np.ndarray:
    """Multiplicities maximizing ``sum_s a_s log(u_s / a_s)`` over integer vectors summing to S.

    Greedy: start from zero counts and repeatedly give one offspring to the
    particle with the largest gain ``C+(a, s) = f(a+1, s) - f(a, s)``, kept
    in a max-heap. Gains are decreasing in ``a``, which makes the greedy
    allocation optimal. Ties go to the larger ``u``, then the lower index.

    Args:
        u: [K] normalized weights, unnormalized weights or joint
            likelihoods. Only ratios matter.
        S: number of offspring; defaults to ``len(u)``.
        log: ``u`` holds logarithms (``-inf`` allowed for zero mass).

    Returns:
        [K] integer counts in the original particle order.
    """
    lu = _as_log(u, log)
    K = lu.size
    S = _check_S(S, K)
    # position in descending-u order is the tie-break key
    order = np.lexsort((np.arange(K), -lu))
    lu_sorted = lu[order]
    counts = np.zeros(K, dtype=np.int64)

    # f(0, s) = 0, so the first gain is log u
    heap = [(-lu_sorted[p], p) for p in range(K)]
    heapq.heapify(heap)
    for _ in range(S):
        key, pos = heapq.heappop(heap)
        if np.isfinite(key) and heap:
            tol = _TIE_RTOL * max(1.0, abs(key))
            tied = []
            while heap and heap[0][0] - key <= tol:
                tied.append(heapq.heappop(heap))
            if tied:
                tied.append((key, pos))
                best = min(tied, key=lambda e: e[1])
                for entry in tied:
                    if entry is not best:
                        heapq.heappush(heap, entry)
                key, pos = best
        counts[pos] += 1
        heapq.heappush(heap, (-(lu_sorted[pos] - _gain_offset(counts[pos])), pos))

    out = np.empty(K, dtype=np.int64)
    out[order] = counts
    return out


def tv_reshuffle(u, S: Optional[int] = None, log: bool = False) -> np.ndarray:
    """Multiplicities minimizing ``0.5 * sum_s |w_s - a_s / S|``.

    Greedy rounding of ``S * w``: every particle keeps ``floor(S w_s)`` and
    the ``K = S - sum floor(S w)`` particles with the largest fractional
    parts get one more. ``K`` is an exact integer. Ties in the fractional
    part go to the lower index.
    """
    lu = _as_log(u, log)
    w, _ = log_normalize(lu)
    S = _check_S(S, w.size)
    scaled = w * S
    counts = np.floor(scaled).astype(np.int64)
    frac = scaled - counts
    extra = S - int(counts.sum())
    order = np.argsort(-frac, kind="stable")
    if extra >= 0:
        counts[order[:extra]] += 1
    else:
        # only reachable through rounding of w; strip the smallest remainders
        for s in order[::-1]:
            if extra == 0:
                break
            if counts[s] > 0:
                counts[s] -= 1
                extra += 1
    return counts


def ml_select(u, S: Optional[int] = None, log: bool = False) -> np.ndarray:
    """All ``S`` offspring to the particle with the largest ``u`` (lowest index on ties)."""
    lu = _as_log(u, log)
    S = _check_S(S, lu.size)
    counts = np.zeros(lu.size, dtype=np.int64)
    counts[int(np.argmax(lu))] = S
    return counts


def _cdf(w) -> np.ndarray:
    cdf = np.cumsum(np.asarray(w, dtype=float))
    cdf /= cdf[-1]
    cdf[-1] = 1.0
    return cdf


def _invert(cdf: np.ndarray, points: np.ndarray) -> np.ndarray:
    # point u goes to the particle whose interval [cdf[s-1], cdf[s]) holds it
    idx = np.searchsorted(cdf, points, side="right")
    return np.minimum(idx, cdf.size - 1)


def stratified_resample(w, rng: np.random.Generator) -> np.ndarray:
    """One uniform draw inside each of the ``S`` equal strata of [0, 1)."""
    S = len(w)
    points = (np.arange(S) + rng.uniform(size=S)) / S
    return _invert(_cdf(w), points)


def systematic_resample(w, rng: np.random.Generator) -> np.ndarray:
    """A single uniform offset on [0, 1/S) followed by an evenly spaced grid."""
    S = len(w)
    points = rng.uniform(0.0, 1.0 / S) + np.arange(S) / S
    return _invert(_cdf(w), points)


def multinomial_resample(w, rng: np.random.Generator) -> np.ndarray:
    """``S`` iid categorical draws from ``w``, sorted."""
    S = len(w)
    return np.sort(_invert(_cdf(w), rng.uniform(size=S)))


def kl_objective(u, a, log: bool = False) -> float:
    """``sum_s a_s log(u_s / a_s)`` with the convention ``0 log(u/0) = 0``."""
    lu = _as_log(u, log)
    a = np.asarray(a, dtype=float)
    pos = a > 0
    return float(np.sum(a[pos] * lu[pos]) - np.sum(xlogy(a, a)))


def tv_objective(w, a) -> float:
    """``0.5 * sum_s |w_s - a_s / S|`` with ``S = sum(a)``."""
    w = np.asarray(w, dtype=float)
    a = np.asarray(a, dtype=float)
    return float(0.5 * np.abs(w - a / a.sum()).sum())


@lru_cache(maxsize=None)
def _compositions(S: int, K: int) -> np.ndarray:
    rows = np.empty((comb(S + K - 1, K - 1), K), dtype=np.int64)
    for r, bars in enumerate(itertools.combinations(range(S + K - 1), K - 1)):
        edges = (-1,) + bars + (S + K - 1,)
        rows[r] = np.diff(edges) - 1
    rows.setflags(write=False)
    return rows


def compositions(S: int, K: int) -> np.ndarray:
    """All non-negative integer vectors of length ``K`` summing to ``S``, one per row."""
    return _compositions(int(S), int(K)).copy()


def _enumerate(u, S, log):
    lu = _as_log(u, log)
    S = _check_S(S, lu.size)
    if S > BRUTE_FORCE_MAX_S or lu.size > BRUTE_FORCE_MAX_S:
        raise ValueError(
            f"exhaustive search refuses S={S}, K={lu.size} (limit {BRUTE_FORCE_MAX_S})"
        )
    return lu, S, _compositions(S, lu.size)


def _pick(cands: np.ndarray, scores: np.ndarray, lu: np.ndarray, maximize: bool):
    best = scores.max() if maximize else scores.min()
    tol = 1e-12 * max(1.0, abs(best))
    tied = cands[np.abs(scores - best) <= tol]
    # most skewed to the left: lexicographically largest in descending-u order
    order = np.lexsort((np.arange(lu.size), -lu))
    view = tied[:, order]
    pick = np.lexsort(view.T[::-1])[-1]
    return tied[pick], float(best)


def brute_force_kl_optimum(u, S: Optional[int] = None, log: bool = False):
    """Exhaustive maximizer of the KL reshuffling objective (small ``S`` only).

    Returns:
        (counts, objective). On ties the composition most skewed towards
        the large-``u`` particles wins.
    """
    lu, S, cands = _enumerate(u, S, log)
    safe_lu = np.where(np.isfinite(lu), lu, 0.0)
    scores = (cands * safe_lu).sum(axis=1) - xlogy(cands, cands).sum(axis=1)
    # any offspring on a zero-mass particle is infeasible
    dead = (cands[:, ~np.isfinite(lu)] > 0).any(axis=1)
    scores = np.where(dead, -np.inf, scores)
    return _pick(cands, scores, lu, maximize=True)


def brute_force_tv_optimum(w, S: Optional[int] = None, log: bool = False):
    """Exhaustive minimizer of the TV distance; returns (counts, distance)."""
    lu, S, cands = _enumerate(w, S, log)
    p, _ = log_normalize(lu)
    scores = 0.5 * np.abs(p - cands / S).sum(axis=1)
    return _pick(cands, scores, lu, maximize=False)


KINDS = ("kl", "tv", "ml", "stratified", "systematic", "multinomial")
STOCHASTIC = ("stratified", "systematic", "multinomial")

# fixed catalogue order; used to derive per-scheme random streams
SCHEME_NAMES = (
    "kl_w", "tv_w", "kl_p", "tv_p", "ml", "stratified", "systematic", "multinomial",
)

_DETERMINISTIC = {"kl": kl_reshuffle, "tv": tv_reshuffle, "ml": ml_select}
_STOCHASTIC = {
    "stratified": stratified_resample,
    "systematic": systematic_resample,
    "multinomial": multinomial_resample,
}


@dataclass(frozen=True)
class SelectionScheme:
    """An offspring selection rule and the quantity it reads.

    ``input_mode`` is ``"weight"`` (normalized importance weights) or
    ``"likelihood"`` (joint likelihoods ``p(x_{1:n}, y_{1:n})``).
    """

    kind: str
    input_mode: str = "weight"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown selection scheme {self.kind!r}")
        if self.input_mode not in ("weight", "likelihood"):
            raise ValueError(f"unknown input mode {self.input_mode!r}")
        if self.kind in STOCHASTIC and self.input_mode != "weight":
            raise ValueError(f"{self.kind} resampling only accepts weights")

    @classmethod
    def parse(cls, name: str) -> "SelectionScheme":
        """Build from a short name such as ``kl_w``, ``tv_p``, ``ml`` or ``stratified``."""
        name = name.strip().lower()
        if name in STOCHASTIC:
            return cls(name)
        if name in ("ml", "ml_p"):
            return cls("ml", "likelihood")
        if name == "ml_w":
            return cls("ml", "weight")
        kind, _, mode = name.partition("_")
        modes = {"w": "weight", "p": "likelihood"}
        if kind in ("kl", "tv") and mode in modes:
            return cls(kind, modes[mode])
        raise ValueError(f"unknown selection scheme {name!r}")

    @property
    def name(self) -> str:
        if self.kind in STOCHASTIC:
            return self.kind
        if self.kind == "ml":
            return "ml" if self.likelihood else "ml_w"
        return f"{self.kind}_{'p' if self.likelihood else 'w'}"

    @property
    def deterministic(self) -> bool:
        return self.kind not in STOCHASTIC

    @property
    def likelihood(self) -> bool:
        return self.input_mode == "likelihood"

    @property
    def ordinal(self) -> int:
        names = SCHEME_NAMES + ("ml_w",)
        return names.index(self.name)

    def multiplicities(self, log_weights, log_joint=None) -> np.ndarray:
        """Offspring counts from a deterministic scheme, given log-space inputs."""
        if not self.deterministic:
            raise TypeError(f"{self.kind} resampling is stochastic")
        values = log_joint if self.likelihood else log_weights
        if values is None:
            raise ValueError(f"{self.name} needs joint likelihoods")
        return _DETERMINISTIC[self.kind](values, log=True)

    def select(self, log_weights, log_joint=None, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Sorted ancestor indices for one selection step.

        Args:
            log_weights: [S] normalized log weights.
            log_joint: [S] log joint likelihoods; required in likelihood mode.
            rng: generator; required by the stochastic schemes.
        """
        if self.deterministic:
            return multiplicity_to_ancestors(self.multiplicities(log_weights, log_joint))
        if rng is None:
            raise ValueError(f"{self.kind} resampling needs a random generator")
        return _STOCHASTIC[self.kind](np.exp(log_weights), rng)

    def __str__(self) -> str:
        return self.name
