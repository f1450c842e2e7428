"""Deterministic offspring selection on a handful of weights.

Compares KL and TV reshuffling with the stochastic resamplers and checks the
greedy answers against exhaustive search.

    python3 demos/reshuffling_basics.py
"""

import numpy as np

from reshuffle import (
    brute_force_kl_optimum,
    brute_force_tv_optimum,
    kl_objective,
    kl_reshuffle,
    ml_select,
    stratified_resample,
    systematic_resample,
    tv_objective,
    tv_reshuffle,
)
from reshuffle.particles import ancestors_to_multiplicity

w = np.array([0.4, 0.3, 0.2, 0.1])
S = w.size
rng = np.random.default_rng(1)

print("weights         ", w)
print("S * w           ", S * w)
print("kl reshuffle    ", kl_reshuffle(w), f"objective {kl_objective(w, kl_reshuffle(w)):.4f}")
print("tv reshuffle    ", tv_reshuffle(w), f"distance {tv_objective(w, tv_reshuffle(w)):.4f}")
print("ml selection    ", ml_select(w))
for name, fn in [("stratified", stratified_resample), ("systematic", systematic_resample)]:
    draws = [ancestors_to_multiplicity(fn(w, rng), S) for _ in range(3)]
    print(f"{name:<16}", " ".join(str(d) for d in draws))

# exhaustive search agrees with the greedy allocations
kl_best, kl_val = brute_force_kl_optimum(w)
tv_best, tv_val = brute_force_tv_optimum(w)
print("\nexhaustive kl   ", kl_best, f"objective {kl_val:.4f}")
print("exhaustive tv   ", tv_best, f"distance {tv_val:.4f}")

# joint likelihoods far below the double range stay usable in log space
log_lik = np.array([-4000.0, -4001.2, -4000.4, -4003.0])
print("\nlog-space kl    ", kl_reshuffle(log_lik, log=True))
print("log-space tv    ", tv_reshuffle(log_lik, log=True))
