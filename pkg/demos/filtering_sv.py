"""Filter one simulated stochastic-volatility series with every scheme.

Prints per-scheme losses for the three estimators and how quickly each
genealogy collapses onto few time-1 ancestors.

    python3 demos/filtering_sv.py
"""

import numpy as np

from reshuffle import FilterConfig, SVModel, bpf, estimate, loss, simulate
from reshuffle.selection import SCHEME_NAMES

model = SVModel(sigma=1.0, beta=0.5, phi=0.91)
x, y = simulate(model, 200, np.random.default_rng(7))
S = 200
threshold = model.transition_noise_std() / 2

print(f"{'scheme':<12}{'L2 mmse':>10}{'L1 mmae':>10}{'L01 map':>10}{'ancestors@n=200':>18}")
for i, name in enumerate(SCHEME_NAMES):
    out = bpf(model, y, FilterConfig(S, name), np.random.default_rng(100 + i))
    l2 = loss(x, estimate(out, "mmse"), "l2")
    l1 = loss(x, estimate(out, "mmae"), "l1")
    l01 = loss(x, estimate(out, "map"), "l01", threshold)
    distinct = out.genealogy.distinct_ancestor_counts()[-1]
    print(f"{name:<12}{l2:>10.3f}{l1:>10.3f}{l01:>10.3f}{distinct:>18d}")
