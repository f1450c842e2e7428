"""Particle Gibbs on simulated SV data, weight-based versus likelihood-based TV.

The likelihood-based variant keeps reselecting the single most probable
path, and the state noise variance drifts towards zero.

    python3 demos/particle_gibbs_sv.py
"""

import logging

import numpy as np

from reshuffle import PGConfig, SVModel, acf, chain_median, particle_gibbs, simulate

# once sigma2 collapses the phi sampler keeps hitting its try cap; that is
# expected here, so its warnings are muted
logging.getLogger("reshuffle.gibbs").setLevel(logging.ERROR)

_, y = simulate(SVModel(1.0, 0.5, 0.91), 100, np.random.default_rng(3))

for scheme in ("tv_w", "tv_p"):
    chain = particle_gibbs(y, PGConfig(S=10, M=600, scheme=scheme), rng=np.random.default_rng(11))
    kept = slice(100, None)
    print(f"{scheme}: median sigma2 {chain_median(chain.sigma2[kept], 500):.4f}, "
          f"beta {chain_median(chain.beta[kept], 500):.3f}, phi {chain_median(chain.phi[kept], 500):.3f}")
    rho = acf(chain.phi[kept], 20)
    print(f"      phi ACF at lags 1, 5, 20: {rho[1]:.2f} {rho[5]:.2f} {rho[20]:.2f}")
