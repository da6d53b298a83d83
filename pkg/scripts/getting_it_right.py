"""Joint-distribution check of the sampler.

Marginal-conditional: draw (theta, Y) from the prior and likelihood.
Successive-conditional: alternate Y | theta and one sampler sweep theta | Y.
Both must have the same theta marginal (the prior), so their means of tau
and beta agree up to Monte Carlo error. Proper priors are used throughout.
"""

import argparse

import numpy as np

from bmccsp import sampler
from bmccsp.diagnostics import batch_means_variance
from bmccsp.panel import PanelData
from bmccsp.stiefel import GmcConfig


def run(n, seed, collapsed_steps=2):
    J, T, H, L = 3, 4, 2, 1
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((J, T, L))
    mask = np.zeros((J, T), dtype=int)
    mask[2, 2:] = 1
    cfg = sampler.SamplerConfig(rank=H, nu1=3.0, nu2=3.0, alpha=1.0, gmc=GmcConfig(step=0.1),
                                collapsed_steps=collapsed_steps)
    base = PanelData(np.zeros((J, T)), mask, X)

    marginal = np.empty((n, 2))
    for i in range(n):
        s = sampler.prior_state(base, H, cfg, rng)
        marginal[i] = s.tau, s.beta[0]
    chain = np.empty((n, 2))
    st = sampler.prior_state(base, H, cfg, rng)
    for i in range(n):
        y = sampler.simulate_outcomes(st, base, rng)
        st.y_complete = y.copy()
        st, _, _ = sampler.sweep(st, PanelData(y, mask, X), cfg, 0.1, rng)
        chain[i] = st.tau, st.beta[0]

    for k, name in enumerate(("tau", "beta")):
        for power in (1, 2):
            a, b = marginal[:, k] ** power, chain[:, k] ** power
            se = np.sqrt(a.var() / n + batch_means_variance(b) / n)
            print(f"E[{name}^{power}]  marginal {a.mean():9.4f}  successive {b.mean():9.4f}  "
                  f"z {(a.mean() - b.mean()) / se:+.2f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-n", type=int, default=50_000)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--collapsed-steps", type=int, default=2)
    args = ap.parse_args()
    run(args.n, args.seed, args.collapsed_steps)
