# coding: utf-8

# # How the large bank's weight changes default risk
#
# G is the weight small banks give to the large bank when they choose a
# target. G = 0 means there is no large bank at all. Every G in the sweep
# uses the same random numbers, so differences between rows come from the
# model and not from sampling noise.

import numpy as np

from interbank_mfg import MarketParams, SimSettings, sweep_size_G

settings = SimSettings(seed=7, N=10, n_paths=10_000)
sweep = sweep_size_G(MarketParams(), [0.1, 0.3, 0.5, 0.7, 0.9], settings)

base = sweep.select("baseline")[0].report
print(f"no large bank: P(small bank defaults) = {base.pi:.4f} +/- {base.se_pi:.4f}")

# ## Conditioning on the large bank's fate
#
# If the large bank defaults, small banks are dragged down with it. That
# gets worse as G grows. If the large bank survives, it acts as an anchor
# and small banks default less often than in the market without it.

print(" G    pi|MD    pi|MS   pSE|MD   pSE|MS")
for r in sweep.select("with_major"):
    rep = r.report
    print(f"{r.value:.1f}  {rep.pi_given_MD:.4f}  {rep.pi_given_MS:.4f}  {rep.pSE_given_MD:.4f}  {rep.pSE_given_MS:.4f}")

G, md, se = sweep.series("with_major", "pi_given_MD")
print("consecutive changes in pi|MD, in units of their standard error:")
print(np.round(np.diff(md) / np.hypot(se[1:], se[:-1]), 1))
