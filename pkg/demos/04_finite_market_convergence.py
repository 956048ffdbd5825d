# coding: utf-8

# # Finite markets approach the mean field
#
# With N small banks, their empirical average x^(N) wanders around the
# mean-field average. The large bank's noise is shared between the finite
# and limiting systems, so the remaining gap is due to the small banks'
# own noise. It should shrink roughly like 1/sqrt(N).

import numpy as np

from interbank_mfg import MarketParams, SimSettings, convergence_study

res = convergence_study(MarketParams(), [10, 40, 160], SimSettings(seed=7, n_paths=500))
for row in res.rows():
    print(f"N={row['N']:4d}  median sup|x^N - xbar| = {row['median_sup_average']:.4f}")

ratios = res.median_sup_average[:-1] / res.median_sup_average[1:]
print("ratio per 4x increase in N (about 2 expected):", np.round(ratios, 2))
