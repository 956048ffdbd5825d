# coding: utf-8

# # Is it an equilibrium?
#
# A small bank is given a deviation u* + delta * w, while everyone else keeps
# the equilibrium strategy. If the strategies are a Nash equilibrium, the
# bank's expected cost can only go up, and by roughly delta squared.

from interbank_mfg import MarketParams, SimSettings
from interbank_mfg.validate import minor_gap_study, mode_comparison

settings = SimSettings(seed=7, n_paths=2000)
study = minor_gap_study(MarketParams(), settings, N_values=(10,), n_directions=4)
for r in study.results[10]:
    print(f"{r.label:>10}", "gaps:", " ".join(f"{g:+.4f}" for g in r.gap), " curvature:", round(float(r.curvature), 3))
print("epsilon at N=10:", study.epsilon(10))

# ## Comparing closed forms for the large bank
#
# The large bank's gain can be written several ways. Feedback deviations
# show which form is actually a best response: a lower cost reachable
# by deviating gives a positive epsilon.

rep = mode_comparison(MarketParams.from_clearing(a=5.0, G=0.5), settings)
for name, m in rep["modes"].items():
    print(f"{name:>10}: phi0(0)={m['phi0_at_0']:+.4f}  epsilon={m['epsilon']:.2e}")
print("best:", rep["best_variant"])
