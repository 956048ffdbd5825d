# coding: utf-8

# # Lending friction
#
# The rate a sets how fast banks lend and borrow towards their target.
# Small banks always use half of the target weight for the large bank
# (F = G = 0.5), and the large bank's own rate is a0 = a/2.

from interbank_mfg import MarketParams, SimSettings, sweep_friction_a

settings = SimSettings(seed=7, N=10, n_paths=10_000)
sweep = sweep_friction_a(MarketParams(), [1.0, 5.0, 10.0, 15.0, 20.0], settings)

# Without a large bank, faster lending spreads shocks out and individual
# defaults become rarer. The chance of a system-wide event does not move,
# because the market average has no drift at all.

print(" a   pi(no major)  pSE(no major)  pi|MD  pSE|MD")
for nm, wm in zip(sweep.select("no_major"), sweep.select("with_major")):
    print(f"{nm.value:4.0f}  {nm.report.pi:.4f}        {nm.report.pSE:.4f}         "
          f"{wm.report.pi_given_MD:.4f} {wm.report.pSE_given_MD:.4f}")

# With a large bank that defaults, faster lending passes its losses on
# more quickly. So conditional risk rises with a.
