# coding: utf-8

# # Feedback coefficients of the equilibrium
#
# Each bank's control is a time-varying gain times the gap between a target
# and its own reserves. The gains come from two backward Riccati equations:
# one for the small banks and one for the large bank. This script solves them
# and shows how strongly each kind of bank pulls towards its target over the
# horizon.

import numpy as np

from interbank_mfg import MarketParams, solve_riccati, solve_major_lqr_oracle, build_extended_system, validate_params

p = validate_params(MarketParams.from_clearing(a=5.0, G=0.5))
print(p)

# ## Three ways to close the large bank's equation
#
# The large bank's coefficient can be written three ways. Two of them come
# from printed closed forms. The third is derived directly from the
# extended linear-quadratic problem. The matrix oracle solves that problem
# with no reduction at all.

sols = {m: solve_riccati(p, m) for m in ("theorem", "derivation", "oracle")}
for name, rs in sols.items():
    print(f"{name:>10}: phi(0)={rs.phi[0]: .6f}  phi0(0)={rs.phi0[0]: .6f}")

oracle = solve_major_lqr_oracle(build_extended_system(p), sols["derivation"])
gap = np.max(np.abs(oracle.implied_phi0 - sols["derivation"].phi0))
print("derived form vs matrix oracle, max difference:", gap)

# ## Mean-reversion rates
#
# A small bank reverts at rate a + q - phi. The large bank reverts at
# a0 + q0 - phi0. Both rates rise towards the end of the horizon, when
# there is no future left to borrow against.

rs = sols["derivation"]
minor_rate, major_rate = rs.mean_reversion_levels(p)
for t in (0.0, 0.25, 0.5, 0.75, 1.0):
    k = int(round(t * (len(rs.grid) - 1)))
    print(f"t={t:4.2f}  minor rate={minor_rate[k]:7.4f}  major rate={major_rate[k]:7.4f}")
