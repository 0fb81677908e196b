"""Canonical Gibbs marginals of the bricklayers' model.

Each site carries a slope w (the height difference of two neighbouring
columns). The one-site stationary laws form a family

    mu^(theta)(z) = exp(theta z) / (r(|z|)! Z(theta)),

and for exponential rates r(z) = exp(-beta/2 + beta z) they are discrete
Gaussians whose mean jumps by exactly one when theta moves by beta. This
script prints the marginals, checks the identities that make them stationary
and tabulates the flux J(u) = 2 cosh(theta(u)).

Run:  python demos/01_gibbs_marginals.py
"""

import math

import numpy as np

from bricklayers import gibbs, rates

rf = rates.make_ebl(1.0)

print("One-site law at beta = 1, theta = 0")
m = gibbs.build_marginal(rf, 0.0)
for z, p in zip(m.support, m.pmf):
    if p > 1e-4:
        print(f"  z = {z:+d}   mu(z) = {p:.6f}")
print(f"  Z(0) = {math.exp(m.log_Z):.10f}, tail bound {m.tail_bound:.1e}")

# r(z) mu(z) / mu(z-1) = e^theta is what makes every product measure stationary
theta = 0.7
m = gibbs.build_marginal(rf, theta)
z = m.support[1:]
ratio = np.exp(rf.log_rate(z) + m.log_pmf(z) - m.log_pmf(z - 1))
print(f"\nr(z) mu(z) / mu(z-1) at theta = {theta}: spread {np.ptp(ratio):.1e} around e^theta = {math.exp(theta):.6f}")

print("\nDensity u(theta) and its period-beta structure")
for t in (-1.0, -0.5, 0.0, 0.5, 1.0):
    u = round(gibbs.mean_u(rf, t), 12) + 0.0
    print(f"  theta = {t:+.1f}   u = {u:+.6f}   u(theta + beta) - u(theta) = "
          f"{gibbs.mean_u(rf, t + 1) - gibbs.mean_u(rf, t):.12f}")

print("\nFlux and convexity")
for t in (0.0, 0.5, 1.0, 2.0):
    u = round(gibbs.mean_u(rf, t), 12) + 0.0
    print(f"  u = {u:+.4f}   J = {gibbs.flux_J(rf, u):.6f} (2 cosh theta = {2 * math.cosh(t):.6f})   "
          f"J'' = {gibbs.flux_convexity(rf, t):.4f}")

pert = rates.perturbed_ebl(1.0, n=2, factor=1.1)
print(f"\nWith a_2 inflated by 10% the flux is still convex on {gibbs.convexity_interval(pert, (-2, 2), 0.01)}")
print(f"and the shock between theta = 1 and 0 moves at s = {gibbs.rh_speed(rf, 1.0, 0.0):.9f} for EBL rates.")
