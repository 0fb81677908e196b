"""Which rates admit a stationary product measure in the tracer frame?

For every pair (theta_left, theta_right) the verifier computes E[L phi]
exactly (up to a certified truncation tail) for 448 indicator functions phi
around the tracer. A measure is stationary only if all of them vanish.
Exponential rates have a whole line of solutions, theta_left - theta_right =
beta. Perturbing a single rate value by 10% removes every solution.

Run:  python demos/04_which_rates_allow_a_stationary_shock.py     (about 30 seconds)
"""

import numpy as np

from bricklayers import rates
from bricklayers import verifier as V

grid = np.linspace(-2.0, 2.0, 21)
for name, rf in (("EBL beta = 1", rates.make_ebl(1.0)), ("a_2 x 1.1", rates.perturbed_ebl(1.0, 2, 1.1))):
    scan = V.theorem_scan(rf, grid)
    print(f"\n{name}: log10 of the max residual, rows theta_left, columns theta_right")
    print("        " + " ".join(f"{t:+5.1f}" for t in grid[::2]))
    for i in range(0, len(grid), 2):
        cells = " ".join(f"{np.log10(max(v, 1e-17)):5.1f}" for v in scan.max_residual[i, ::2])
        print(f"  {grid[i]:+5.1f} {cells}")
    pairs = [(round(a, 2), round(b, 2)) for (a, b, _), ok in zip(scan.rows(), scan.consistent.ravel()) if ok]
    print(f"  stationary pairs: {len(pairs)}" + (f", all with theta_l - theta_r = "
          f"{sorted({round(a - b, 6) for a, b in pairs})}" if pairs else ""))
    print(f"  smallest residual {scan.minimum:.2e} at {tuple(round(v, 2) for v in scan.argmin)}")

print("\nAlong the diagonal theta_left = theta_right nothing is stationary either:")
diag = V.diagonal_scan(rates.make_ebl(1.0), np.linspace(-2, 2, 9))
print("  " + ", ".join(f"{t:+.1f}: {r:.3f}" for t, r in zip(diag.offsets, diag.max_residual)))
