"""Observable error bounds for a Gaussian mean shift.

Compares the phi-divergence bounds with Chapman-Robbins and the TV bound for
a few observables, and shows the linearized bound tracking the shift m.
"""
import numpy as np

from luq.bounds import information_bounds, linearized_bound
from luq.divergence import catalog
from luq.grid import Grid, gaussian_density

grid = Grid.line(-12, 12, 2401)
nu = gaussian_density(grid, 0.0, 1.0)
kl = catalog("kl")

for m in (0.01, 0.05, 0.1, 0.3):
    mu = gaussian_density(grid, m, 1.0)
    rep = information_bounds(kl, mu, nu, lambda x: x)
    print(f"m={m:5.2f}  gap={rep.gap:+.5f}  B+={rep.b_plus:.5f}  B-={rep.b_minus:+.5f}  "
          f"lin={linearized_bound(kl, nu, lambda x: x, rep.divergence):.5f}  CR={rep.cr_bound:.5f}")

print()
mu = gaussian_density(grid, 0.4, 1.2)
for name, f in (("tanh", np.tanh), ("sin", np.sin), ("x>0", lambda x: (x > 0) * 1.0)):
    for phi in (kl, catalog("hellinger"), catalog("chi2")):
        rep = information_bounds(phi, mu, nu, f)
        print(f"{name:5s} {phi.label:10s} gap={rep.gap:+.4f}  [{rep.b_minus:+.4f}, {rep.b_plus:+.4f}]"
              f"  TV={rep.tv_bound:.4f}")
