"""Reconstruction bound for two OU processes and a double well against OU.

The densities come from the Fokker-Planck solver; Theta is reconstructed
from the model coefficients.
"""
import numpy as np

from luq import sde
from luq.divergence import catalog
from luq.grid import Grid, gaussian_density
from luq.kolmogorov import fpe_solve
from luq.reconstruction import divergence_bound_reconstruction, theta_field

kl = catalog("kl")
grid = Grid.line(-8, 8, 641)
rho0 = gaussian_density(grid, 0.5, 0.25)
times = np.linspace(0, 1, 41)

pairs = {
    "OU b=1 vs b=2": (sde.ou(1.0), sde.ou(2.0)),
    "OU sigma 1 vs 1.5": (sde.ou(1.0, 1.0), sde.ou(1.0, 1.5)),
    "double well vs OU": (sde.double_well(-0.5, 0.2, 1.0), sde.ou(0.5, 1.0)),
}
for name, (mm, mn) in pairs.items():
    sm = fpe_solve(mm, rho0, 0.0, 1.0, record_times=times)
    sn = fpe_solve(mn, rho0, 0.0, 1.0, record_times=times)
    res = divergence_bound_reconstruction(kl, sm, sn, theta_field(mm, mn, sm), mn)
    print(f"{name:20s} KL={res.lhs:.5f}  bound={res.rhs:.5f}  margin={res.margin:+.5f}")
