"""FTDR field of a double well along a line of seeds.

Expansion is largest near the saddle at 0 and smallest inside the wells.
"""
import numpy as np

from luq import sde
from luq.divergence import catalog
from luq.ftdr import ftdr_field
from luq.sde import RngSpec

seeds = np.linspace(-1.5, 1.5, 7)
f = ftdr_field(sde.double_well(1.0, 1.0, 0.3), catalog("kl"), seeds, 0.1, 0.0, 1.0, 4000, RngSpec(0),
               dt=1e-2, n_boot=10)
for x, v, e in zip(f.seeds[:, 0], f.values, f.stderr):
    print(f"x={x:+.2f}  ftdr={v:8.4f} +- {e:.4f}")
