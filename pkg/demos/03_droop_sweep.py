"""
Droop sweep
===========

The admissible interval shrinks as the droop gain grows.  Its endpoints are
hyperbolae in the gain and they cross at the maximal droop.
"""

import numpy as np

from droopcert import droop_sweep, load_bundled

model, spec = load_bundled()
i = 3

grid = np.linspace(1, 40, 14)
sw = droop_sweep(model, i, spec, grid, "p")
print(f"node {i}, frequency channel, lambda* = {sw.lambda_star:.4f}")
print(" lambda    lower     upper   nonempty")
for lam, lo, hi, ok in sw.rows():
    print(f"{lam:7.2f} {lo:9.4f} {hi:9.4f}   {ok}")
j = sw.crossing
print(f"interval closes between {grid[j]:.2f} and {grid[j + 1]:.2f}")

# the same for the voltage channel with a finer grid
grid = np.linspace(0.05, 0.5, 10)
sw = droop_sweep(model, i, spec, grid, "q")
print(f"voltage channel: lambda* = {sw.lambda_star:.4f}")
for lam, lo, hi, ok in sw.rows():
    print(f"{lam:7.3f} {lo:9.4f} {hi:9.4f}   {ok}")
