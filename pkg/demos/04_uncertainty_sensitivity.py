"""
Sensitivity to the neighbour uncertainty
========================================

Tighter knowledge of the neighbours (a smaller voltage coupling band or a
narrower angle box) shrinks the reactive power envelope and so permits a
larger voltage droop.
"""

import math

import numpy as np

from droopcert import load_bundled, sensitivity_sweep

model, spec = load_bundled()
i = 1

sw = sensitivity_sweep(model, i, spec, "delta_v", np.linspace(0.0, 0.2, 6))
print("delta_v  lambda_q*   Q_min     Q_max")
for x, lq, qmax, qmin in sw.rows():
    print(f"{x:6.3f}  {lq:8.4f}  {qmin:8.4f}  {qmax:8.4f}")

sw = sensitivity_sweep(model, i, spec, "s_theta_halfwidth", np.linspace(0.1, math.pi / 6, 6))
print("theta half-width  lambda_q*")
for x, lq, _, _ in sw.rows():
    print(f"{x:8.3f}          {lq:8.4f}")

# the voltage safe set width works the other way: more room, larger droop
sw = sensitivity_sweep(model, i, spec, "s_v_width", [0.3, 0.45, 0.6])
for x, lq, _, _ in sw.rows():
    print(f"S_v width {x:.2f}: lambda_q* = {lq:.4f}")
