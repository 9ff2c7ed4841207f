"""
Polynomial surrogate of the power flow
======================================

Replacing the trigonometric terms with their cubic Taylor polynomials turns
the injections into polynomials.  The remainder bound limits both the
pointwise error and the shift of the certified envelope.
"""

import numpy as np

from droopcert import load_bundled, power_envelope, taylor3_power, taylor_remainder_bound
from droopcert.powerflow import coupling, injection_at
from droopcert.verify import envelope_boxes

model, spec = load_bundled()
rng = np.random.default_rng(0)

for i in model.node_ids:
    bound = taylor_remainder_bound(model, i, spec)
    box = envelope_boxes(model, i, spec)["p_max"]
    lo, hi = box.bounds()
    x = rng.uniform(lo, hi, size=(50_000, len(lo)))
    poly = taylor3_power(model, i, "active")
    err = np.max(np.abs(injection_at(coupling(model, i, "active"), x) - poly(x)))
    exact = power_envelope(model, i, spec)
    approx = power_envelope(model, i, spec, form="taylor3")
    shift = max(abs(exact.P_max - approx.P_max), abs(exact.P_min - approx.P_min),
                abs(exact.Q_max - approx.Q_max), abs(exact.Q_min - approx.Q_min))
    print(f"node {i}: sampled error {err:.2e}, envelope shift {shift:.2e}, bound {bound:.2e}")

print("polynomial for node 1 active power:")
print(taylor3_power(model, 1, "active"))
