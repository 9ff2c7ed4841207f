"""
Network model and power flow
============================

Load the bundled four-inverter ring, look at its admittances and evaluate
the injected powers of one inverter for a given neighbour assignment.
"""

import math

import numpy as np

from droopcert import NodeAssignment, active_power, load_bundled, neighbors, reactive_power
from droopcert.powerflow import coupling, injection

model, spec = load_bundled()
print("nodes:", model.node_ids)
for ln in model.lines:
    print(f"line {ln.from_node}-{ln.to_node}: G={ln.conductance:+.3f} B={ln.susceptance:+.3f}")

# the safe set: frequency stored in Hz, used in rad/s
print("S_omega (rad/s):", spec.s_omega, " S_v (p.u.):", spec.s_v, " S_theta:", spec.s_theta)

# node 1 sees itself plus nodes 2 and 4
i = 1
print("neighbourhood of node 1:", sorted(neighbors(model, i)))

# everything at nominal: P and Q are the flat-start injections
flat = NodeAssignment(v_i=0.0, neighbors={2: (0.0, 0.0), 4: (0.0, 0.0)})
print(f"flat start: P={active_power(model, i, flat):.4f}  Q={reactive_power(model, i, flat):.4f}")

# a stressed point: neighbours lag by 30 degrees and sag by 0.1 p.u.
stressed = NodeAssignment(v_i=0.05, neighbors={2: (-math.pi / 6, -0.1), 4: (-math.pi / 6, -0.1)})
print(f"stressed:   P={active_power(model, i, stressed):.4f}  Q={reactive_power(model, i, stressed):.4f}")

# the same injection in vectorised form, used by the optimisers
cp = coupling(model, i, "active")
theta = np.array([[-math.pi / 6, -math.pi / 6]])
vk = np.array([[-0.1, -0.1]])
print("vectorised P:", injection(cp, np.array([0.05]), theta, vk))

# sweep one neighbour angle to see the sinusoidal dependence
angles = np.linspace(-math.pi / 6, math.pi / 6, 7)
th = np.column_stack([angles, np.zeros_like(angles)])
vals = injection(cp, np.zeros_like(angles), th, np.zeros_like(th))
for a, p in zip(angles, vals):
    print(f"theta_2={a:+.3f}  P={p:.4f}")
