"""
Certified power envelope and admissible set-points
==================================================

For every inverter, bound its injected powers over all neighbour states
allowed by the safe set, then turn the bounds into intervals of set-point
changes that keep the inverter's own frequency and voltage safe.
"""

from droopcert import load_bundled, max_droop, power_envelope, verify_node

model, spec = load_bundled()

for i in model.node_ids:
    env = power_envelope(model, i, spec)
    print(f"node {i}: P in [{env.P_min:.4f}, {env.P_max:.4f}]  Q in [{env.Q_min:.4f}, {env.Q_max:.4f}]")
    # each bound carries an enclosure width and the point that attains it
    b = env.p_max
    print(f"    P_max enclosure width {b.width:.1e} via {b.engine}, {b.boxes} boxes")
    print("    witness", {k: round(float(x), 4) for k, x in zip(b.var_names, b.witness)})

# at the droops stored in the network file
for i in model.node_ids:
    rep = verify_node(model, i, spec)
    print(f"node {i}: U_omega=[{rep.u_omega.lower:.3f}, {rep.u_omega.upper:.3f}]  "
          f"U_v=[{rep.u_v.lower:.3f}, {rep.u_v.upper:.3f}]")

# the largest droops that still leave a nonempty interval
for i in model.node_ids:
    lp, lq = max_droop(model, i, spec)
    print(f"node {i}: lambda_p*={lp:.3f}  lambda_q*={lq:.4f}")

# the branch-and-bound engine agrees with the closed form on these boxes
env_a = power_envelope(model, 2, spec, engine="auto")
env_b = power_envelope(model, 2, spec, engine="bnb")
print("engine gap on node 2 P_max:", abs(env_a.P_max - env_b.P_max))
