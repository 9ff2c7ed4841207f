"""
Closed-loop simulation
======================

Drive one inverter with set-points drawn from its certified intervals while
the neighbours move randomly within the safe set, then check the trajectory
with the safety monitor.  A set-point outside the interval shows what a
violation looks like.  Past the maximal droop there is no certificate; a
bang-bang policy there is simulated and its excursion measured.
"""

import math

from droopcert import Scenario, load_bundled, safety_monitor, simulate, verify_node
from droopcert.simulate import discretization_allowance

model, spec = load_bundled()
i = 2

base = verify_node(model, i, spec)
lp, lq = 0.9 * base.lambda_p_star, 0.9 * base.lambda_q_star
rep = verify_node(model, i, spec, lp, lq)

# random set-points inside the certified intervals, random neighbours
sc = Scenario(duration=20.0, control="stochastic", u_omega=rep.u_omega, u_v=rep.u_v,
              lambda_p=lp, lambda_q=lq, seed=7)
tr = simulate(model, i, spec, sc)
mon = safety_monitor(tr, spec, 1e-6, discretization_allowance(model, i, spec, sc))
print("certified, stochastic neighbours:", mon.summary())

# neighbours held at the worst corner of their box
sc = Scenario(duration=20.0, control="stochastic", u_omega=rep.u_omega, u_v=rep.u_v,
              neighbors="worst-case", lambda_p=lp, lambda_q=lq, seed=7)
mon = safety_monitor(simulate(model, i, spec, sc), spec)
print("certified, worst-case neighbours:", mon.summary())

# a frequency set-point well above the certified interval
u_p = rep.u_omega.upper + 0.5 * (spec.s_omega[1] - spec.s_omega[0]) / lp
sc = Scenario(duration=20.0, control="constant", u_p=u_p, lambda_p=lp, lambda_q=lq, seed=7)
tr = simulate(model, i, spec, sc)
mon = safety_monitor(tr, spec)
print(f"u_p={u_p:.3f} outside the interval: {mon.count} violating steps, "
      f"first at t={mon.violations[0][1]:.3f} s")

# bang-bang switching past the maximal droop: no certificate, only a measurement.
# A negative margin is an overshoot; on this network the run usually stays
# inside, since the envelope is built for the worst neighbour at every instant.
for frac in (1.2, 2.0, 4.0):
    lp, lq = frac * base.lambda_p_star, frac * base.lambda_q_star
    rep = verify_node(model, i, spec, lp, lq)
    sc = Scenario(duration=20.0, control="switching", u_omega=rep.u_omega, u_v=rep.u_v,
                  threshold=0.1, neighbors="worst-case", lambda_p=lp, lambda_q=lq, halt_margin=1.0)
    mon = safety_monitor(simulate(model, i, spec, sc), spec)
    print(f"switching at {frac} lambda* (intervals empty: {not rep.nonempty}): worst margins "
          f"{mon.worst_margin_omega / (2 * math.pi):.4f} Hz, {mon.worst_margin_v:.4f} p.u.")
