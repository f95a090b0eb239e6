"""
Cooldown from 38 degC
=====================

Closed loop for one hour from a hot chamber with empty water tanks.  The
temperature has to reach its reference band and stay there.
"""

import numpy as np

from farmpc.harness import load_scenario, packaged_scenario, run_closed_loop

scenario = load_scenario(packaged_scenario("cooldown"))
print("x0 =", scenario.x0)
print("ticks:", scenario.n_ticks, "of", scenario.dt, "s")

records, summary = run_closed_loop(scenario)

t = np.array([r.t for r in records]) / 60.0
T = np.array([r.x[0] for r in records])
T_ref = np.array([r.T_ref for r in records])
u_T = np.array([r.u[0] for r in records])
u_V = np.array([r.u[1] for r in records])

print("\n  min     T    T_ref    u_T  vent")
for k in range(0, len(records), 4):
    print(f"{t[k]:5.0f} {T[k]:7.2f} {T_ref[k]:7.2f} {u_T[k]:7.1f} {u_V[k]:4.0f}")

print("\ntime to band:", summary.time_to_band, "s")
print("tank levels at the end:", records[-1].x_next[3:6])
