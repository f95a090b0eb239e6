"""
One control step, looked at closely
===================================

Build the optimal control problem for the hot start of the cooldown run
(38 degC chamber, empty tanks) and solve it once.
"""

import numpy as np

from farmpc import OcpConfig, build_ocp, load_params, load_weather_csv, solve_ocp
from farmpc.disturbance import preview
from farmpc.harness import packaged_scenario
from farmpc.references import reference_window

np.set_printoptions(precision=4, suppress=True, linewidth=110)

p, pp = load_params()
weather = load_weather_csv(packaged_scenario().parent / "weather_chemnitz_synthetic.csv")
weather = weather.with_C_out(1.5e-3)
cfg = OcpConfig()

x0 = np.array([38.0, 0.0013, 0.0058, 0.0, 0.0, 0.0, 0.240])
t0 = 0.0

# horizon of N steps: references and weather preview both hold N + 1 samples
refs = reference_window(t0, cfg.N, cfg.dt)
dist = preview(weather, t0, cfg.N, cfg.dt)
print("T_ref over the horizon:", np.array([r.T_ref for r in refs]))
print("outside temperature:   ", dist[:, 0])

problem = build_ocp(x0, t0, refs, dist, cfg, p, pp)
print("decision variables:", problem.lower.size)

solution = solve_ocp(problem)
print("\ninput sequence (rows = stages; u_T, u_V, u_H, u_W1..3, u_I1..4):")
print(solution.u_seq)
print("\npredicted temperature:", solution.predicted_states[:, 0])
print("objective:", solution.objective)
print("slack eps* before rounding:", solution.eps_star)
print("iterations:", solution.iterations, " converged:", solution.converged)

# the thermoelectric drive is negative: the module cools
print("\nfirst move u_T =", solution.u_seq[0, 0])
