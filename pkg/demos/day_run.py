"""
A full day in the chamber
=========================

24 hours of closed-loop control at the default settings (2880 solves,
about a minute and a half on a desktop).  Writes run.csv, the summaries and
a gnuplot script into ./demo_out.
"""

import numpy as np

from farmpc.harness import load_scenario, packaged_scenario, run_closed_loop, write_outputs

scenario = load_scenario(packaged_scenario("default"))


def progress(k, n, record):
    if k % 240 == 0:
        print(f"hour {k // 120:2d}: T = {record.x_next[0]:5.2f} (ref {record.T_ref:5.2f}), "
              f"C = {record.x_next[1]:.2e} (ref {record.C_ref:.2e})")


records, summary = run_closed_loop(scenario, progress=progress)
print()
print(summary.to_text())

# ventilation is the only actuator that trades CO2 against temperature
u_V = np.array([r.u[1] for r in records])
print("ventilator on for", round(100 * u_V.mean(), 1), "% of the day")

out = write_outputs(records, summary, "demo_out")
print("outputs in", out.resolve(), "(render with: gnuplot plot.gp)")
