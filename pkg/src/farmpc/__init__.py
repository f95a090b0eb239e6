"""Nonlinear MPC of a lettuce growth chamber: model, controller and closed-loop harness."""

from .chamber import (BINARY_INPUTS, ChamberState, ControlInput, Disturbance, FluxBreakdown,
                      INPUT_LOWER, INPUT_UPPER, STATE_LOWER, STATE_UPPER, state_derivative,
                      step_euler)
from .disturbance import WeatherSeries, load_weather_csv
from .harness import (RunRecord, RunSummary, Scenario, load_scenario, packaged_scenario,
                      run_closed_loop, summarize)
from .mpc import OcpConfig, OcpSolution, build_ocp, control_step, solve_ocp
from .params import ModelParams, PlantParams, load_params
from .references import ReferenceProfile, reference_at, reference_window

__version__ = "0.1.0"
