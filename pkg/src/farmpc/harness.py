"""Closed-loop simulation: controller, plant, run log and end-of-run KPIs.

The plant is the same model the controller predicts with (same
:func:`step_euler`), evaluated with the exact clamps instead of the smoothed
ones.  A scenario can scale plant parameters to study model mismatch.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .chamber import (BINARY_INPUTS, DISTURBANCE_NAMES, FluxBreakdown, INPUT_LOWER,
                      INPUT_NAMES, INPUT_UPPER, ModelEvaluationError, STATE_NAMES,
                      box_violation, input_in_box, state_derivative, step_euler)
from .disturbance import load_weather_csv
from .mpc import OcpConfig, SolverError, control_step
from .params import ParameterError, default_params_path, load_params
from .references import DEFAULT_PROFILE, reference_at

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger(__name__)

SWITCHING_BOUND_HZ = 0.0333
BAND_WIDTH = 0.5        # degC
BAND_HOLD_TICKS = 10

_PACKAGE_DATA = Path(__file__).parent / "data"


class ScenarioError(ValueError):
    """Invalid scenario file."""


class RunAborted(RuntimeError):
    """The solver failed hard under the abort policy."""

    def __init__(self, message, t):
        super().__init__(message)
        self.t = t


# --- scenario -----------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    params_path: Path
    weather_path: Path
    x0: tuple
    duration: float = 86400.0
    dt: float = 30.0
    start_time: float = 0.0
    C_out: float | None = None          # constant CO2 source concentration, overrides the weather file
    ocp: dict = field(default_factory=dict)
    output_dir: Path | None = None
    on_solver_failure: str = "continue"  # or "abort"
    perturbation: dict = field(default_factory=dict)   # plant-only parameter multipliers
    deterministic: bool = True

    @property
    def n_ticks(self):
        return int(round(self.duration / self.dt))

    def ocp_config(self):
        overrides = dict(self.ocp)
        for key in ("P", "R", "rho_schedule"):
            if key in overrides:
                overrides[key] = tuple(overrides[key])
        if "dt" in overrides and overrides["dt"] != self.dt:
            raise ScenarioError("ocp.dt must equal the scenario dt")
        overrides["dt"] = self.dt
        return OcpConfig(**overrides)


_SCENARIO_KEYS = {"params", "weather", "x0", "duration", "dt", "start_time", "C_out",
                  "ocp", "output_dir", "on_solver_failure", "perturbation", "deterministic"}


def _resolve(value, base, default):
    if value is None or value == "default":
        return default
    path = Path(value)
    if not path.is_absolute():
        path = base / path
    return path


def scenario_from_mapping(data, base_dir=Path(".")):
    """Build a :class:`Scenario` from parsed key-value data; paths resolve against `base_dir`."""
    unknown = set(data) - _SCENARIO_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
    if "weather" not in data:
        raise ScenarioError("scenario needs a 'weather' file")
    if "x0" not in data:
        raise ScenarioError("scenario needs an initial state 'x0'")
    x0 = tuple(float(v) for v in data["x0"])
    if len(x0) != 7 or not all(math.isfinite(v) for v in x0):
        raise ScenarioError("x0 must hold 7 finite values")
    dt = float(data.get("dt", 30.0))
    duration = float(data.get("duration", 86400.0))
    if not dt > 0:
        raise ScenarioError("dt must be positive")
    if duration < 0:
        raise ScenarioError("duration must be non-negative")
    ticks = duration / dt
    if abs(ticks - round(ticks)) > 1e-9 * max(1.0, ticks):
        raise ScenarioError(f"duration {duration:g} s is not a multiple of dt {dt:g} s")
    policy = data.get("on_solver_failure", "continue")
    if policy not in ("continue", "abort"):
        raise ScenarioError("on_solver_failure must be 'continue' or 'abort'")
    ocp = dict(data.get("ocp", {}))
    bad = set(ocp) - {f.name for f in dataclasses.fields(OcpConfig)}
    if bad:
        raise ScenarioError(f"unknown ocp keys: {', '.join(sorted(bad))}")
    C_out = data.get("C_out")
    if C_out is not None and not float(C_out) >= 0:
        raise ScenarioError("C_out must be non-negative")
    out = data.get("output_dir")
    scenario = Scenario(
        params_path=_resolve(data.get("params"), base_dir, default_params_path()),
        weather_path=_resolve(data["weather"], base_dir, None),
        x0=x0, duration=duration, dt=dt,
        start_time=float(data.get("start_time", 0.0)),
        C_out=None if C_out is None else float(C_out),
        ocp=ocp,
        output_dir=None if out is None else _resolve(out, base_dir, None),
        on_solver_failure=policy,
        perturbation={k: float(v) for k, v in data.get("perturbation", {}).items()},
        deterministic=bool(data.get("deterministic", True)),
    )
    try:
        scenario.ocp_config()
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid ocp settings: {exc}") from None
    return scenario


def load_scenario(path, check_paths=True):
    """Read a scenario TOML file.  Raises FileNotFoundError naming any missing file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scenario file not found: {path}")
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}") from None
    scenario = scenario_from_mapping(data, path.parent)
    if check_paths:
        for p in (scenario.params_path, scenario.weather_path):
            if not p.exists():
                raise FileNotFoundError(f"file not found: {p}")
    return scenario


def packaged_scenario(name="default"):
    """Path of a scenario shipped with the package (``default`` or ``cooldown``)."""
    return _PACKAGE_DATA / f"scenario_{name}.toml"


def perturb_params(p, pp, factors):
    """Copies of (p, pp) with the named parameters multiplied by the given factors.

    Plant-side keys take a ``plant.`` prefix; per-channel tuples are scaled as a whole.
    """
    chamber, plant = {}, {}
    for key, factor in factors.items():
        target, obj, name = (plant, pp, key[6:]) if key.startswith("plant.") else (chamber, p, key)
        if name not in {f.name for f in dataclasses.fields(obj)}:
            raise ParameterError(f"unknown parameter '{key}' in perturbation", key=key)
        value = getattr(obj, name)
        target[name] = (tuple(v * factor for v in value) if isinstance(value, tuple)
                        else value * factor)
    return dataclasses.replace(p, **chamber), dataclasses.replace(pp, **plant)


# --- records and summary -------------------------------------------------------

@dataclass
class RunRecord:
    t: float
    x: np.ndarray
    u: np.ndarray
    d: np.ndarray
    T_ref: float
    C_ref: float
    u_ref: np.ndarray
    x_next: np.ndarray
    iterations: int
    objective: float
    eps_star: float
    relaxation_gap: float
    predicted_violation: float
    converged: bool
    rounded_within_tol: bool
    solver_failed: bool
    fluxes: dict


FLUX_NAMES = FluxBreakdown.names()
LOG_COLUMNS = (
    ["t"] + list(STATE_NAMES) + list(INPUT_NAMES) + list(DISTURBANCE_NAMES)
    + ["T_ref", "C_ref", "u_I1_ref", "u_I2_ref", "u_I3_ref", "u_I4_ref"]
    + ["iterations", "objective", "eps_star", "relaxation_gap",
       "predicted_violation", "converged", "rounded_within_tol", "solver_failed"]
    + FLUX_NAMES
    + [f"next_{name}" for name in STATE_NAMES]
)


@dataclass
class RunSummary:
    ticks: int = 0
    rmse_T: float = 0.0
    rmse_C: float = 0.0
    max_violation: float = 0.0
    max_violation_per_state: dict = field(default_factory=dict)
    any_violation: bool = False
    inputs_in_set: bool = True
    actuation_cost: float = 0.0
    biomass_gain: float = 0.0
    time_to_band: float | None = None
    vent_switch_count: int = 0
    vent_max_switching_hz: float = 0.0
    switching_bound_hz: float = SWITCHING_BOUND_HZ
    switching_flagged: bool = False
    solves: int = 0
    converged_solves: int = 0
    converged_fraction: float = 1.0
    solver_failures: int = 0
    max_eps_star: float = 0.0
    max_relaxation_gap: float = 0.0

    def as_dict(self):
        return dataclasses.asdict(self)

    def to_text(self):
        lines = []
        for key, value in self.as_dict().items():
            if isinstance(value, dict):
                for sub, v in value.items():
                    lines.append(f"{key}.{sub}: {v:.6g}")
            elif isinstance(value, float):
                lines.append(f"{key}: {value:.6g}")
            else:
                lines.append(f"{key}: {value}")
        return "\n".join(lines) + "\n"

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=False) + "\n"


def switching_stats(t, u_V):
    """Toggle count and maximum switching frequency of a binary signal.

    The frequency is ``1 / (2 * shortest interval between consecutive
    toggles)``, i.e. the rate of the fastest on-off cycle; fewer than two
    toggles give 0.  Returns (count, frequency_hz, bound_violated) where the
    bound check is exact rational arithmetic on the logged times.
    """
    u_V = np.asarray(u_V, dtype=float)
    t = np.asarray(t, dtype=float)
    toggles = np.flatnonzero(u_V[1:] != u_V[:-1]) + 1
    count = len(toggles)
    if count < 2:
        return count, 0.0, False
    times = [Fraction(float(t[k])) for k in toggles]
    shortest = min(b - a for a, b in zip(times, times[1:]))
    freq = 1 / (2 * shortest)
    return count, float(freq), freq >= Fraction(SWITCHING_BOUND_HZ)


def time_to_band(t, T, T_ref, width=BAND_WIDTH, hold=BAND_HOLD_TICKS):
    """First time |T - T_ref| <= width holds for `hold` consecutive samples (None if never)."""
    inside = np.abs(np.asarray(T) - np.asarray(T_ref)) <= width
    for k in range(len(inside) - hold + 1):
        if inside[k:k + hold].all():
            return float(t[k] - t[0])
    return None


def summarize(records, cfg=None, p=None):
    """End-of-run KPIs.  An empty record list gives the all-zero summary."""
    if not records:
        return RunSummary()
    cfg = cfg or OcpConfig()
    t = np.array([r.t for r in records])
    X = np.array([r.x for r in records])
    U = np.array([r.u for r in records])
    Uref = np.array([r.u_ref for r in records])
    T_ref = np.array([r.T_ref for r in records])
    C_ref = np.array([r.C_ref for r in records])
    visited = np.vstack([X, records[-1].x_next])
    viol = box_violation(visited).max(axis=0)
    du = U - Uref
    dt = t[1] - t[0] if len(t) > 1 else cfg.dt
    count, freq, flagged = switching_stats(t, U[:, 1])
    conv = [r for r in records if r.converged]
    return RunSummary(
        ticks=len(records),
        rmse_T=float(np.sqrt(np.mean((X[:, 0] - T_ref) ** 2))),
        rmse_C=float(np.sqrt(np.mean((X[:, 1] - C_ref) ** 2))),
        max_violation=float(viol.max()),
        max_violation_per_state={n: float(v) for n, v in zip(STATE_NAMES, viol)},
        any_violation=bool(viol.max() > 0),
        inputs_in_set=bool(np.all(input_in_box(U))),
        actuation_cost=float(np.sum(du * np.asarray(cfg.R) * du) * dt),
        biomass_gain=float(records[-1].x_next[6] - records[0].x[6]),
        time_to_band=time_to_band(t, X[:, 0], T_ref),
        vent_switch_count=count,
        vent_max_switching_hz=freq,
        switching_flagged=bool(flagged),
        solves=len(records),
        converged_solves=len(conv),
        converged_fraction=len(conv) / len(records),
        solver_failures=sum(r.solver_failed for r in records),
        max_eps_star=max((r.eps_star for r in conv), default=0.0),
        max_relaxation_gap=max((r.relaxation_gap for r in conv), default=0.0),
    )


# --- closed loop ---------------------------------------------------------------

def _fallback_input(previous, ref):
    if previous is not None:
        return previous.copy()
    u = np.clip(ref.u_ref, INPUT_LOWER, INPUT_UPPER)
    u[list(BINARY_INPUTS)] = 0.0
    return u


def run_closed_loop(scenario, profile=DEFAULT_PROFILE, progress=None):
    """Simulate the scenario tick by tick.

    Returns ``(records, summary)``.  With ``on_solver_failure = "abort"`` a
    hard solver failure raises :class:`RunAborted`; otherwise the previous
    input is held and the record is flagged.
    """
    p, pp = load_params(scenario.params_path)
    plant_p, plant_pp = perturb_params(p, pp, scenario.perturbation)
    weather = load_weather_csv(scenario.weather_path)
    if scenario.C_out is not None:
        weather = weather.with_C_out(scenario.C_out)
    cfg = scenario.ocp_config().validate()

    x = np.array(scenario.x0, dtype=float)
    records = []
    previous = None
    u_prev = None
    for k in range(scenario.n_ticks):
        t = scenario.start_time + k * scenario.dt
        ref = reference_at(t, profile)
        d = np.array(weather.at(t))
        failed = False
        try:
            u, solution = control_step(x, t, weather, cfg, p, pp, previous, profile)
        except (SolverError, ModelEvaluationError) as exc:
            if scenario.on_solver_failure == "abort":
                raise RunAborted(f"solver failed at t={t:g} s: {exc}", t) from exc
            logger.error("t=%g s: solver failed (%s); holding previous input", t, exc)
            u, solution, failed = _fallback_input(u_prev, ref), None, True
        x_next = step_euler(x, u, d, scenario.dt, plant_p, plant_pp)
        _, fluxes = state_derivative(x, u, d, plant_p, plant_pp)
        records.append(RunRecord(
            t=t, x=x, u=u, d=d, T_ref=ref.T_ref, C_ref=ref.C_ref, u_ref=ref.u_ref,
            x_next=x_next,
            iterations=0 if failed else solution.iterations,
            objective=math.nan if failed else solution.objective,
            eps_star=math.nan if failed else solution.eps_star,
            relaxation_gap=math.nan if failed else solution.relaxation_gap,
            predicted_violation=math.nan if failed else solution.max_violation,
            converged=False if failed else solution.converged,
            rounded_within_tol=(not failed) and solution.relaxation_gap <= cfg.binary_tol,
            solver_failed=failed,
            fluxes={n: float(v) for n, v in fluxes.as_dict().items()},
        ))
        previous = solution
        u_prev = u
        x = x_next
        if progress is not None:
            progress(k + 1, scenario.n_ticks, records[-1])
    return records, summarize(records, cfg, p)


# --- files -----------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % value


def record_row(r):
    return ([r.t, *r.x, *r.u, *r.d, r.T_ref, r.C_ref, *r.u_ref[6:10],
             r.iterations, r.objective, r.eps_star, r.relaxation_gap,
             r.predicted_violation, r.converged, r.rounded_within_tol, r.solver_failed]
            + [r.fluxes[n] for n in FLUX_NAMES] + list(r.x_next))


def write_run_csv(records, path):
    """One row per tick in :data:`LOG_COLUMNS` order; floats carry 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in records:
            w.writerow([_fmt(v) for v in record_row(r)])


def read_run_csv(path):
    """Load a run log as a dict of column name -> float array."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def log_arrays(log):
    """Split a loaded run log into (t, X, U, D, X_next) arrays."""
    def stack(names):
        return np.column_stack([log[n] for n in names]) if len(log["t"]) else np.zeros((0, len(names)))
    return (log["t"], stack(STATE_NAMES), stack(INPUT_NAMES), stack(DISTURBANCE_NAMES),
            stack([f"next_{n}" for n in STATE_NAMES]))


def plot_script():
    """gnuplot script plotting states, references, disturbances and inputs from run.csv."""
    c = {name: i + 1 for i, name in enumerate(LOG_COLUMNS)}
    h = "($1/3600)"
    return f"""\
# gnuplot script: four panels of the closed-loop run read from run.csv
set datafile separator ','
set key outside right
set xlabel 'time [h]'
set terminal pngcairo size 1000,1200
set output 'run.png'
set multiplot layout 4,1
set ylabel 'temperature [degC]'
plot 'run.csv' using {h}:{c['T']} with lines title 'T', \\
     '' using {h}:{c['T_ref']} with lines dashtype 2 title 'T_ref', \\
     '' using {h}:{c['T_out']} with lines title 'T_out'
set ylabel 'CO2 [kg/m3]'
plot 'run.csv' using {h}:{c['C']} with lines title 'C', \\
     '' using {h}:{c['C_ref']} with lines dashtype 2 title 'C_ref'
set ylabel 'humidity [kg/m3]'
set y2label 'water [kg]'
set y2tics
plot 'run.csv' using {h}:{c['H']} with lines title 'H', \\
     '' using {h}:{c['H_out']} with lines title 'H_out', \\
     '' using {h}:{c['W_sto']} axes x1y2 with lines title 'W_sto', \\
     '' using {h}:{c['W_med']} axes x1y2 with lines title 'W_med', \\
     '' using {h}:{c['W_ovf']} axes x1y2 with lines title 'W_ovf'
unset y2tics
unset y2label
set ylabel 'inputs'
plot 'run.csv' using {h}:{c['u_T']} with lines title 'u_T', \\
     '' using {h}:(100*${c['u_V']}) with steps title '100 u_V', \\
     '' using {h}:(100*${c['u_H']}) with steps title '100 u_H', \\
     '' using {h}:{c['u_I1']} with lines title 'u_I1'
unset multiplot
"""


def write_outputs(records, summary, out_dir):
    """Write run.csv, summary.txt, summary.json and plot.gp into `out_dir`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_run_csv(records, out_dir / "run.csv")
    (out_dir / "summary.txt").write_text(summary.to_text())
    (out_dir / "summary.json").write_text(summary.to_json())
    (out_dir / "plot.gp").write_text(plot_script())
    return out_dir
