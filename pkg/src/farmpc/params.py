"""Physical constants of the chamber and the crop, and the parameter-file loader."""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "ModelParams",
    "PlantParams",
    "ParameterError",
    "default_params_path",
    "load_params",
    "params_digest",
    "check_params",
]


class ParameterError(ValueError):
    """Raised when a parameter file is incomplete or holds invalid values."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class ModelParams:
    # TEC
    k_alpha: float
    k_Rq: float
    k_q: float
    k_V: float
    # LED panel, per channel
    k_Qm: tuple
    k_Im: tuple
    eta_LU: tuple
    # air and enclosure
    k_c: float
    k_rho: float
    k_uV: float
    k_A: float
    k_U: float
    k_Cchm: float
    k_Vchm: float
    k_leak: float
    # humidity
    k_uH: float
    k_mw: float
    k_Rg: float
    k_acond: float
    k_hcond: float
    k_Le: float
    lambda_vap: float
    # water loop
    k_uW: float
    k_Wm_sto: float
    k_Wm_med: float
    k_evap: float = 0.0

    @property
    def condensation_coefficient(self):
        """Volumetric condensation conductance [m3 s-1]."""
        return (self.k_acond * self.k_hcond
                / (self.k_rho * self.k_c * self.k_Le ** (2.0 / 3.0)))


@dataclass(frozen=True)
class PlantParams:
    k_amed: float
    k_LAI: float
    k_Ip: float
    k_p1: float
    k_p2: float
    k_p3: float
    k_Gamma: float
    k_resp: float
    k_Htrans: float
    k_fwdw: float
    k_alphabeta: float
    k_Bresp: float


_CHANNEL_KEYS = {"k_Qm": "k_Qm{}", "k_Im": "k_Im{}", "eta_LU": "eta_LU{}"}
# Keys whose value may be exactly zero (term switched off).
_MAY_BE_ZERO = {"lambda_vap", "k_evap"}


def default_params_path():
    return Path(str(resources.files("farmpc") / "data" / "default_params.toml"))


def params_digest(path):
    """SHA-256 hex digest of a parameter file, used to pin acceptance runs."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _number(table, key, prefix=""):
    name = prefix + key
    if key not in table:
        raise ParameterError(f"missing parameter '{name}'", key=name)
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParameterError(f"parameter '{name}' must be a number", key=name)
    value = float(value)
    if not math.isfinite(value):
        raise ParameterError(f"parameter '{name}' is not finite", key=name)
    if key in _MAY_BE_ZERO:
        if value < 0.0:
            raise ParameterError(f"parameter '{name}' must be >= 0", key=name)
    elif value <= 0.0:
        raise ParameterError(f"parameter '{name}' must be > 0", key=name)
    return value


def params_from_mapping(data):
    """Build (ModelParams, PlantParams) from a parsed parameter mapping."""
    chamber = {}
    for field in dataclasses.fields(ModelParams):
        if field.name in _CHANNEL_KEYS:
            chamber[field.name] = tuple(
                _number(data, _CHANNEL_KEYS[field.name].format(i)) for i in range(1, 5))
        elif field.name == "k_evap":
            chamber[field.name] = _number(data, "k_evap") if "k_evap" in data else 0.0
        else:
            chamber[field.name] = _number(data, field.name)
    plant_table = data.get("plant")
    if not isinstance(plant_table, dict):
        raise ParameterError("missing parameter table 'plant'", key="plant")
    plant = {f.name: _number(plant_table, f.name, prefix="plant.")
             for f in dataclasses.fields(PlantParams)}
    return ModelParams(**chamber), PlantParams(**plant)


def load_params(path=None):
    """Load and validate a parameter file.

    Parameters
    ----------
    path : str or Path, optional
        TOML file with one key per constant; crop constants sit in ``[plant]``.
        Defaults to the shipped ``default_params.toml``.

    Returns
    -------
    (ModelParams, PlantParams)
    """
    path = default_params_path() if path is None else Path(path)
    if not path.exists():
        raise FileNotFoundError(f"parameter file not found: {path}")
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return params_from_mapping(data)


def check_params(path):
    """Return a list of problems found in a parameter file (empty when valid).

    Unlike :func:`load_params` this keeps going after the first problem so a
    validation report can list every missing or invalid key.
    """
    path = Path(path)
    if not path.exists():
        return [f"parameter file not found: {path}"]
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        return [f"{path}: {exc}"]
    problems = []
    keys = []
    for field in dataclasses.fields(ModelParams):
        if field.name in _CHANNEL_KEYS:
            keys += [_CHANNEL_KEYS[field.name].format(i) for i in range(1, 5)]
        elif field.name != "k_evap":
            keys.append(field.name)
    for key in keys:
        try:
            _number(data, key)
        except ParameterError as exc:
            problems.append(str(exc))
    plant_table = data.get("plant")
    if not isinstance(plant_table, dict):
        problems.append("missing parameter table 'plant'")
    else:
        for field in dataclasses.fields(PlantParams):
            try:
                _number(plant_table, field.name, prefix="plant.")
            except ParameterError as exc:
                problems.append(str(exc))
    return problems
