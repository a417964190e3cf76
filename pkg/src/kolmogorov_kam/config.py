"""Run configuration: JSON parsing with field-level validation.

Schema (defaults in brackets)::

    {
      "hamiltonian": {"preset": "pendulum" | "golden2d", "params": {...}}
                     or {"f0": <series | path>, "f1": <series | path>},
      "omega": [float, ...],                  required
      "tau": float                            [d]
      "kmax": int                             [200]
      "truncation": {"K": int, "M": int}      [16, 4]
      "domain": {"rho": float, "delta": float}  [1.0, 1.0]
      "epsilon": float                        required
      "schedule": {"max_steps", "stop_tol", "step_constant",
                   "deviation_constant", "eta0"}
      "verify": {"T", "dt", "theta0", "samples", "seed"}
      "output": str                           ["out"]
    }

Series use the JSON layout of :func:`fourier_taylor.to_json`; a string is
read as a path relative to the config file.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace

from . import fourier_taylor as ft
from .errors import ConfigError
from .hamiltonians import PRESETS
from .iteration import DEFAULT_DEVIATION_CONSTANT, DEFAULT_MAX_STEPS, DEFAULT_STEP_CONSTANT

DEFAULT_K = 16
DEFAULT_M = 4


@dataclass(frozen=True)
class ScheduleConfig:
    max_steps: int = DEFAULT_MAX_STEPS
    stop_tol: float = None
    step_constant: float = DEFAULT_STEP_CONSTANT
    deviation_constant: float = DEFAULT_DEVIATION_CONSTANT
    eta0: float = None


@dataclass(frozen=True)
class VerifyConfig:
    T: float = 100.0
    dt: float = 1e-3
    theta0: tuple = None
    samples: int = 100
    seed: int = 0


@dataclass(frozen=True, eq=False)
class RunConfig:
    omega: tuple
    epsilon: float
    preset: str = None
    params: dict = field(default_factory=dict)
    f0: ft.FourierTaylorSeries = None
    f1: ft.FourierTaylorSeries = None
    tau: float = None
    kmax: int = 200
    K: int = DEFAULT_K
    M: int = DEFAULT_M
    rho: float = 1.0
    delta: float = 1.0
    schedule: ScheduleConfig = ScheduleConfig()
    verify: VerifyConfig = VerifyConfig()
    output: str = "out"

    @property
    def dim(self):
        return len(self.omega)

    def series(self):
        """``(f0, f1)`` at the configured truncation."""
        if self.preset is not None:
            return PRESETS[self.preset](self.omega, self.K, self.M, **self.params)
        return self.f0.resize(self.K, self.M), self.f1.resize(self.K, self.M)

    def with_overrides(self, **kwargs):
        sched = {k: kwargs.pop(k) for k in list(kwargs) if k in ScheduleConfig.__annotations__}
        ver = {k: kwargs.pop(k) for k in list(kwargs) if k in ("seed",)}
        out = replace(self, **kwargs)
        if sched:
            out = replace(out, schedule=replace(out.schedule, **sched))
        if ver:
            out = replace(out, verify=replace(out.verify, **ver))
        return out

    def to_dict(self):
        ham = ({"preset": self.preset, "params": dict(self.params)} if self.preset is not None
               else {"f0": ft.to_json(self.f0), "f1": ft.to_json(self.f1)})
        ver = asdict(self.verify)
        if ver["theta0"] is not None:
            ver["theta0"] = list(ver["theta0"])
        return {"hamiltonian": ham, "omega": list(self.omega), "tau": self.tau,
                "kmax": self.kmax, "truncation": {"K": self.K, "M": self.M},
                "domain": {"rho": self.rho, "delta": self.delta}, "epsilon": self.epsilon,
                "schedule": asdict(self.schedule), "verify": ver, "output": self.output}


def _number(data, key, path, positive=False, nonneg=False, integer=False, default=None,
            optional=False):
    if key not in data or data[key] is None:
        if default is not None or optional:
            return default
        raise ConfigError(path, "required field is missing")
    val = data[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(path, f"expected a number, got {val!r}")
    if integer:
        if int(val) != val:
            raise ConfigError(path, f"expected an integer, got {val!r}")
        val = int(val)
    elif not math.isfinite(val):
        raise ConfigError(path, "must be finite")
    if positive and not val > 0:
        raise ConfigError(path, f"must be positive, got {val!r}")
    if nonneg and not val >= 0:
        raise ConfigError(path, f"must be nonnegative, got {val!r}")
    return val


def _section(data, key):
    sec = data.get(key, {})
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(key, "expected an object")
    return sec


def _check_keys(data, allowed, path):
    extra = sorted(set(data) - set(allowed))
    if extra:
        where = f"{path}.{extra[0]}" if path else extra[0]
        raise ConfigError(where, "unknown field")


def _load_series(value, path, base_dir):
    if isinstance(value, str):
        full = value if os.path.isabs(value) else os.path.join(base_dir, value)
        try:
            with open(full) as fh:
                value = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(path, f"cannot read series file {value!r}: {exc}") from None
    if not isinstance(value, dict):
        raise ConfigError(path, "expected a series object or a file path")
    try:
        return ft.from_json(value)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def config_from_dict(data, base_dir="."):
    """Validate a decoded JSON config.

    Raises
    ------
    ConfigError
        Naming the first offending field.
    """
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    _check_keys(data, ("hamiltonian", "omega", "tau", "kmax", "truncation", "domain",
                       "epsilon", "schedule", "verify", "output"), "")
    if "omega" not in data or data["omega"] is None:
        raise ConfigError("omega", "required field is missing")
    omega = data["omega"]
    if isinstance(omega, (int, float)) and not isinstance(omega, bool):
        omega = [omega]
    if (not isinstance(omega, list) or not omega
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in omega)):
        raise ConfigError("omega", "expected a nonempty list of numbers")
    omega = tuple(float(x) for x in omega)
    d = len(omega)

    trunc = _section(data, "truncation")
    _check_keys(trunc, ("K", "M"), "truncation")
    K = _number(trunc, "K", "truncation.K", integer=True, default=DEFAULT_K)
    M = _number(trunc, "M", "truncation.M", integer=True, default=DEFAULT_M)
    if K < 1:
        raise ConfigError("truncation.K", "must be at least 1")
    if M < 2:
        raise ConfigError("truncation.M", "must be at least 2")
    dom = _section(data, "domain")
    _check_keys(dom, ("rho", "delta"), "domain")
    rho = _number(dom, "rho", "domain.rho", positive=True, default=1.0)
    delta = _number(dom, "delta", "domain.delta", positive=True, default=1.0)
    eps = _number(data, "epsilon", "epsilon", nonneg=True)
    tau = _number(data, "tau", "tau", optional=True)
    if tau is not None and not tau >= d - 1:
        raise ConfigError("tau", f"must be at least d - 1 = {d - 1}")
    kmax = _number(data, "kmax", "kmax", integer=True, default=200)
    if kmax < K:
        raise ConfigError("kmax", f"scan depth {kmax} must cover the Fourier cutoff {K}")

    ham = data.get("hamiltonian")
    if not isinstance(ham, dict):
        raise ConfigError("hamiltonian", "required object is missing")
    preset, params, f0, f1 = None, {}, None, None
    if "preset" in ham:
        _check_keys(ham, ("preset", "params"), "hamiltonian")
        preset = ham["preset"]
        if preset not in PRESETS:
            raise ConfigError("hamiltonian.preset",
                              f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        params = ham.get("params") or {}
        if not isinstance(params, dict):
            raise ConfigError("hamiltonian.params", "expected an object")
        try:
            PRESETS[preset](omega, K, M, **params)
        except (TypeError, ValueError) as exc:
            raise ConfigError("hamiltonian.params", str(exc)) from None
    elif "f0" in ham or "f1" in ham:
        _check_keys(ham, ("f0", "f1"), "hamiltonian")
        for key in ("f0", "f1"):
            if key not in ham:
                raise ConfigError(f"hamiltonian.{key}", "required field is missing")
        f0 = _load_series(ham["f0"], "hamiltonian.f0", base_dir)
        f1 = _load_series(ham["f1"], "hamiltonian.f1", base_dir)
        for key, f in (("f0", f0), ("f1", f1)):
            if f.dim != d:
                raise ConfigError(f"hamiltonian.{key}", f"dimension {f.dim} does not match omega")
    else:
        raise ConfigError("hamiltonian", "needs either 'preset' or 'f0' and 'f1'")

    sec = _section(data, "schedule")
    _check_keys(sec, ScheduleConfig.__annotations__, "schedule")
    sched = ScheduleConfig(
        max_steps=_number(sec, "max_steps", "schedule.max_steps", integer=True,
                          default=DEFAULT_MAX_STEPS),
        stop_tol=_number(sec, "stop_tol", "schedule.stop_tol", nonneg=True, optional=True),
        step_constant=_number(sec, "step_constant", "schedule.step_constant", positive=True,
                              default=DEFAULT_STEP_CONSTANT),
        deviation_constant=_number(sec, "deviation_constant", "schedule.deviation_constant",
                                   positive=True, default=DEFAULT_DEVIATION_CONSTANT),
        eta0=_number(sec, "eta0", "schedule.eta0", positive=True, optional=True))
    if sched.max_steps < 0:
        raise ConfigError("schedule.max_steps", "must be nonnegative")

    sec = _section(data, "verify")
    _check_keys(sec, VerifyConfig.__annotations__, "verify")
    theta0 = sec.get("theta0")
    if theta0 is not None:
        if not isinstance(theta0, list) or len(theta0) != d:
            raise ConfigError("verify.theta0", f"expected a list of {d} numbers")
        theta0 = tuple(float(x) for x in theta0)
    ver = VerifyConfig(
        T=_number(sec, "T", "verify.T", positive=True, default=100.0),
        dt=_number(sec, "dt", "verify.dt", positive=True, default=1e-3),
        theta0=theta0,
        samples=_number(sec, "samples", "verify.samples", integer=True, default=100),
        seed=_number(sec, "seed", "verify.seed", integer=True, default=0))
    output = data.get("output", "out")
    if not isinstance(output, str):
        raise ConfigError("output", "expected a string")
    return RunConfig(omega, float(eps), preset, dict(params), f0, f1, tau, kmax, K, M,
                     rho, delta, sched, ver, output)


def parse_config(path):
    """Read and validate a JSON config file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return config_from_dict(data, os.path.dirname(os.path.abspath(path)))
