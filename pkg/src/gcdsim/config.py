"""Run configuration: JSON files, presets, validation and manifests.

Every parameter and initial-condition field is settable by name; omitted
fields keep their defaults.  Config errors carry the offending key so
the CLI can report it.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .integrate import RunConfig, Schedule
from .macro import MacroParams, MacroState, baseline_state, validate_params, validate_state

__all__ = [
    "ConfigError",
    "ResolvedConfig",
    "load_config",
    "resolve",
    "PRESETS",
    "config_hash",
    "write_json_atomic",
]

_RUN_KEYS = ("t_start", "t_end", "rtol", "atol", "sample_interval",
             "positivity_floor", "convergence_tol", "method")
_TOP_KEYS = ("preset", "params", "initial_state", "schedule", "run",
             "sweep", "sensitivity", "global", "plot", "seed")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ResolvedConfig:
    """Fully-expanded configuration ready to run."""

    params: MacroParams
    initial_state: MacroState
    schedule: Schedule
    run: RunConfig
    seed: int = 0
    sweep: dict = field(default_factory=dict)
    sensitivity: dict = field(default_factory=dict)
    study: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def canonical_dict(self) -> dict:
        run = {k: getattr(self.run, k) for k in _RUN_KEYS}
        return {
            "params": self.params.to_dict(),
            "initial_state": self.initial_state.to_dict(),
            "schedule": {k: [list(p) for p in v] for k, v in self.schedule.paths.items()},
            "run": run,
            "seed": self.seed,
            "sweep": self.sweep,
            "sensitivity": self.sensitivity,
            "global": self.study,
        }


def _austerity_schedule(params: MacroParams) -> Schedule:
    """Fiscal-conservatism scenario: debt aversion steps up by the factor
    1.2 at t = 30, ramps back linearly over (40, 50), steps up again at
    t = 60 with all price adaptation speeds divided by 100."""
    g = params.gamma_D
    ramp = 0.1
    paths = {
        "gamma_D": (
            (0.0, g), (30.0, g), (30.0 + ramp, 1.2 * g),
            (40.0, 1.2 * g), (50.0, g), (60.0, g), (60.0 + ramp, 1.2 * g),
        ),
    }
    for name in ("mu_p1", "mu_p2", "mu_w", "mu_r"):
        v = getattr(params, name)
        paths[name] = ((60.0, v), (60.0 + ramp, v / 100.0))
    return Schedule(paths)


def _preset_baseline(overrides: dict) -> dict:
    return {}


def _preset_austerity(overrides: dict) -> dict:
    params = MacroParams(**overrides.get("params", {}))
    sched = _austerity_schedule(params)
    return {"schedule": {k: [list(p) for p in v] for k, v in sched.paths.items()}}


def _preset_conspicuous(overrides: dict) -> dict:
    return {"params": {"conspicuous": True, "mu_abC": 1.0, "mu_baC": 1.0}}


PRESETS = {
    "baseline": _preset_baseline,
    "austerity": _preset_austerity,
    "conspicuous": _preset_conspicuous,
}


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(path, "config file not found")
    except json.JSONDecodeError as exc:
        raise ConfigError(path, f"not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(path, "top level must be an object")
    # manifests embed the resolved config and can be re-run directly
    if "resolved_config" in data:
        data = data["resolved_config"]
    return data


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve(raw: dict | None, preset: str | None = None, seed: int | None = None) -> ResolvedConfig:
    """Expand a preset plus raw config into a validated run setup."""
    raw = dict(raw or {})
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError(key, "unknown configuration key")
    preset = preset or raw.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}; "
                              f"choose from {sorted(PRESETS)}")
        raw = _merge(PRESETS[preset](raw), raw)

    params_in = raw.get("params", {})
    if not isinstance(params_in, dict):
        raise ConfigError("params", "must be an object")
    for k, v in params_in.items():
        if k not in MacroParams.__dataclass_fields__:
            raise ConfigError(k, "unknown parameter")
        if k == "conspicuous":
            if not isinstance(v, bool):
                raise ConfigError(k, "must be a boolean")
        elif not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigError(k, "must be a number")
    params = MacroParams(**params_in)
    bad = validate_params(params)
    if bad:
        first = bad[0]
        raise ConfigError(first.split()[0], "; ".join(bad))

    state_in = raw.get("initial_state", {})
    if not isinstance(state_in, dict):
        raise ConfigError("initial_state", "must be an object")
    base = baseline_state(params)
    for k, v in state_in.items():
        if k not in MacroState.__dataclass_fields__:
            raise ConfigError(k, "unknown state variable")
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigError(k, "must be a number")
    x0 = base.replace(**{k: float(v) for k, v in state_in.items()})
    bad = validate_state(x0, params)
    if bad:
        raise ConfigError("initial_state", "; ".join(bad))

    sched_in = raw.get("schedule", {})
    if not isinstance(sched_in, dict):
        raise ConfigError("schedule", "must be an object")
    try:
        schedule = Schedule({k: tuple((float(a), float(b)) for a, b in v)
                             for k, v in sched_in.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError("schedule", str(exc))

    run_in = raw.get("run", {})
    if not isinstance(run_in, dict):
        raise ConfigError("run", "must be an object")
    for k in run_in:
        if k not in _RUN_KEYS:
            raise ConfigError(k, "unknown run setting")
    try:
        run = RunConfig(**run_in)
    except (TypeError, ValueError) as exc:
        raise ConfigError("run", str(exc))

    seed_val = seed if seed is not None else int(raw.get("seed", 0))
    return ResolvedConfig(
        params=params,
        initial_state=x0,
        schedule=schedule,
        run=run,
        seed=seed_val,
        sweep=dict(raw.get("sweep", {})),
        sensitivity=dict(raw.get("sensitivity", {})),
        study=dict(raw.get("global", {})),
        raw=raw,
    )


def config_hash(cfg: ResolvedConfig) -> str:
    blob = json.dumps(cfg.canonical_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def write_json_atomic(path: str, payload: dict) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    os.replace(tmp, path)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")
