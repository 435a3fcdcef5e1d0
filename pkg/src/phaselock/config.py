"""JSON configuration documents (``"schema": 1``).

A model document looks like::

    {"schema": 1,
     "filter": {"type": "leadlag", "a": 0.2922, "alpha": 63.1656, "beta": 63.1656},
     "K_vco": 95.0, "omega_free": 89.5, "pd": {"L": 1.0},
     "integrator": {"rel_tol": 1e-9, "abs_tol": 1e-12},
     "simulate": {"t_end": 2.0, "inits": [[0.01, 0.3], [-0.005, 0.1]]}}

``pd`` may instead carry ``{"optics": {"P1": .., "P2": .., "R": .., "A_tia": ..}}``.
Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .integrate import IntegratorConfig
from .model import PI, LeadLag, LoopState, ModelError, OpticalParams, PDCharacteristic, PhaseModel

SCHEMA_VERSION = 1


class ConfigError(ModelError):
    """Malformed configuration document."""


def _number(obj, key, where, default=None, required=True):
    if key not in obj:
        if required and default is None:
            raise ConfigError(f"{where}: missing field '{key}'")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key}: expected a finite number, got {v!r}")
    return float(v)


def _keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(extra)}")


def _schema(doc, where="config"):
    if doc.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"{where}: 'schema' must be {SCHEMA_VERSION}")


def parse_filter(obj):
    kind = obj.get("type") if isinstance(obj, dict) else None
    if kind == "leadlag":
        _keys(obj, ("type", "a", "alpha", "beta"), "filter")
        return LeadLag(_number(obj, "a", "filter"), _number(obj, "alpha", "filter"),
                       _number(obj, "beta", "filter"))
    if kind == "pi":
        _keys(obj, ("type", "tau1", "tau2"), "filter")
        return PI(_number(obj, "tau1", "filter"), _number(obj, "tau2", "filter"))
    raise ConfigError("filter.type must be 'leadlag' or 'pi'")


def parse_pd(obj) -> PDCharacteristic:
    _keys(obj, ("L", "optics"), "pd")
    if "L" in obj and "optics" in obj:
        raise ConfigError("pd: give either 'L' or 'optics', not both")
    if "optics" in obj:
        o = obj["optics"]
        _keys(o, ("P1", "P2", "R", "A_tia", "omega1"), "pd.optics")
        params = OpticalParams(*(_number(o, k, "pd.optics") for k in ("P1", "P2", "R", "A_tia")),
                               _number(o, "omega1", "pd.optics", 0.0, required=False))
        return PDCharacteristic.from_optics(params)
    return PDCharacteristic(_number(obj, "L", "pd", 1.0, required=False))


def parse_integrator(obj) -> IntegratorConfig:
    _keys(obj, ("rel_tol", "abs_tol", "max_step", "max_steps"), "integrator")
    base = IntegratorConfig()
    steps = obj.get("max_steps", base.max_steps)
    if isinstance(steps, bool) or not isinstance(steps, int) or steps <= 0:
        raise ConfigError("integrator.max_steps must be a positive integer")
    return IntegratorConfig(
        rel_tol=_number(obj, "rel_tol", "integrator", base.rel_tol),
        abs_tol=_number(obj, "abs_tol", "integrator", base.abs_tol),
        max_step=_number(obj, "max_step", "integrator", required=False),
        max_steps=steps)


@dataclass
class SimulateSpec:
    t_end: float
    inits: list[LoopState] = field(default_factory=list)


@dataclass
class ModelConfig:
    model: PhaseModel
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    simulate: SimulateSpec | None = None
    section: float = 0.0


def parse_model_config(doc) -> ModelConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    _keys(doc, ("schema", "filter", "K_vco", "omega_free", "pd", "integrator", "simulate",
                "section"), "config")
    _schema(doc)
    if "filter" not in doc:
        raise ConfigError("config: missing field 'filter'")
    filt = parse_filter(doc["filter"])
    pd = parse_pd(doc.get("pd", {}))
    model = PhaseModel(filt, _number(doc, "K_vco", "config"), _number(doc, "omega_free", "config"), pd)
    integ = parse_integrator(doc.get("integrator", {}))
    sim = None
    if "simulate" in doc:
        s = doc["simulate"]
        _keys(s, ("t_end", "inits"), "simulate")
        t_end = _number(s, "t_end", "simulate")
        if not t_end > 0:
            raise ConfigError("simulate.t_end must be positive")
        inits = []
        for i, v in enumerate(s.get("inits", [])):
            if (not isinstance(v, list) or len(v) != model.order + 1
                    or not all(isinstance(u, (int, float)) and not isinstance(u, bool) for u in v)):
                raise ConfigError(f"simulate.inits[{i}]: expected {model.order + 1} numbers")
            inits.append(LoopState.from_vector(v))
        sim = SimulateSpec(t_end, inits)
    section = _number(doc, "section", "config", 0.0, required=False)
    return ModelConfig(model, integ, sim, section)


@dataclass
class SweepConfig:
    alpha: float
    beta: float
    a_values: list[float]
    K_values: list[float]
    L: float = 1.0
    tol: float | None = None
    rel_tol: float = 1e-3


def _number_list(doc, key):
    v = doc.get(key)
    if (not isinstance(v, list) or not v
            or not all(isinstance(u, (int, float)) and not isinstance(u, bool) for u in v)):
        raise ConfigError(f"sweep.{key}: expected a non-empty list of numbers")
    return [float(u) for u in v]


def parse_sweep_config(doc) -> SweepConfig:
    _keys(doc, ("schema", "alpha", "beta", "L", "a_values", "K_values", "tol", "rel_tol"), "sweep")
    _schema(doc, "sweep")
    cfg = SweepConfig(
        alpha=_number(doc, "alpha", "sweep"), beta=_number(doc, "beta", "sweep"),
        a_values=_number_list(doc, "a_values"), K_values=_number_list(doc, "K_values"),
        L=_number(doc, "L", "sweep", 1.0, required=False),
        tol=_number(doc, "tol", "sweep", required=False),
        rel_tol=_number(doc, "rel_tol", "sweep", 1e-3, required=False))
    if any(k <= 0 for k in cfg.K_values):
        raise ConfigError("sweep.K_values must be positive")
    for a in cfg.a_values:
        LeadLag(a, cfg.alpha, cfg.beta)  # validates ranges
    if cfg.tol is not None and not cfg.tol > 0:
        raise ConfigError("sweep.tol must be positive")
    return cfg


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def load_model_config(path) -> ModelConfig:
    return parse_model_config(load_json(path))


def load_sweep_config(path) -> SweepConfig:
    return parse_sweep_config(load_json(path))
