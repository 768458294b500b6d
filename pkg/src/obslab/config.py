"""JSON experiment configuration.

Every section is optional and defaults to the harmonic-oscillator example
with ``q = 0.8`` sampled uniformly every 0.3 time units.  Unknown keys are
rejected at every level.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import dynamics as dyn
from . import simulation as sim
from .errors import ConfigurationError

Matrix = List[List[float]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class OscillatorModelCfg(_Strict):
    kind: Literal["oscillator"] = "oscillator"


class LinearModelCfg(_Strict):
    kind: Literal["linear"]
    A: Matrix
    B: Matrix
    C: Matrix
    R: Matrix


class ZOHCfg(_Strict):
    kind: Literal["zoh"]


class ZOHExpGainCfg(_Strict):
    kind: Literal["zoh_exp_gain"]
    eta: float = Field(ge=0, allow_inf_nan=False)


class InterSampleCfg(_Strict):
    kind: Literal["inter_sample"]


class ConstantMinusQCfg(_Strict):
    kind: Literal["constant_minus_q"] = "constant_minus_q"
    q: float = Field(0.8, allow_inf_nan=False)


class ScheduleCfg(_Strict):
    kind: Literal["uniform", "seeded-random"] = "uniform"
    T: float = Field(0.3, gt=0, allow_inf_nan=False)
    min_gap_fraction: float = Field(1.0, gt=0, le=1)
    seed: int = 0


class ZeroNoiseCfg(_Strict):
    kind: Literal["zero"] = "zero"


class UniformNoiseCfg(_Strict):
    kind: Literal["uniform"]
    delta: Union[Annotated[float, Field(ge=0, allow_inf_nan=False)], List[Annotated[float, Field(ge=0)]]]
    seed: int = 0


class TabulatedNoiseCfg(_Strict):
    kind: Literal["tabulated"]
    values: Matrix


class ZeroInputCfg(_Strict):
    kind: Literal["zero"] = "zero"


class ConstantInputCfg(_Strict):
    kind: Literal["constant"]
    value: List[float]


class SinusoidInputCfg(_Strict):
    kind: Literal["sinusoid"]
    amplitude: List[float]
    frequency: float = Field(allow_inf_nan=False)
    phase: float = 0.0


class TabulatedInputCfg(_Strict):
    kind: Literal["tabulated"]
    breakpoints: List[float]
    values: Matrix


class SimCfg(_Strict):
    step: float = Field(0.01, gt=0, allow_inf_nan=False)
    horizon: float = Field(20.0, gt=0, allow_inf_nan=False)
    x0: List[float] = [1.0, 0.0]
    z0: List[float] = [0.0, 0.0]


class CertificateCfg(_Strict):
    P: Matrix


class ExperimentConfig(_Strict):
    model: Annotated[Union[OscillatorModelCfg, LinearModelCfg], Field(discriminator="kind")] = (
        OscillatorModelCfg()
    )
    predictor: Annotated[
        Union[ZOHCfg, ZOHExpGainCfg, InterSampleCfg, ConstantMinusQCfg], Field(discriminator="kind")
    ] = ConstantMinusQCfg()
    schedule: ScheduleCfg = ScheduleCfg()
    noise: Annotated[
        Union[ZeroNoiseCfg, UniformNoiseCfg, TabulatedNoiseCfg], Field(discriminator="kind")
    ] = ZeroNoiseCfg()
    input: Annotated[
        Union[ZeroInputCfg, ConstantInputCfg, SinusoidInputCfg, TabulatedInputCfg],
        Field(discriminator="kind"),
    ] = ZeroInputCfg()
    sim: SimCfg = SimCfg()
    certificate: Optional[CertificateCfg] = None
    output_dir: str = "out"


def _set_path(doc, dotted, value):
    keys = dotted.split(".")
    node = doc
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"override {dotted}: {key} is not a section")
    node[keys[-1]] = value


def parse_override(text):
    """``"sim.step=0.01"`` -> ``("sim.step", 0.01)``; values are JSON, else plain strings."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path=None, overrides=()):
    """Parse a config file (or the defaults) and apply ``key.path=value`` overrides."""
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
    defaults = ExperimentConfig().model_dump()
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        section = key.split(".", 1)[0]
        if "." in key and section not in doc and isinstance(defaults.get(section), dict):
            # overriding one field of an absent section starts from its defaults
            doc[section] = dict(defaults[section])
        _set_path(doc, key, value)
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            lines.append(f"{loc}: {err['msg']}")
        raise ConfigurationError("invalid config: " + "; ".join(lines)) from None


# --------------------------------------------------------------------------
# Building library objects
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Experiment:
    model: dyn.PlantModel
    spec: dyn.ObserverSpec
    schedule: sim.SamplingSchedule
    noise: object
    input: object
    sim: sim.SimConfig


def build_predictor(cfg):
    if isinstance(cfg, ZOHCfg):
        return dyn.ZOH()
    if isinstance(cfg, ZOHExpGainCfg):
        return dyn.ZOHExpGain(cfg.eta)
    if isinstance(cfg, InterSampleCfg):
        return dyn.InterSamplePredictor()
    return dyn.ConstantMinusQ(cfg.q)


def build_model(cfg):
    K = build_predictor(cfg.predictor)
    if isinstance(cfg.model, LinearModelCfg):
        m = cfg.model
        return dyn.builtin_linear(m.A, m.B, m.C, m.R, K=K)
    model, spec = dyn.builtin_oscillator()
    return model, spec.with_gain(K)


def build_input(cfg, m):
    c = cfg.input
    if isinstance(c, ConstantInputCfg):
        signal = dyn.ConstantInput(c.value)
    elif isinstance(c, SinusoidInputCfg):
        signal = dyn.SinusoidInput(c.amplitude, c.frequency, c.phase)
    elif isinstance(c, TabulatedInputCfg):
        signal = dyn.TabulatedInput(c.breakpoints, c.values)
    else:
        return dyn.ZeroInput(m)
    if signal.m != m:
        raise ConfigurationError(f"input: dimension {signal.m} does not match the model input dimension {m}")
    return signal


def build_noise(cfg):
    c = cfg.noise
    if isinstance(c, UniformNoiseCfg):
        return sim.UniformNoise(c.delta, c.seed)
    if isinstance(c, TabulatedNoiseCfg):
        return sim.TabulatedNoise(c.values)
    return sim.ZeroNoise()


def build_experiment(cfg):
    """Construct and cross-validate every object needed by :func:`simulate`.

    Nothing is integrated; all dimension and step checks happen here so that
    a bad config fails before any output is written.
    """
    model, spec = build_model(cfg)
    s = cfg.schedule
    schedule = sim.make_schedule(s.kind, s.T, cfg.sim.horizon, s.min_gap_fraction, s.seed)
    simcfg = sim.SimConfig(cfg.sim.step, cfg.sim.horizon, tuple(cfg.sim.x0), tuple(cfg.sim.z0))
    if len(simcfg.x0) != model.n:
        raise ConfigurationError(f"sim.x0: length {len(simcfg.x0)} does not match state dimension {model.n}")
    if len(simcfg.z0) != model.n:
        raise ConfigurationError(f"sim.z0: length {len(simcfg.z0)} does not match state dimension {model.n}")
    min_gap = float(np.min(schedule.gaps, initial=np.inf))
    if simcfg.step > 0.5 * min_gap:
        raise ConfigurationError(f"sim.step: {simcfg.step} exceeds half the smallest sampling gap {min_gap}")
    noise = build_noise(cfg)
    n_samples = int(np.count_nonzero(np.asarray(schedule.times) <= simcfg.horizon))
    noise.draw(n_samples, model.p)  # dimension/length check only
    return Experiment(model, spec, schedule, noise, build_input(cfg, model.m), simcfg)
