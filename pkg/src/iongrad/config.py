"""Run configuration: YAML file, strict schema, unit conversion.

Frequencies are entered in Hz and converted to angular frequency once, in
:func:`resolve`. Everything downstream works in rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from iongrad.chain_modes import DIRECTIONS, CrystalSpec
from iongrad.constants import AMU, BA138_MASS, TWO_PI
from iongrad.drive_model import BeamPair, DriveConfig
from iongrad.errors import ConfigError
from iongrad.experiment import DECAY_MODELS, SequenceSpec
from iongrad.lindblad import NoiseModel

SCHEMA_VERSION = 1
PAPER_DEFAULT = "paper_default.yaml"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CrystalCfg(_Strict):
    n_ions: int = Field(ge=1)
    axial_hz: float = Field(gt=0)
    radial_x_hz: float = Field(gt=0)
    radial_y_hz: float = Field(gt=0)
    ion_mass_amu: float | None = Field(default=None, gt=0)


class BeamCfg(_Strict):
    waist_m: float = Field(gt=0)
    power_tem00: float = Field(default=1.0, ge=0)
    power_tem10: float = Field(default=1.0, ge=0)
    polarization: Literal["lin_parallel", "lin_perpendicular"] = "lin_parallel"
    stark_sensitivity_hz: float = Field(default=4.0e3, gt=0)
    ramsey_time_s: float = Field(default=1.0e-4, gt=0)
    scan_points: int = Field(default=801, ge=3)


class DriveCfg(_Strict):
    target_ions: tuple[int, int]
    detuning_hz: float = Field(gt=0)
    n_loops: int = Field(ge=1)
    direction: Literal["axial", "radial_x", "radial_y"] = "axial"
    target_mode: int = Field(default=0, ge=0)
    k_eff_per_m: float = Field(default=1.0e6, gt=0)
    calibration_policy: Literal["target", "full"] = "target"

    @field_validator("target_ions")
    @classmethod
    def _distinct(cls, v):
        if v[0] == v[1]:
            raise ValueError("target ions must be distinct")
        if min(v) < 0:
            raise ValueError("ion indices are 0-based and non-negative")
        return v


class NoiseCfg(_Strict):
    t1_s: float | None = Field(default=None, gt=0)
    t2_s: float | None = Field(default=None, gt=0)
    motional_coherence_s: float | None = Field(default=None, gt=0)
    motional_coherence_radial_s: float | None = Field(default=None, gt=0)
    heating_rate_per_ion: float = Field(default=0.0, ge=0)
    heating_rate_per_ion_radial: float | None = Field(default=None, ge=0)
    breathing_heating_factor: float = Field(default=1.0, ge=0)
    t1_branching: Literal["symmetric", "decay"] = "symmetric"
    dephasing: Literal["independent", "collective"] = "independent"
    scattering_rayleigh: float = Field(default=0.0, ge=0)
    scattering_raman: float = Field(default=0.0, ge=0)
    spam_error: float = Field(default=0.0, ge=0, le=1)


class MotionCfg(_Strict):
    nbar_axial: float = Field(default=0.0, ge=0)
    nbar_radial: float = Field(default=0.0, ge=0)


class BudgetCfg(_Strict):
    directions: tuple[Literal["axial", "radial_x", "radial_y"], ...] = ("axial", "radial_x")
    rf_pulses: float = Field(default=0.0, ge=0)
    calibration_policy: Literal["target", "full"] = "target"


class SweepCfg(_Strict):
    n_ions: tuple[int, ...] = (2, 4, 6, 8, 10, 12)
    direction: Literal["axial", "radial_x", "radial_y"] = "axial"
    calibration_policy: Literal["target", "full"] = "full"

    @field_validator("n_ions")
    @classmethod
    def _at_least_two(cls, v):
        if not v or min(v) < 2:
            raise ValueError("every chain in the sweep needs at least 2 ions")
        return v


class ExperimentCfg(_Strict):
    n_gates: tuple[int, ...] = (1, 3, 5, 7, 9)
    echo: bool = True
    n_shots: int = Field(default=200, ge=1)
    rng_seed: int = Field(default=0, ge=0)
    parity_points: int = Field(default=24, ge=8)
    rf_error: float = Field(default=0.0, ge=0, le=1)
    decay_model: str = "exponential"
    residual_span_loops: float = Field(default=0.25, gt=0)
    residual_points: int = Field(default=21, ge=3)

    @field_validator("n_gates")
    @classmethod
    def _odd(cls, v):
        if not v or any(k < 1 or k % 2 == 0 for k in v):
            raise ValueError("n_gates must be odd integers >= 1")
        return v

    @field_validator("decay_model")
    @classmethod
    def _model(cls, v):
        if v not in DECAY_MODELS:
            raise ValueError(f"decay_model must be one of {DECAY_MODELS}")
        return v


class OutputCfg(_Strict):
    directory: str = "out"
    format: Literal["csv", "json", "both"] = "both"
    plots: bool = False


class RunConfig(_Strict):
    schema_version: int
    crystal: CrystalCfg
    beams: BeamCfg
    drive: DriveCfg
    noise: NoiseCfg = NoiseCfg()
    motion: MotionCfg = MotionCfg()
    budget: BudgetCfg = BudgetCfg()
    sweep: SweepCfg = SweepCfg()
    experiment: ExperimentCfg = ExperimentCfg()
    outputs: OutputCfg = OutputCfg()

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v} (expected {SCHEMA_VERSION})")
        return v

    @model_validator(mode="after")
    def _ions_in_chain(self):
        if max(self.drive.target_ions) >= self.crystal.n_ions:
            raise ValueError(f"drive.target_ions {self.drive.target_ions} outside a chain of {self.crystal.n_ions}")
        return self


@dataclass(frozen=True)
class Resolved:
    """Domain objects built from a validated config (angular units)."""

    raw: RunConfig
    crystal: CrystalSpec
    beam: BeamPair
    drive: DriveConfig
    noise: NoiseModel
    sequence: SequenceSpec
    nbar: dict
    stark_sensitivity: float

    def nbar_for(self, direction: str) -> float:
        return self.nbar["axial" if direction == "axial" else "radial"]


def _or_inf(x):
    return math.inf if x is None else float(x)


def resolve(cfg: RunConfig) -> Resolved:
    c, d, n, b = cfg.crystal, cfg.drive, cfg.noise, cfg.beams
    mass = BA138_MASS if c.ion_mass_amu is None else c.ion_mass_amu * AMU
    try:
        crystal = CrystalSpec(c.n_ions, TWO_PI * c.axial_hz, TWO_PI * c.radial_x_hz, TWO_PI * c.radial_y_hz, ion_mass=mass)
        beam = BeamPair(b.waist_m, b.power_tem00, b.power_tem10, polarization=b.polarization)
        drive = DriveConfig(tuple(d.target_ions), TWO_PI * d.detuning_hz, d.n_loops, direction=d.direction,
                            target_index=d.target_mode, k_eff=d.k_eff_per_m)
        noise = NoiseModel(
            t1=_or_inf(n.t1_s), t2=_or_inf(n.t2_s), motional_coherence=_or_inf(n.motional_coherence_s),
            motional_coherence_radial=n.motional_coherence_radial_s,
            heating_rate_per_ion=n.heating_rate_per_ion, heating_rate_per_ion_radial=n.heating_rate_per_ion_radial,
            breathing_heating_factor=n.breathing_heating_factor, scattering_rayleigh=n.scattering_rayleigh,
            scattering_raman=n.scattering_raman, spam_error=n.spam_error, t1_branching=n.t1_branching,
            dephasing=n.dephasing)
        seq = SequenceSpec(n_gates=cfg.experiment.n_gates[0], echo=cfg.experiment.echo,
                           n_shots=cfg.experiment.n_shots, rng_seed=cfg.experiment.rng_seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if d.target_mode >= c.n_ions:
        raise ConfigError(f"drive.target_mode: {d.target_mode} >= number of modes {c.n_ions}")
    if d.direction not in DIRECTIONS:
        raise ConfigError(f"drive.direction: unknown {d.direction!r}")
    nbar = {"axial": cfg.motion.nbar_axial, "radial": cfg.motion.nbar_radial}
    return Resolved(cfg, crystal, beam, drive, noise, seq, nbar, b.stark_sensitivity_hz)


def _format_errors(exc: ValidationError, source: str) -> str:
    lines = [f"{source}: invalid configuration"]
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        if err["type"] == "extra_forbidden":
            msg = "unknown key"
        lines.append(f"  {loc}: {msg}")
    return "\n".join(lines)


def parse_config(data: dict, source: str = "<config>") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, source)) from None


def default_config_text() -> str:
    return resources.files("iongrad.data").joinpath(PAPER_DEFAULT).read_text(encoding="utf-8")


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> Resolved:
    """Read, validate and resolve a config. ``None`` loads the shipped operating-point defaults."""
    if path is None:
        text, source = default_config_text(), PAPER_DEFAULT
    else:
        source = str(path)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{source}: cannot read config ({exc.strerror})") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: YAML syntax error: {exc}") from None
    if overrides:
        data = _merge(data or {}, overrides)
    return resolve(parse_config(data, source))


def _merge(base: dict, upd: dict) -> dict:
    out = dict(base)
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out
