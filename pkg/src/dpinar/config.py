"""Run configuration stored as flat ``section.key = value`` text."""

from __future__ import annotations

import dataclasses
import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

from .core import DomainError, PriorConfig
from .gibbs import SamplerConfig


@dataclass(frozen=True)
class ElicitationSettings:
    k_min: int = 1
    k_max: Optional[int] = None
    lambda_max: Optional[float] = None


@dataclass(frozen=True)
class EvalSettings:
    horizon: int = 1
    holdout: Optional[int] = None
    jobs: int = 1


@dataclass(frozen=True)
class ForecastSettings:
    horizon: int = 1
    tau_mode: str = "per-draw"


@dataclass(frozen=True)
class SimulateSettings:
    length: int = 144
    alpha: float = 0.3
    rates: Tuple[float, ...] = (5.0,)
    block: int = 0
    y1: Optional[int] = None


@dataclass(frozen=True)
class PathSettings:
    input: Optional[str] = None
    format: str = "auto"
    series: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    model: str = "dp"
    priors: Optional[PriorConfig] = None
    sampler: SamplerConfig = SamplerConfig()
    elicitation: ElicitationSettings = ElicitationSettings()
    eval: EvalSettings = EvalSettings()
    forecast: ForecastSettings = ForecastSettings()
    simulate: SimulateSettings = SimulateSettings()
    paths: PathSettings = PathSettings()

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()[:12]


_SECTIONS = ("priors", "sampler", "elicitation", "eval", "forecast", "simulate", "paths")
_SAMPLER_KEYS = ("n_iterations", "burn_in", "thinning", "fixed_tau")
_PRIOR_KEYS = ("a_alpha", "b_alpha", "a_tau", "b_tau", "a_g0", "b_g0")


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


def dumps(config: RunConfig) -> str:
    lines = ["# dpinar run configuration",
             f"seed = {config.seed}",
             f"model = {config.model}"]
    if config.priors is not None:
        for key in _PRIOR_KEYS:
            lines.append(f"priors.{key} = {_format(getattr(config.priors, key))}")
    for key in _SAMPLER_KEYS:
        lines.append(f"sampler.{key} = {_format(getattr(config.sampler, key))}")
    for section in ("elicitation", "eval", "forecast", "simulate", "paths"):
        obj = getattr(config, section)
        for f in dataclasses.fields(obj):
            lines.append(f"{section}.{f.name} = {_format(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def _parse(text: str, kind):
    text = text.strip()
    if text.lower() == "none":
        return None
    if kind is bool:
        if text.lower() not in ("true", "false"):
            raise ValueError(f"expected true/false, got {text!r}")
        return text.lower() == "true"
    if kind is tuple:
        return tuple(float(v) for v in text.split(",") if v.strip())
    return kind(text)


def _field_kind(cls, name):
    default = {f.name: f for f in dataclasses.fields(cls)}[name]
    value = default.default
    annotation = str(default.type)
    if "Tuple" in annotation:
        return tuple
    if "int" in annotation:
        return int
    if "float" in annotation:
        return float
    if "bool" in annotation:
        return bool
    return type(value) if value is not None else str


def loads(text: str) -> RunConfig:
    """Parse config text; unknown keys and malformed values raise ``DomainError``."""
    top = {}
    sections = {name: {} for name in _SECTIONS}
    for lineno, raw in enumerate(text.splitlines(), 1):
        # a '#' after whitespace starts a trailing comment
        line = re.split(r"\s#", raw, maxsplit=1)[0].strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DomainError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if "." in key:
            section, name = key.split(".", 1)
            if section not in sections:
                raise DomainError(f"config line {lineno}: unknown section {section!r}")
            sections[section][name] = (lineno, value)
        else:
            top[key] = (lineno, value)

    def build(cls, values, section, kinds=None):
        kwargs = {}
        names = {f.name for f in dataclasses.fields(cls)}
        for name, (lineno, value) in values.items():
            if name not in names or (kinds is not None and name not in kinds):
                raise DomainError(f"config line {lineno}: unknown key {section}.{name}")
            try:
                kwargs[name] = _parse(value, _field_kind(cls, name))
            except ValueError as exc:
                raise DomainError(f"config line {lineno}: bad value for {section}.{name}: {exc}")
        return cls(**kwargs)

    for key in top:
        if key not in ("seed", "model"):
            raise DomainError(f"config line {top[key][0]}: unknown key {key!r}")
    seed = int(top["seed"][1]) if "seed" in top else 0
    model = top["model"][1] if "model" in top else "dp"
    priors = None
    if sections["priors"]:
        missing = set(_PRIOR_KEYS) - set(sections["priors"])
        if missing:
            raise DomainError(f"config priors section is missing {sorted(missing)}")
        priors = build(PriorConfig, sections["priors"], "priors", _PRIOR_KEYS)
    sampler = build(SamplerConfig, sections["sampler"], "sampler", _SAMPLER_KEYS)
    return RunConfig(
        seed=seed, model=model, priors=priors,
        sampler=dataclasses.replace(sampler, seed=seed),
        elicitation=build(ElicitationSettings, sections["elicitation"], "elicitation"),
        eval=build(EvalSettings, sections["eval"], "eval"),
        forecast=build(ForecastSettings, sections["forecast"], "forecast"),
        simulate=build(SimulateSettings, sections["simulate"], "simulate"),
        paths=build(PathSettings, sections["paths"], "paths"),
    )


def load(path) -> RunConfig:
    return loads(Path(path).read_text())


def save(config: RunConfig, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, dumps(config))
