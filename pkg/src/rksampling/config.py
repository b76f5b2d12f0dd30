"""Experiment configuration: ``section.key = value`` text with typed sections.

Unknown sections or keys are rejected.  ``resolved()`` echoes every key in
canonical order with round-trip float formatting, so feeding the echo back
through :func:`parse_config` rebuilds an identical configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

__all__ = [
    "ConfigError",
    "WeightConfig",
    "KernelConfig",
    "QuadConfig",
    "SubspaceConfig",
    "DensityConfig",
    "SamplingConfig",
    "StabilityConfig",
    "ReconstructConfig",
    "ExperimentConfig",
    "parse_config",
    "load_config",
]


class ConfigError(ValueError):
    pass


REQUIRED = object()


@dataclass(frozen=True)
class WeightConfig:
    omega: str = "const"
    nu: str = "const"
    C0: str = "auto"


@dataclass(frozen=True)
class KernelConfig:
    kind: str = "bspline"
    order: int = 4
    sigma: float = 0.5
    duality: str = "orthonormalized"
    d: int = 1


@dataclass(frozen=True)
class QuadConfig:
    h: float = 1.0 / 64
    radius: str = "none"
    rule: str = "gauss_legendre"
    order: int = 4
    tol: float = 1e-7


@dataclass(frozen=True)
class SubspaceConfig:
    N: float = 5.0
    p: float = 2.0
    delta0: str = "auto"
    K_delta0: str = "auto"
    frame_trials: int = 200
    constants: str = "empirical"


@dataclass(frozen=True)
class DensityConfig:
    kind: str = "uniform_cube"
    M: float = 8.0
    sigma: float = 1.0
    components: str = ""
    weights: str = ""


@dataclass(frozen=True)
class SamplingConfig:
    n: int = field(default=REQUIRED)
    trials: int = 100
    seed: int = 0


@dataclass(frozen=True)
class StabilityConfig:
    gamma: float = 0.1
    epsilon: float = 0.01
    delta: float = 0.1
    R: float = 1.0
    test_fns: int = 100


@dataclass(frozen=True)
class ReconstructConfig:
    input: str = ""
    grid_points: int = 1601
    tol: float = 1e-8


SECTIONS = {
    "weight": WeightConfig,
    "kernel": KernelConfig,
    "quad": QuadConfig,
    "subspace": SubspaceConfig,
    "density": DensityConfig,
    "sampling": SamplingConfig,
    "stability": StabilityConfig,
    "reconstruct": ReconstructConfig,
}


def _format(v) -> str:
    if v is REQUIRED:
        return "<required>"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(section: str, key: str, typ, text: str):
    name = f"{section}.{key}"
    try:
        if typ in (int, "int"):
            return int(text.strip())
        if typ in (float, "float"):
            v = float(text)
            if not math.isfinite(v):
                raise ValueError("non-finite")
            return v
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {getattr(typ, '__name__', typ)}") from None
    return text.strip()


@dataclass(frozen=True)
class ExperimentConfig:
    weight: WeightConfig = field(default_factory=WeightConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    quad: QuadConfig = field(default_factory=QuadConfig)
    subspace: SubspaceConfig = field(default_factory=SubspaceConfig)
    density: DensityConfig = field(default_factory=DensityConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    reconstruct: ReconstructConfig = field(default_factory=ReconstructConfig)
    out: str = "out"

    def require(self, *keys: str) -> None:
        """Raise :class:`ConfigError` for required keys that were never set."""
        for key in keys:
            section, _, name = key.partition(".")
            if getattr(getattr(self, section), name) is REQUIRED:
                raise ConfigError(f"{key}: required key is missing")

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        if seed is None:
            return self
        return replace(self, sampling=replace(self.sampling, seed=int(seed)))

    def with_values(self, **updates) -> "ExperimentConfig":
        """``with_values(**{"sampling.n": 50})``-style overrides."""
        text = self.resolved() + "\n" + "\n".join(f"{k} = {_format(v)}" for k, v in updates.items())
        return parse_config(text.replace("= <required>", "= __unset__"), allow_unset=True)

    def items(self):
        for section in SECTIONS:
            obj = getattr(self, section)
            for f in fields(obj):
                yield f"{section}.{f.name}", getattr(obj, f.name)

    def resolved(self) -> str:
        return "\n".join(f"{k} = {_format(v)}" for k, v in self.items())


def parse_config(text: str, allow_unset: bool = False) -> ExperimentConfig:
    values: dict[str, dict] = {s: {} for s in SECTIONS}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {raw!r}")
        key, val = key.strip(), val.strip()
        section, dot, name = key.partition(".")
        if not dot or section not in SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section in key {key!r}; sections are {sorted(SECTIONS)}")
        cls = SECTIONS[section]
        known = {f.name: f for f in fields(cls)}
        if name not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}; {section} accepts {sorted(known)}")
        if allow_unset and val == "__unset__":
            values[section].pop(name, None)
            continue
        values[section][name] = _coerce(section, name, known[name].type, val)
    sections = {}
    for s, cls in SECTIONS.items():
        sections[s] = cls(**values[s])
    return ExperimentConfig(**sections)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    return parse_config(p.read_text())
