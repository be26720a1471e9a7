"""Flat key-value run configuration (diff-friendly experiment logs)."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

_DEFAULTS = {
    "p": 5.1,
    "n": 4096,
    "y_max": 40.0,
    "ds": "auto",
    "stop_ratio": 0.01,
    "lambda0": 1.0,
    "x0": 0.0,
    "b0": "critical",
    "eps0": "zero",
    "eps0_h1": "auto",
    "kappa": 0.1,
    "seed": 0,
    "output_dir": "runs/out",
}

_COMMENTS = {
    "p": "nonlinearity exponent (dimensionless, validated range (5, 5.3])",
    "n": "grid nodes of the rescaled frame",
    "y_max": "right end of the rescaled frame (dimensionless length)",
    "ds": "rescaled time step; 'auto' applies the stepper stability bound",
    "stop_ratio": "stop once lambda/lambda0 contracts below this",
    "lambda0": "initial scale, 0 < lambda0 <= 1 (dimensionless)",
    "x0": "initial center (physical length units)",
    "b0": "initial speed: 'critical' or a number near b_c",
    "eps0": "'zero' or 'seeded' initial deviation",
    "eps0_h1": "H1 size^2 of the seeded deviation; 'auto' = b_c^30 / 2",
    "kappa": "weight plateau half-width (dimensionless, (0, 1/2))",
    "seed": "counter-based RNG seed (Philox), makes runs replayable",
    "output_dir": "artifact directory",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    p: float = 5.1
    n: int = 4096
    y_max: float = 40.0
    ds: float | str = "auto"
    stop_ratio: float = 0.01
    lambda0: float = 1.0
    x0: float = 0.0
    b0: float | str = "critical"
    eps0: str = "zero"
    eps0_h1: float | str = "auto"
    kappa: float = 0.1
    seed: int = 0
    output_dir: str = "runs/out"

    def validate(self) -> "RunConfig":
        if not (5.0 < self.p <= 5.3):
            raise ConfigError(f"p={self.p} outside the validated range (5, 5.3]")
        if self.n < 256:
            raise ConfigError("need n >= 256")
        if not (0.0 < self.lambda0 <= 1.0):
            raise ConfigError("need 0 < lambda0 <= 1")
        if not (0.0 < self.stop_ratio < 1.0):
            raise ConfigError("need 0 < stop_ratio < 1")
        if not (0.0 < self.kappa < 0.5):
            raise ConfigError("need 0 < kappa < 1/2")
        if self.eps0 not in ("zero", "seeded"):
            raise ConfigError("eps0 must be 'zero' or 'seeded'")
        if isinstance(self.ds, str) and self.ds != "auto":
            raise ConfigError("ds must be a number or 'auto'")
        if isinstance(self.b0, str) and self.b0 != "critical":
            raise ConfigError("b0 must be a number or 'critical'")
        if isinstance(self.eps0_h1, str) and self.eps0_h1 != "auto":
            raise ConfigError("eps0_h1 must be a number or 'auto'")
        return self

    def to_text(self) -> str:
        lines = ["# gkdvlab run configuration"]
        for key, default in _DEFAULTS.items():
            val = getattr(self, key)
            lines.append(f"{key} = {val}  # {_COMMENTS[key]}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return asdict(self)


def _coerce(key: str, raw: str):
    default = _DEFAULTS[key]
    if key in ("ds", "b0", "eps0_h1"):
        try:
            return float(raw)
        except ValueError:
            return raw
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _coerce(key, raw))
    return cfg.validate()


def load_config(path) -> RunConfig:
    return parse_config_text(Path(path).read_text())


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(cfg.to_text())
