"""Solver configuration: every tunable and its default in one place."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields

import tomli


class ConfigError(ValueError):
    pass


@dataclass
class SolveConfig:
    """Solver settings. Zero means "derive from the dimension or initial sigma"."""

    seed: int = 0
    n_initial: int = 0          # 0: 2**11 in 2D, 2**13 in 3D
    steps: int = 6000
    upsamplings: int = 3
    lr: float = 0.2
    lr_decay: float = 0.3
    beta1: float = 0.9
    beta2: float = 0.8
    adam_eps: float = 1e-8
    batch_size: int = 2 ** 15
    knn: int = 0                # 0: 5 in 2D, 9 in 3D
    radius_factor: float = 3.0
    h_factor: float = 0.5       # h = h_factor * sigma, per level
    eps_lagrange: float = 0.0   # 0: initial sigma
    eps_neumann: float = 0.0    # 0: initial sigma
    w_low: float = 0.1
    w_high: float = 0.4
    visibility: bool = True
    dimension_scaling: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.upsamplings < 0 or self.upsamplings >= self.steps:
            raise ConfigError("upsamplings must lie in [0, steps)")
        if not 0 < self.lr_decay < 1:
            raise ConfigError("lr_decay must lie in (0, 1)")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.adam_eps < 0 or self.lr <= 0:
            raise ConfigError("need lr > 0 and adam_eps >= 0")
        if self.batch_size < 1 or self.n_initial < 0 or self.knn < 0:
            raise ConfigError("counts must be positive (or 0 for auto)")
        if self.radius_factor <= 0 or self.h_factor <= 0:
            raise ConfigError("radius_factor and h_factor must be positive")
        if self.eps_lagrange < 0 or self.eps_neumann < 0:
            raise ConfigError("radii must be positive (or 0 for auto)")
        if not 0 <= self.w_low < self.w_high <= 1:
            raise ConfigError("need 0 <= w_low < w_high <= 1")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def resolved(self, dim: int) -> "SolveConfig":
        """Copy with dimension-dependent defaults filled in."""
        return dataclasses.replace(
            self,
            n_initial=self.n_initial or (2 ** 11 if dim == 2 else 2 ** 13),
            knn=self.knn or (5 if dim == 2 else 9),
        )

    def with_updates(self, **kw) -> "SolveConfig":
        known = {f.name for f in fields(self)}
        bad = sorted(set(kw) - known)
        if bad:
            raise ConfigError(f"unknown config key(s): {', '.join(bad)}")
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_toml(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, bool):
                txt = "true" if val else "false"
            else:
                txt = repr(val)
            lines.append(f"{f.name} = {txt}")
        return "\n".join(lines) + "\n"

    @property
    def upsample_steps(self) -> list[int]:
        """Evenly spaced upsampling steps strictly inside ``(0, steps)``."""
        u = self.upsamplings
        return [self.steps * (k + 1) // (u + 1) for k in range(u)]


def _coerce(name: str, typ, raw):
    try:
        if typ is bool:
            if isinstance(raw, bool):
                return raw
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(raw)
            return int(raw)
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


_TYPES = {"int": int, "float": float, "bool": bool}


def parse_overrides(items) -> dict:
    """Turn ``key=value`` strings (and plain mappings) into typed config values."""
    types = {f.name: _TYPES[f.type] if isinstance(f.type, str) else f.type
             for f in fields(SolveConfig)}
    out = {}
    pairs = items.items() if isinstance(items, dict) else (
        item.split("=", 1) if "=" in item else (item, None) for item in items)
    for key, raw in pairs:
        key = key.strip()
        if key not in types:
            raise ConfigError(f"unknown config key: {key}")
        if raw is None:
            raise ConfigError(f"expected key=value, got {key!r}")
        out[key] = _coerce(key, types[key], raw)
    return out


def load_config(path, base: SolveConfig | None = None) -> SolveConfig:
    """Read flat TOML, or a run manifest (JSON with a ``config`` table)."""
    base = base or SolveConfig()
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        if str(path).endswith(".json"):
            doc = json.loads(data.decode("utf-8"))
            doc = doc.get("config", doc)
        else:
            doc = tomli.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError, tomli.TOMLDecodeError) as err:
        raise ConfigError(f"cannot parse {path}: {err}") from None
    return base.with_updates(**parse_overrides(doc))
