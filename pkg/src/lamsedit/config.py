"""Run configuration: sampler settings and backend selection.

Config files are TOML or JSON with the keys
{backend, checkpoint, steps, guidance, inversion_guidance, seed}; environment
variables of the form LAMS_<KEY> override file values.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .backend import BackendError, DiffusionBackend, ToyAffineBackend

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 path
    import tomli as tomllib


@dataclass(frozen=True)
class SamplerConfig:
    """DDIM sampler settings shared by inversion and generation."""

    steps: int = 50
    guidance: float = 7.5
    inversion_guidance: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.guidance < 0 or self.inversion_guidance < 0:
            raise ValueError("guidance scales must be >= 0")

    def to_json(self) -> dict:
        return {
            "steps": self.steps,
            "guidance": self.guidance,
            "inversion_guidance": self.inversion_guidance,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SamplerConfig":
        return cls(
            steps=int(obj.get("steps", 50)),
            guidance=float(obj.get("guidance", 7.5)),
            inversion_guidance=float(obj.get("inversion_guidance", 1.0)),
            seed=int(obj.get("seed", 0)),
        )


@dataclass(frozen=True)
class BackendConfig:
    """Which denoiser to drive and with what sampler settings."""

    backend: str = "toy-a"  # "toy-a" | "toy-b" | "real"
    checkpoint: Optional[str] = None
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    toy_height: int = 8
    toy_width: int = 8

    def to_json(self) -> dict:
        return {
            "backend": self.backend,
            "checkpoint": self.checkpoint,
            "toy_height": self.toy_height,
            "toy_width": self.toy_width,
            **self.sampler.to_json(),
        }


_ENV_KEYS = ("backend", "checkpoint", "steps", "guidance",
             "inversion_guidance", "seed", "toy_height", "toy_width")


def load_backend_config(path: Optional[Path | str] = None,
                        env: Optional[dict] = None) -> BackendConfig:
    """Read a TOML/JSON config file, then apply LAMS_* environment overrides."""
    raw: dict = {}
    if path is not None:
        path = Path(path)
        text = path.read_text()
        if path.suffix in (".toml", ".tml"):
            raw = tomllib.loads(text)
        else:
            raw = json.loads(text)
    env = os.environ if env is None else env
    for key in _ENV_KEYS:
        env_val = env.get(f"LAMS_{key.upper()}")
        if env_val is not None:
            raw[key] = env_val
    sampler = SamplerConfig(
        steps=int(raw.get("steps", 50)),
        guidance=float(raw.get("guidance", 7.5)),
        inversion_guidance=float(raw.get("inversion_guidance", 1.0)),
        seed=int(raw.get("seed", 0)),
    )
    return BackendConfig(
        backend=str(raw.get("backend", "toy-a")),
        checkpoint=raw.get("checkpoint"),
        sampler=sampler,
        toy_height=int(raw.get("toy_height", 8)),
        toy_width=int(raw.get("toy_width", 8)),
    )


_REAL_BACKEND_FACTORY: Optional[Callable[[BackendConfig], DiffusionBackend]] = None


def register_real_backend_factory(factory: Callable[[BackendConfig], DiffusionBackend]) -> None:
    """Install the constructor for the 'real' backend (checkpoint adapter)."""
    global _REAL_BACKEND_FACTORY
    _REAL_BACKEND_FACTORY = factory


def build_backend(config: BackendConfig) -> DiffusionBackend:
    if config.backend in ("toy-a", "toy-b"):
        mode = "A" if config.backend == "toy-a" else "B"
        return ToyAffineBackend(
            mode=mode,
            seed=config.sampler.seed,
            height=config.toy_height,
            width=config.toy_width,
            steps=config.sampler.steps,
        )
    if config.backend == "real":
        if _REAL_BACKEND_FACTORY is None:
            raise BackendError(
                "no real-backend factory registered; install one via "
                "register_real_backend_factory() or select a toy backend"
            )
        return _REAL_BACKEND_FACTORY(config)
    raise BackendError(f"unknown backend {config.backend!r}")
