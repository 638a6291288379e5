"""Decaying weight schedules for latent and attention mixing.

A scheduler is described by four parameters (start, end, until, decay type)
and realized into a per-denoising-iteration weight vector of length T.
Iteration index i runs in loop order: i = 0 is the first denoising step
(t = T), i = T - 1 the last (t = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DECAY_TYPES = ("stepped", "linear", "negexp", "logistic")

# Latent-mixing and attention-mixing defaults, as shipped.
DEFAULT_ATTENTION_SPEC_PARAMS = dict(start=0.7, end=0.1, until=50, decay="logistic")
DEFAULT_LATENT_SPEC_PARAMS = dict(start=0.6, end=0.0, until=10, decay="stepped")


class ScheduleError(ValueError):
    """Raised for invalid scheduler parameters."""


@dataclass(frozen=True)
class SchedulerSpec:
    """Four-parameter description of a decaying mixing schedule.

    start: proportion of inverted representations at the first denoising step.
    end: final proportion after decay.
    until: iteration count by which the weight has decayed to `end`.
    decay: one of "stepped", "linear", "negexp", "logistic".
    """

    start: float
    end: float
    until: int
    decay: str

    def __post_init__(self):
        if self.decay not in DECAY_TYPES:
            raise ScheduleError(
                f"unknown decay type {self.decay!r}; expected one of {DECAY_TYPES}"
            )
        if not (0.0 <= self.end <= self.start <= 1.0):
            raise ScheduleError(
                f"require 0 <= end <= start <= 1, got start={self.start}, end={self.end}"
            )
        if int(self.until) != self.until or self.until < 1:
            raise ScheduleError(f"until must be an integer >= 1, got {self.until}")

    def to_json(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "until": int(self.until),
            "type": self.decay,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SchedulerSpec":
        try:
            return cls(
                start=float(obj["start"]),
                end=float(obj["end"]),
                until=int(obj["until"]),
                decay=str(obj["type"]),
            )
        except KeyError as exc:
            raise ScheduleError(f"scheduler spec missing field {exc.args[0]!r}") from exc

    @classmethod
    def default_attention(cls) -> "SchedulerSpec":
        return cls(**DEFAULT_ATTENTION_SPEC_PARAMS)

    @classmethod
    def default_latent(cls) -> "SchedulerSpec":
        return cls(**DEFAULT_LATENT_SPEC_PARAMS)


@dataclass(frozen=True)
class WeightSchedule:
    """Realized length-T weight vector, indexed by denoising iteration."""

    spec: SchedulerSpec
    weights: np.ndarray

    def __post_init__(self):
        self.weights.setflags(write=False)

    def __len__(self) -> int:
        return len(self.weights)

    def __getitem__(self, i: int) -> float:
        return float(self.weights[i])

    def to_json(self) -> dict:
        return {"spec": self.spec.to_json(), "weights": [float(w) for w in self.weights]}


def _logistic_weights(start: float, end: float, until: int, steps: int) -> np.ndarray:
    # Midpoint at (until - 1) / 2 with slope chosen so the exponent spans
    # [-5, +5] across the decay window; no clamping past `until`.
    i = np.arange(steps, dtype=np.float64)
    if until == 1:
        # Limit of the parameterization as until -> 1: exponent is -5 at
        # i = 0 and +inf beyond.
        exponent = np.where(i == 0, -5.0, np.inf)
    else:
        c = (until - 1) / 2.0
        k = 10.0 / (until - 1)
        exponent = k * (i - c)
    # deep past the decay window exp() overflows to inf; the quotient is
    # still the correct limit (0), so the overflow warning is noise
    with np.errstate(over="ignore"):
        return end + (start - end) / (1.0 + np.exp(exponent))


def make_schedule(spec: SchedulerSpec, steps: int) -> WeightSchedule:
    """Realize `spec` into a length-`steps` non-increasing weight vector.

    Weights are computed in double precision. Every entry lies in
    [spec.end, spec.start] and the sequence is non-increasing.
    """
    if steps < 1:
        raise ScheduleError(f"steps must be >= 1, got {steps}")
    if spec.until > steps:
        raise ScheduleError(
            f"until={spec.until} exceeds the schedule length steps={steps}"
        )

    start, end, until = spec.start, spec.end, spec.until
    i = np.arange(steps, dtype=np.float64)

    if start == end:
        w = np.full(steps, float(start))
    elif spec.decay == "stepped":
        w = np.where(i < until, start, end)
    elif spec.decay == "linear":
        w = np.where(i < until, start - (start - end) * i / until, end)
    elif spec.decay == "negexp":
        # Time constant until/3; hard clamp to `end` from i = until onwards.
        w = np.where(i < until, end + (start - end) * np.exp(-3.0 * i / until), end)
    elif spec.decay == "logistic":
        w = _logistic_weights(start, end, until, steps)
    else:  # pragma: no cover - spec validation rejects this earlier
        raise ScheduleError(f"unknown decay type {spec.decay!r}")

    return WeightSchedule(spec=spec, weights=w)


def preview_schedule(spec: SchedulerSpec, steps: int) -> tuple[WeightSchedule, str]:
    """Realize `spec` and render an (iteration, weight) table for display."""
    schedule = make_schedule(spec, steps)
    lines = [f"{'i':>4}  {'weight':>10}"]
    for idx, w in enumerate(schedule.weights):
        lines.append(f"{idx:>4}  {w:>10.6f}")
    return schedule, "\n".join(lines)


def schedule_rows(schedule: WeightSchedule) -> list[tuple[int, float]]:
    """(i, w_i) pairs of a realized schedule, in loop order."""
    return [(i, float(w)) for i, w in enumerate(schedule.weights)]


def parse_compact_spec(text: str) -> SchedulerSpec:
    """Parse the compact CLI form "start,end,until,type"."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4:
        raise ScheduleError(
            f"expected 'start,end,until,type' with 4 fields, got {text!r}"
        )
    try:
        start, end = float(parts[0]), float(parts[1])
        until = int(parts[2])
    except ValueError as exc:
        raise ScheduleError(f"non-numeric scheduler field in {text!r}") from exc
    if not math.isfinite(start) or not math.isfinite(end):
        raise ScheduleError(f"non-finite scheduler bound in {text!r}")
    return SchedulerSpec(start=start, end=end, until=until, decay=parts[3])
