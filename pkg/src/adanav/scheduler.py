"""Trajectory-length schedules: fixed, uniformly random, and entropy-adaptive.

The adaptive variants map the current policy entropy ``H_c`` to a
trajectory length. Both are anchored at ``(H_i, t_i)`` and grow as entropy
collapses: linearly up to ``eta * t_i`` at zero entropy, or exponentially as
``t_i * exp(alpha * (1 - H_c/H_i))``. The entropy ratio is clamped to
``[0, 1]`` so an entropy overshoot can never shrink the length below ``t_i``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Optional

from .spectral import discrete_policy_entropy

VARIANTS = ("fixed", "random_uniform", "ada_linear", "ada_exponential")


class ScheduleError(ValueError):
    """Invalid schedule configuration."""


def round_half_up(x: float) -> int:
    # ties away from zero for the nonnegative lengths handled here
    return int(math.floor(x + 0.5))


def _clamp(x: int, lo: int, hi: int) -> int:
    return max(lo, min(hi, x))


@dataclass(frozen=True)
class ScheduleSpec:
    variant: str
    t_cap: int
    t: Optional[int] = None
    t_min: Optional[int] = None
    t_max: Optional[int] = None
    t_i: Optional[int] = None
    eta: Optional[float] = None
    alpha: Optional[float] = None
    H_i: Optional[float] = None

    def __post_init__(self):
        v = self.variant
        if v not in VARIANTS:
            raise ScheduleError(f"unknown schedule variant {v!r}; expected one of {VARIANTS}")
        if not isinstance(self.t_cap, int) or self.t_cap < 1:
            raise ScheduleError(f"t_cap must be a positive integer, got {self.t_cap!r}")
        if v == "fixed":
            if self.t is None or not 1 <= self.t <= self.t_cap:
                raise ScheduleError(f"fixed schedule needs 1 <= t <= t_cap, got t={self.t}")
        elif v == "random_uniform":
            if self.t_min is None or self.t_max is None or not (
                1 <= self.t_min <= self.t_max <= self.t_cap
            ):
                raise ScheduleError(
                    f"random schedule needs 1 <= t_min <= t_max <= t_cap, "
                    f"got [{self.t_min}, {self.t_max}] with cap {self.t_cap}"
                )
        else:
            if self.t_i is None or self.t_i < 1:
                raise ScheduleError(f"{v} needs a positive t_i")
            if v == "ada_linear" and (self.eta is None or self.eta <= 1):
                raise ScheduleError(f"ada_linear needs eta > 1, got {self.eta}")
            if v == "ada_exponential" and (self.alpha is None or self.alpha < 0):
                raise ScheduleError(f"ada_exponential needs alpha >= 0, got {self.alpha}")
            if self.H_i is not None and self.H_i <= 0:
                raise ScheduleError(f"reference entropy must be positive, got {self.H_i}")

    @property
    def adaptive(self) -> bool:
        return self.variant in ("ada_linear", "ada_exponential")

    def with_reference(self, H_i: float) -> "ScheduleSpec":
        return replace(self, H_i=H_i)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict) -> "ScheduleSpec":
        known = {"variant", "t_cap", "t", "t_min", "t_max", "t_i", "eta", "alpha", "H_i"}
        extra = set(data) - known
        if extra:
            raise ScheduleError(f"unknown schedule keys: {sorted(extra)}")
        if "variant" not in data or "t_cap" not in data:
            raise ScheduleError("schedule needs at least 'variant' and 't_cap'")
        return cls(**data)

    def describe(self) -> str:
        if self.variant == "fixed":
            return f"Fixed({self.t})"
        if self.variant == "random_uniform":
            return f"RandomUniform({self.t_min}, {self.t_max})"
        if self.variant == "ada_linear":
            return f"AdaLinear(t_i={self.t_i}, eta={self.eta})"
        return f"AdaExponential(t_i={self.t_i}, alpha={self.alpha})"


def fixed(t: int, t_cap: Optional[int] = None) -> ScheduleSpec:
    return ScheduleSpec("fixed", t_cap or t, t=t)


def random_uniform(t_min: int, t_max: int, t_cap: Optional[int] = None) -> ScheduleSpec:
    return ScheduleSpec("random_uniform", t_cap or t_max, t_min=t_min, t_max=t_max)


def ada_linear(t_i: int, eta: float, t_cap: int) -> ScheduleSpec:
    return ScheduleSpec("ada_linear", t_cap, t_i=t_i, eta=eta)


def ada_exponential(t_i: int, alpha: float, t_cap: int) -> ScheduleSpec:
    return ScheduleSpec("ada_exponential", t_cap, t_i=t_i, alpha=alpha)


def capture_reference_entropy(policy) -> float:
    """Entropy of the initial policy; the adaptive maps are undefined at 0."""
    H_i = discrete_policy_entropy(policy)
    if H_i <= 0:
        raise ScheduleError(
            "initial policy is deterministic (entropy 0); adaptive schedules need H_i > 0"
        )
    return H_i


def _entropy_ratio(H_c: float, H_i: float) -> float:
    if H_i is None or H_i <= 0:
        raise ScheduleError("reference entropy H_i must be captured (and positive) first")
    return min(1.0, max(0.0, H_c / H_i))


def ada_linear_length(H_c: float, t_i: int, eta: float, H_i: float, t_cap: int) -> int:
    r = _entropy_ratio(H_c, H_i)
    raw = t_i + (1.0 - r) * (eta * t_i - t_i)
    return _clamp(round_half_up(raw), 1, t_cap)


def ada_exponential_length(H_c: float, t_i: int, alpha: float, H_i: float, t_cap: int) -> int:
    r = _entropy_ratio(H_c, H_i)
    log_len = math.log(t_i) + alpha * (1.0 - r)
    if log_len >= math.log(t_cap):
        return t_cap
    return _clamp(round_half_up(math.exp(log_len)), 1, t_cap)


def next_length(spec: ScheduleSpec, H_c: Optional[float] = None, rng=None) -> int:
    v = spec.variant
    if v == "fixed":
        return spec.t
    if v == "random_uniform":
        if rng is None:
            raise ScheduleError("random_uniform schedule needs an rng")
        return int(rng.integers(spec.t_min, spec.t_max, endpoint=True))
    if H_c is None:
        raise ScheduleError(f"{v} needs the current policy entropy")
    if v == "ada_linear":
        return ada_linear_length(H_c, spec.t_i, spec.eta, spec.H_i, spec.t_cap)
    return ada_exponential_length(H_c, spec.t_i, spec.alpha, spec.H_i, spec.t_cap)
