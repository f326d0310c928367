"""Diffusion noise schedules (VP and EDM) and their derived per-time scalars."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

# EDM reverse-time discretization constants (sigma warp).
EDM_SIGMA_MIN = 0.002
EDM_RHO = 7.0


class ScheduleKind(str, Enum):
    VP = "vp"
    EDM = "edm"


@dataclass(frozen=True)
class SpeciationScale:
    """Speciation time t_s and the rescaling u = t / t_s.

    ``degenerate`` marks t_s == 0 (VP at d=1), where the rescaling is undefined.
    """

    t_s: float
    degenerate: bool = False

    def rescale(self, t):
        if self.degenerate:
            raise ValueError("speciation scale is degenerate (t_s = 0); u undefined")
        return np.asarray(t, dtype=float) / self.t_s


@dataclass(frozen=True)
class NoiseSchedule:
    """Forward-process schedule.

    VP:  alpha_t = exp(-t), sigma_t^2 = 1 - exp(-2t), f(x) = -x, g^2 = 2.
    EDM: alpha_t = 1, sigma_t = t, f = 0, g^2 = 2t; sigma_max = t_max.
    """

    kind: ScheduleKind
    t_max: float
    sigma_max: float | None = None

    def __post_init__(self):
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.kind == ScheduleKind.EDM and self.sigma_max is None:
            object.__setattr__(self, "sigma_max", self.t_max)

    @staticmethod
    def vp(t_max: float = 10.0) -> "NoiseSchedule":
        return NoiseSchedule(ScheduleKind.VP, t_max)

    @staticmethod
    def edm(t_max: float = 80.0) -> "NoiseSchedule":
        return NoiseSchedule(ScheduleKind.EDM, t_max, sigma_max=t_max)

    @staticmethod
    def for_dimension(kind: ScheduleKind, d: int) -> "NoiseSchedule":
        """Default schedule whose horizon covers the full entropy transition."""
        scale = speciation_time_for_kind(kind, d)
        if kind == ScheduleKind.VP:
            return NoiseSchedule.vp(max(10.0, 3.0 * scale.t_s))
        return NoiseSchedule.edm(max(80.0, 3.0 * scale.t_s))


def _check_time(schedule: NoiseSchedule, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > schedule.t_max * (1.0 + 1e-12)):
        raise ValueError(f"t out of schedule range [0, {schedule.t_max}]")
    return t


def alpha_sigma(schedule: NoiseSchedule, t):
    """Closed-form (alpha_t, sigma_t^2) of the Gaussian forward kernel."""
    t = _check_time(schedule, t)
    if schedule.kind == ScheduleKind.VP:
        alpha = np.exp(-t)
        sigma2 = -np.expm1(-2.0 * t)
    else:
        alpha = np.ones_like(t)
        sigma2 = t * t
    return alpha, sigma2


def sigma(schedule: NoiseSchedule, t):
    """Noise standard deviation sigma_t."""
    return np.sqrt(alpha_sigma(schedule, t)[1])


def diffusion_coeff(schedule: NoiseSchedule, t):
    """Squared diffusion coefficient g_t^2 of the forward SDE."""
    t = _check_time(schedule, t)
    if schedule.kind == ScheduleKind.VP:
        return np.full_like(t, 2.0) if t.ndim else 2.0
    return 2.0 * t


def drift(schedule: NoiseSchedule, x, t):
    """Forward drift f(x, t): -x for the VP OU process, 0 for EDM."""
    _check_time(schedule, t)
    x = np.asarray(x, dtype=float)
    if schedule.kind == ScheduleKind.VP:
        return -x
    return np.zeros_like(x)


def speciation_time_for_kind(kind: ScheduleKind, d: int) -> SpeciationScale:
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if kind == ScheduleKind.VP:
        t_s = 0.5 * math.log(d)
        return SpeciationScale(t_s, degenerate=(t_s == 0.0))
    return SpeciationScale(math.sqrt(d))


def speciation_time(schedule: NoiseSchedule, d: int) -> SpeciationScale:
    """Speciation time scale: (1/2) ln d for VP, sqrt(d) for EDM."""
    return speciation_time_for_kind(schedule.kind, d)


def reverse_time_grid(schedule: NoiseSchedule, t_start: float, steps: int) -> np.ndarray:
    """Decreasing integration grid of ``steps + 1`` points starting at t_start.

    VP uses a uniform grid down to 0; EDM warps uniformly in sigma^(1/rho)
    (rho = 7) down to sigma_min = 0.002, with t identified with sigma.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    _check_time(schedule, t_start)
    if schedule.kind == ScheduleKind.VP:
        return np.linspace(t_start, 0.0, steps + 1)
    j = np.arange(steps + 1) / steps
    inv_rho = 1.0 / EDM_RHO
    warped = t_start**inv_rho + j * (EDM_SIGMA_MIN**inv_rho - t_start**inv_rho)
    return warped**EDM_RHO
