"""Forward kernel sampling and reverse-SDE Euler-Maruyama integration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mixture import MixtureSpec, component_stats
from .schedule import NoiseSchedule, ScheduleKind, diffusion_coeff, drift, reverse_time_grid, sigma


@dataclass(frozen=True)
class GuidanceConfig:
    """Interval-gated classifier-free guidance.

    omega = 1 is the pure conditional score; guidance applies only where
    sigma_t lies in [sigma_low, sigma_high], the conditional score is used
    elsewhere.
    """

    omega: float
    sigma_low: float
    sigma_high: float
    cond_subset: tuple = None
    uncond_subset: tuple = None

    def __post_init__(self):
        if not np.isfinite(self.omega):
            raise ValueError("omega must be finite")
        if self.sigma_low > self.sigma_high:
            raise ValueError("sigma_low must be <= sigma_high")


@dataclass(frozen=True)
class Trajectory:
    """Batch of reverse trajectories on a strictly decreasing time grid.

    ``states`` has shape (len(times), n, d).
    """

    times: np.ndarray
    states: np.ndarray
    condition: object = None

    def __post_init__(self):
        if len(self.times) != self.states.shape[0]:
            raise ValueError("times and states length mismatch")
        if np.any(np.diff(self.times) >= 0):
            raise ValueError("times must be strictly decreasing")

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


def trajectory_rng(seed: int, stream: int) -> np.random.Generator:
    """Keyed generator: identical (seed, stream) -> identical draws, regardless
    of how work is distributed over workers."""
    return np.random.default_rng([seed, stream])


def forward_sample(
    spec: MixtureSpec,
    sched: NoiseSchedule,
    t: float,
    k: int,
    rng: np.random.Generator,
    n: int = 1,
) -> np.ndarray:
    """Draw x_t | Z = k from the closed-form kernel: N(m_k(t), v(t) I)."""
    cs = component_stats(spec, sched, t)
    return cs.m[k] + np.sqrt(cs.v) * rng.standard_normal((n, spec.d))


def terminal_sample(
    spec: MixtureSpec, sched: NoiseSchedule, rng: np.random.Generator, n: int = 1
) -> np.ndarray:
    """Initial state for reverse integration: N(0, I) for VP, N(0, sigma_max^2 I) for EDM."""
    scale = 1.0 if sched.kind == ScheduleKind.VP else sched.sigma_max
    return scale * rng.standard_normal((n, spec.d))


def guided_score(s_cond, s_uncond, sigma_t: float, cfg: GuidanceConfig):
    """Effective score: s_u + omega (s_c - s_u) inside the gate, s_c outside."""
    if not (cfg.sigma_low <= sigma_t <= cfg.sigma_high):
        return s_cond
    if cfg.omega == 1.0:
        return s_cond
    return s_uncond + cfg.omega * (np.asarray(s_cond) - np.asarray(s_uncond))


def integrate_reverse(
    score_fn: Callable,
    sched: NoiseSchedule,
    t_start: float,
    steps: int,
    rng: np.random.Generator,
    n: int = 1,
    x_init: np.ndarray = None,
    guidance: GuidanceConfig = None,
    uncond_score_fn: Callable = None,
    condition=None,
    record: bool = True,
) -> Trajectory:
    """Euler-Maruyama integration of the reverse SDE from t_start down the grid.

    ``score_fn(x, t)`` is the (conditional) score; with ``guidance`` set, the
    effective score per step comes from :func:`guided_score` using
    ``uncond_score_fn`` as the second branch.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if guidance is not None and guidance.omega != 1.0 and uncond_score_fn is None:
        raise ValueError("guidance requires an unconditional score function")

    grid = reverse_time_grid(sched, t_start, steps)
    if x_init is None:
        raise ValueError("x_init is required (draw it with terminal_sample)")
    x = np.array(x_init, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[0] != n:
        raise ValueError("x_init batch size mismatch")

    states = np.empty((len(grid), n, x.shape[1])) if record else None
    if record:
        states[0] = x
    for j in range(steps):
        t_j = grid[j]
        dt = t_j - grid[j + 1]
        s = score_fn(x, t_j)
        if guidance is not None:
            if guidance.omega == 1.0:
                s_eff = s
            else:
                s_eff = guided_score(s, uncond_score_fn(x, t_j), float(sigma(sched, t_j)), guidance)
        else:
            s_eff = s
        g2 = float(diffusion_coeff(sched, t_j))
        mean = x - dt * (drift(sched, x, t_j) - g2 * s_eff)
        x = mean + np.sqrt(g2 * dt) * rng.standard_normal(x.shape)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state at step {j} (t = {t_j:.6g})")
        if record:
            states[j + 1] = x
    if not record:
        states = np.stack([x])
        return Trajectory(grid[-1:], states, condition)
    return Trajectory(grid, states, condition)
