"""Online posterior tracking along reverse trajectories.

The tracker estimates the binary partition posterior using only denoiser
evaluations: each reverse step contributes the log-likelihood ratio of the
observed transition under the two branch dynamics, turning partitioned
entropy estimation into a sequential log-odds filter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import mixture as mx
from .entropy import EntropyProfile, Partition, _binary_entropy, sigmoid
from .mixture import MixtureSpec
from .schedule import NoiseSchedule, alpha_sigma, diffusion_coeff, drift, reverse_time_grid, sigma, speciation_time
from .sde import GuidanceConfig, guided_score, terminal_sample, trajectory_rng

GAMMA_EPS = 1e-12

# A denoiser handle maps (x, t) -> predicted clean state x0_hat; this is the
# seam where a trained model would plug in. Units of t are the schedule's own
# diffusion time (sigma for EDM); output shape matches the input state.
DenoiserHandle = Callable[[np.ndarray, float], np.ndarray]


@dataclass
class PosteriorTrack:
    """Running branch posterior per step for a batch of trajectories."""

    times: np.ndarray          # (T,)
    gamma: np.ndarray          # (T, n) posterior of branch A
    branch: str                # which partition side generated the trajectories

    @property
    def entropy(self) -> np.ndarray:
        return _binary_entropy(self.gamma)


def exact_denoiser(spec: MixtureSpec, sched: NoiseSchedule, subset=None) -> DenoiserHandle:
    """Exact GMM posterior-mean denoiser restricted to a class subset."""

    def handle(x, t):
        return mx.denoiser(spec, sched, t, x, subset=subset)

    return handle


def _score_from_denoiser(handle: DenoiserHandle, sched: NoiseSchedule, x, t):
    """Tweedie relation: s = (alpha x0_hat - x) / sigma^2."""
    alpha, sigma2 = alpha_sigma(sched, float(t))
    if sigma2 == 0.0:
        raise ValueError("score undefined at sigma_t = 0")
    return (float(alpha) * handle(x, t) - x) / float(sigma2)


def _step_mean(handle: DenoiserHandle, sched: NoiseSchedule, x, t, dt):
    s = _score_from_denoiser(handle, sched, x, t)
    g2 = float(diffusion_coeff(sched, t))
    return x - dt * (drift(sched, x, t) - g2 * s)


def update_posterior(
    gamma,
    x_t,
    x_prev,
    t: float,
    dt: float,
    denoiser_a: DenoiserHandle,
    denoiser_b: DenoiserHandle,
    sched: NoiseSchedule,
):
    """One log-odds update from the transition x_t -> x_prev (next-lower noise).

    The increment is the Gaussian transition log-likelihood ratio of the two
    branch reverse kernels, which reduces to a scaled difference of squared
    reconstruction errors because both share the variance g_t^2 dt.
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0.0) or np.any(gamma >= 1.0):
        raise ValueError("gamma must lie strictly inside (0, 1)")
    x_t = np.asarray(x_t, dtype=float)
    x_prev = np.asarray(x_prev, dtype=float)
    var = float(diffusion_coeff(sched, t)) * dt
    m_a = _step_mean(denoiser_a, sched, x_t, t, dt)
    m_b = _step_mean(denoiser_b, sched, x_t, t, dt)
    if var == 0.0:
        if np.allclose(x_prev, m_a) and np.allclose(x_prev, m_b):
            return gamma
        raise ValueError("zero transition variance with off-mean state")
    err_a = np.sum((x_prev - m_a) ** 2, axis=-1)
    err_b = np.sum((x_prev - m_b) ** 2, axis=-1)
    incr = (err_b - err_a) / (2.0 * var)
    if not np.all(np.isfinite(incr)):
        raise FloatingPointError("non-finite posterior increment")
    logit = np.log(gamma) - np.log1p(-gamma)
    return np.clip(sigmoid(logit + incr), GAMMA_EPS, 1.0 - GAMMA_EPS)


def _branch_score_fn(handle: DenoiserHandle, sched: NoiseSchedule):
    def score(x, t):
        return _score_from_denoiser(handle, sched, x, t)

    return score


def track_branch(
    denoiser_gen: DenoiserHandle,
    denoiser_a: DenoiserHandle,
    denoiser_b: DenoiserHandle,
    sched: NoiseSchedule,
    d: int,
    steps: int,
    n: int,
    seed: int,
    stream: int,
    guidance: GuidanceConfig = None,
    uncond_denoiser: DenoiserHandle = None,
    record_states: bool = False,
):
    """Generate n reverse trajectories with ``denoiser_gen``'s score and track
    the branch posterior with the (always unguided) pair (a, b)."""
    grid = reverse_time_grid(sched, sched.t_max, steps)
    rng = trajectory_rng(seed, stream)
    scale = 1.0 if sched.kind.value == "vp" else sched.sigma_max
    x = scale * rng.standard_normal((n, d))
    gamma = np.full(n, 0.5)
    gammas = np.empty((len(grid), n))
    gammas[0] = gamma
    states = np.empty((len(grid), n, d)) if record_states else None
    if record_states:
        states[0] = x
    gen_score = _branch_score_fn(denoiser_gen, sched)
    uncond_score = _branch_score_fn(uncond_denoiser, sched) if uncond_denoiser else None
    for j in range(steps):
        t_j = grid[j]
        dt = t_j - grid[j + 1]
        s = gen_score(x, t_j)
        if guidance is not None and guidance.omega != 1.0:
            s = guided_score(s, uncond_score(x, t_j), float(sigma(sched, t_j)), guidance)
        g2 = float(diffusion_coeff(sched, t_j))
        x_prev = (
            x
            - dt * (drift(sched, x, t_j) - g2 * s)
            + np.sqrt(g2 * dt) * rng.standard_normal((n, d))
        )
        gamma = update_posterior(gamma, x, x_prev, t_j, dt, denoiser_a, denoiser_b, sched)
        x = x_prev
        gammas[j + 1] = gamma
        if record_states:
            states[j + 1] = x
    return grid, gammas, states


def estimate_entropy_online(
    denoisers: tuple,
    sched: NoiseSchedule,
    partition: Partition,
    steps: int,
    n_trajectories: int,
    seed: int,
    d: int,
    guidance: GuidanceConfig = None,
    uncond_denoiser: DenoiserHandle = None,
) -> EntropyProfile:
    """Online estimate of the partitioned entropy along reverse trajectories.

    ``denoisers`` is the (branch A, branch B) handle pair. For each branch,
    n trajectories are generated with that branch's score (guided if
    requested), the posterior is tracked with the unguided pair, and the
    per-step binary entropies of both branches are averaged with weight 1/2.
    """
    if n_trajectories < 2 or steps < 2:
        raise ValueError("need n_trajectories >= 2 and steps >= 2")
    den_a, den_b = denoisers
    branch_means = []
    branch_vars = []
    grid = None
    for stream, gen in enumerate((den_a, den_b)):
        grid, gammas, _ = track_branch(
            gen, den_a, den_b, sched, d, steps, n_trajectories, seed, stream,
            guidance=guidance, uncond_denoiser=uncond_denoiser,
        )
        h = _binary_entropy(gammas)  # (T, n), h >= 0
        branch_means.append(h.mean(axis=1))
        branch_vars.append(h.var(axis=1) / n_trajectories)
    H = 0.5 * (branch_means[0] + branch_means[1])
    stderr = 0.5 * np.sqrt(branch_vars[0] + branch_vars[1])
    from .entropy import _fd_stderr, entropy_production_fd

    order = np.argsort(grid)
    Hdot = np.empty_like(H)
    Hdot[order] = entropy_production_fd(grid[order], H[order])
    scale = speciation_time(sched, d)
    u = grid / scale.t_s if not scale.degenerate else np.full_like(grid, np.nan)
    return EntropyProfile(
        grid, u, H, stderr, Hdot, _fd_stderr(grid, stderr), n_trajectories, seed
    )


def distortion_profile(base: EntropyProfile, guided: EntropyProfile) -> np.ndarray:
    """Per-time shift of entropy production under guidance: Hdot_w - Hdot."""
    if base.times.shape != guided.times.shape or not np.allclose(base.times, guided.times):
        raise ValueError("profiles must share the same time grid")
    from .entropy import entropy_production_fd

    order = np.argsort(base.times)
    hd_base = np.empty_like(base.H)
    hd_guided = np.empty_like(guided.H)
    hd_base[order] = entropy_production_fd(base.times[order], base.H[order])
    hd_guided[order] = entropy_production_fd(guided.times[order], guided.H[order])
    return hd_guided - hd_base
