"""Exact Gaussian-mixture analytics under the diffusion kernel.

All quantities (posteriors, log-ratios, scores, denoisers) are available in
closed form for an isotropic mixture, which makes this module the oracle
against which samplers and estimators are validated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .schedule import NoiseSchedule, alpha_sigma

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic Gaussian mixture prior: N components in R^d, shared sigma0."""

    means: np.ndarray  # (N, d)
    sigma0: float
    log_priors: np.ndarray = field(default=None)  # (N,)

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        object.__setattr__(self, "means", means)
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be >= 0")
        n = means.shape[0]
        if self.log_priors is None:
            lp = np.full(n, -np.log(n))
        else:
            lp = np.asarray(self.log_priors, dtype=float)
            if lp.shape != (n,):
                raise ValueError("log_priors must have one entry per component")
            if abs(np.exp(lp).sum() - 1.0) > 1e-12:
                raise ValueError("priors must sum to 1")
        object.__setattr__(self, "log_priors", lp)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @property
    def priors(self) -> np.ndarray:
        return np.exp(self.log_priors)

    def q(self) -> np.ndarray:
        """Per-component mean-norm scaling ||mu_k||^2 / d."""
        return np.sum(self.means**2, axis=1) / self.d

    def delta2(self) -> np.ndarray:
        """Pairwise separation scaling ||mu_i - mu_k||^2 / d, shape (N, N)."""
        diff = self.means[:, None, :] - self.means[None, :, :]
        return np.sum(diff**2, axis=-1) / self.d


def symmetric_two_class(d: int, q: float, sigma0: float) -> MixtureSpec:
    """Equiprobable two-class mixture at +-mu e1 with ||mu||^2 = q d."""
    if d < 1 or q <= 0:
        raise ValueError("need d >= 1 and q > 0")
    mu = np.zeros((2, d))
    mu[0, 0] = np.sqrt(q * d)
    mu[1, 0] = -np.sqrt(q * d)
    return MixtureSpec(mu, sigma0)


def hierarchical_mixture(
    levels: Sequence[tuple[float, int]],
    d: int,
    sigma0: float,
    max_classes: int = 4096,
) -> MixtureSpec:
    """Nested-cluster means: each level adds offsets along fresh coordinate axes.

    ``levels`` is a list of (offset magnitude, branching factor); the class
    count is the product of branching factors.
    """
    n_classes = 1
    for offset, branch in levels:
        if branch < 2:
            raise ValueError("branching factors must be >= 2")
        if offset <= 0:
            raise ValueError("offsets must be > 0")
        n_classes *= branch
    if n_classes > max_classes:
        raise ValueError(f"class count {n_classes} exceeds cap {max_classes}")

    means = np.zeros((1, d))
    axis = 0
    for offset, branch in levels:
        if axis + branch - 1 > d:
            raise ValueError("dimension too small for requested levels")
        new = []
        for mean in means:
            for b in range(branch):
                m = mean.copy()
                # branch 0 goes negative along the first axis of this level,
                # the rest spread over subsequent axes
                if b == 0:
                    m[axis] -= offset
                else:
                    m[axis + b - 1] += offset
                new.append(m)
        means = np.asarray(new)
        axis += branch - 1
    return MixtureSpec(means, sigma0)


@dataclass(frozen=True)
class ComponentStats:
    """Per-component mean m_k(t) = alpha_t mu_k and shared variance v(t)."""

    m: np.ndarray  # (N, d)
    v: float
    alpha: float
    sigma2: float

    @property
    def degenerate(self) -> bool:
        return self.v == 0.0


@dataclass(frozen=True)
class PairwiseEvidence:
    """Gaussian law of the log-ratio Lambda_ik given Z = i."""

    m_ik: float
    v_ik: float
    snr: float


def component_stats(spec: MixtureSpec, sched: NoiseSchedule, t: float) -> ComponentStats:
    alpha, sigma2 = alpha_sigma(sched, float(t))
    v = float(alpha) ** 2 * spec.sigma0**2 + float(sigma2)
    return ComponentStats(float(alpha) * spec.means, v, float(alpha), float(sigma2))


def _require_live(cs: ComponentStats):
    if cs.degenerate:
        raise ValueError("degenerate kernel: v(t) = 0 (t = 0 with sigma0 = 0)")


def _sq_dists(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    """||x - m_k||^2 for x of shape (..., d), m of shape (N, d) -> (..., N)."""
    # expanded form keeps the inner product a BLAS call for large batches
    xsq = np.sum(x**2, axis=-1)[..., None]
    msq = np.sum(m**2, axis=-1)
    return xsq - 2.0 * (x @ m.T) + msq


def _check_state(spec: MixtureSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.d:
        raise ValueError(f"state has dimension {x.shape[-1]}, expected {spec.d}")
    if not np.all(np.isfinite(x)):
        raise ValueError("state contains non-finite entries")
    return x


def _log_weights(spec: MixtureSpec, cs: ComponentStats, x: np.ndarray) -> np.ndarray:
    """Unnormalized log posterior weights, shape (..., N)."""
    return spec.log_priors - _sq_dists(x, cs.m) / (2.0 * cs.v)


def posterior(spec: MixtureSpec, sched: NoiseSchedule, t: float, x) -> np.ndarray:
    """Component posteriors gamma_k(x, t); max-subtracted log-space softmax."""
    x = _check_state(spec, x)
    cs = component_stats(spec, sched, t)
    _require_live(cs)
    lw = _log_weights(spec, cs, x)
    lw -= lw.max(axis=-1, keepdims=True)
    w = np.exp(lw)
    return w / w.sum(axis=-1, keepdims=True)


def log_ratio(spec: MixtureSpec, sched: NoiseSchedule, t: float, x, i: int, k: int):
    """Log-posterior ratio Lambda_ik = log gamma_i - log gamma_k, in closed form."""
    x = _check_state(spec, x)
    cs = component_stats(spec, sched, t)
    _require_live(cs)
    sq = _sq_dists(x, cs.m[[i, k]])
    return (sq[..., 1] - sq[..., 0]) / (2.0 * cs.v) + (
        spec.log_priors[i] - spec.log_priors[k]
    )


def evidence_stats(
    spec: MixtureSpec, sched: NoiseSchedule, t: float, i: int, k: int
) -> PairwiseEvidence:
    """Mean/variance of Lambda_ik given Z = i, and the effective SNR."""
    if i == k:
        raise ValueError("evidence requires distinct classes")
    cs = component_stats(spec, sched, t)
    _require_live(cs)
    sep = float(np.sum((cs.m[i] - cs.m[k]) ** 2))
    return PairwiseEvidence(sep / (2.0 * cs.v), sep / cs.v, sep / (4.0 * cs.v))


def snr_asymptotic(sched: NoiseSchedule, d: int, sigma0: float, t):
    """High-dimensional VP SNR scaling with unit proportionality constant."""
    from .schedule import ScheduleKind

    if sched.kind != ScheduleKind.VP:
        raise ValueError("asymptotic SNR form is VP-only")
    t = np.asarray(t, dtype=float)
    e = np.exp(-2.0 * t)
    return d * e / (e * sigma0**2 + 1.0 - e)


def component_score(spec: MixtureSpec, sched: NoiseSchedule, t: float, x, k: int):
    """Score of the k-th component marginal: -(x - m_k) / v."""
    x = _check_state(spec, x)
    cs = component_stats(spec, sched, t)
    _require_live(cs)
    return -(x - cs.m[k]) / cs.v


def _subset_indices(spec: MixtureSpec, subset) -> np.ndarray:
    if subset is None:
        return np.arange(spec.n_classes)
    idx = np.asarray(list(subset), dtype=int)
    if idx.size == 0:
        raise ValueError("class subset must be nonempty")
    return idx


def mixture_score(spec: MixtureSpec, sched: NoiseSchedule, t: float, x, subset=None):
    """Posterior-weighted score of the (sub-)mixture marginal."""
    x = _check_state(spec, x)
    cs = component_stats(spec, sched, t)
    _require_live(cs)
    idx = _subset_indices(spec, subset)
    lw = _log_weights(spec, cs, x)[..., idx]
    lw -= lw.max(axis=-1, keepdims=True)
    w = np.exp(lw)
    gamma = w / w.sum(axis=-1, keepdims=True)
    # sum_k gamma_k * -(x - m_k)/v = -(x - sum_k gamma_k m_k)/v
    return -(x - gamma @ cs.m[idx]) / cs.v


def log_subset_density(spec: MixtureSpec, sched: NoiseSchedule, t: float, x, subset=None):
    """Log density of the renormalized sub-mixture marginal p_t(x | Z in subset)."""
    x = _check_state(spec, x)
    cs = component_stats(spec, sched, t)
    _require_live(cs)
    idx = _subset_indices(spec, subset)
    lp = spec.log_priors[idx]
    lp = lp - np.logaddexp.reduce(lp)
    ll = lp - _sq_dists(x, cs.m[idx]) / (2.0 * cs.v) - 0.5 * spec.d * (
        LOG_2PI + np.log(cs.v)
    )
    return np.logaddexp.reduce(ll, axis=-1)


def denoiser(spec: MixtureSpec, sched: NoiseSchedule, t: float, x, subset=None):
    """Exact posterior mean E[x0 | x_t] for the (sub-)mixture, via Tweedie."""
    cs = component_stats(spec, sched, t)
    _require_live(cs)
    if cs.alpha == 0.0:
        raise ValueError("alpha_t = 0: denoiser undefined")
    s = mixture_score(spec, sched, t, x, subset=subset)
    x = np.asarray(x, dtype=float)
    return (x + cs.sigma2 * s) / cs.alpha
