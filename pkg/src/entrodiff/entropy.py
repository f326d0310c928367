"""Monte Carlo and quadrature estimators for class-conditional entropy,
entropy production, and partitioned (binary) entropy."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import mixture as mx
from .mixture import MixtureSpec, component_stats
from .schedule import NoiseSchedule, diffusion_coeff, speciation_time

_CHUNK = 4096


class MCEstimate(NamedTuple):
    value: float
    stderr: float


class TransitionWindow(NamedTuple):
    t_lo: float
    t_hi: float
    width: float


@dataclass(frozen=True)
class Partition:
    """Binary semantic split of (a subset of) the class set.

    With ``complement_proxy`` the B branch stands for the full mixture,
    which is the practical stand-in for 'everything but A'.
    """

    set_a: tuple
    set_b: tuple = None
    prior_a: float = 0.5
    complement_proxy: bool = False

    def __post_init__(self):
        a = tuple(self.set_a)
        object.__setattr__(self, "set_a", a)
        if len(a) == 0:
            raise ValueError("set_a must be nonempty")
        if not (0.0 < self.prior_a < 1.0):
            raise ValueError("prior_a must lie in (0, 1)")
        if self.complement_proxy:
            object.__setattr__(self, "set_b", None)  # full mixture
            return
        b = tuple(self.set_b) if self.set_b is not None else ()
        object.__setattr__(self, "set_b", b)
        if len(b) == 0:
            raise ValueError("set_b must be nonempty unless complement_proxy is set")
        if set(a) & set(b):
            raise ValueError("partition sides must be disjoint")


@dataclass(frozen=True)
class EntropyProfile:
    """Entropy (and production) over a time grid, with Monte Carlo error bars."""

    times: np.ndarray
    u: np.ndarray
    H: np.ndarray
    H_stderr: np.ndarray
    Hdot: np.ndarray
    Hdot_stderr: np.ndarray
    n_samples: int
    seed: int
    extras: dict = field(default_factory=dict)


def _entropy_terms(gamma: np.ndarray) -> np.ndarray:
    """Per-sample -sum_k gamma_k log gamma_k with 0 log 0 := 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = gamma * np.log(gamma)
    return -np.nansum(terms, axis=-1)


def _sample_classes(spec: MixtureSpec, n: int, rng, idx=None) -> np.ndarray:
    if idx is None:
        idx = np.arange(spec.n_classes)
        p = spec.priors
    else:
        idx = np.asarray(idx)
        p = spec.priors[idx]
        p = p / p.sum()
    return rng.choice(idx, size=n, p=p)


def _sample_joint(spec, cs, n, rng, idx=None, dtype=np.float64):
    """Draw x_t from the (sub-)mixture marginal by class-then-kernel sampling."""
    z = _sample_classes(spec, n, rng, idx)
    means = cs.m.astype(dtype, copy=False)
    x = means[z] + np.dtype(dtype).type(np.sqrt(cs.v)) * rng.standard_normal((n, spec.d), dtype=dtype)
    return z, x


def _gamma_chunk(spec, cs, x):
    """Softmax posterior in the working dtype of x (float32 fast path)."""
    dtype = x.dtype
    means = cs.m.astype(dtype, copy=False)
    xsq = np.sum(x * x, axis=-1)[:, None]
    msq = np.sum(means * means, axis=-1)
    lw = spec.log_priors.astype(dtype) - (xsq - 2.0 * (x @ means.T) + msq) / dtype.type(2.0 * cs.v)
    lw -= lw.max(axis=-1, keepdims=True)
    w = np.exp(lw)
    return w / w.sum(axis=-1, keepdims=True)


class _GramSampler:
    """Class-space reformulation of mixture sampling for posterior statistics.

    The posterior gamma(x) and the Fisher gap depend on x only through the
    projections y_k = x . m_k. With x = m_z + sqrt(v) eps the vector y is
    Gaussian with mean G[z] and covariance v G, G = M M^T the Gram matrix of
    the component means. Sampling y directly costs O(n N) instead of O(n d),
    which makes high-dimensional two-class estimates essentially free.
    """

    def __init__(self, spec, cs):
        self.spec = spec
        self.cs = cs
        self.G = cs.m @ cs.m.T
        lam, U = np.linalg.eigh(self.G)
        lam = np.clip(lam, 0.0, None)
        keep = lam > lam.max() * 1e-14 if lam.max() > 0 else np.zeros_like(lam, bool)
        self.factor = U[:, keep] * np.sqrt(lam[keep])  # (N, r), factor factor^T = G
        self.diag = np.diag(self.G)

    def sample(self, n, rng, dtype=np.float64):
        z = _sample_classes(self.spec, n, rng)
        eta = rng.standard_normal((n, self.factor.shape[1]))
        y = self.G[z] + np.sqrt(self.cs.v) * (eta @ self.factor.T)
        return z, y.astype(dtype, copy=False)

    def gamma(self, y):
        # squared-distance softmax with the ||x||^2 term dropped (common factor)
        dtype = y.dtype
        lw = self.spec.log_priors.astype(dtype) + (y - 0.5 * self.diag).astype(dtype) / dtype.type(
            self.cs.v
        )
        lw -= lw.max(axis=-1, keepdims=True)
        w = np.exp(lw)
        return w / w.sum(axis=-1, keepdims=True)

    def fisher_gap_sq(self, z, gamma):
        # ||gamma M - M_z||^2 via the Gram matrix
        g64 = gamma.astype(np.float64, copy=False)
        quad = np.einsum("ij,jk,ik->i", g64, self.G, g64)
        cross = np.sum(g64 * self.G[z], axis=-1)
        return quad - 2.0 * cross + self.diag[z]


def conditional_entropy_mc(
    spec: MixtureSpec, sched: NoiseSchedule, t: float, n: int, rng, dtype=np.float64
):
    """Monte Carlo estimate of H[Z | X_t] in nats, with standard error.

    ``dtype=np.float32`` halves memory traffic for large d; the rounding error
    is far below the Monte Carlo standard error at any usable n.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    cs = component_stats(spec, sched, t)
    if cs.degenerate:
        raise ValueError("degenerate kernel: v(t) = 0")
    sampler = _GramSampler(spec, cs)
    total = 0.0
    total_sq = 0.0
    for start in range(0, n, _CHUNK):
        m = min(_CHUNK, n - start)
        _, y = sampler.sample(m, rng, dtype=dtype)
        h = _entropy_terms(sampler.gamma(y)).astype(np.float64)
        total += h.sum()
        total_sq += (h**2).sum()
    mean = total / n
    var = max(total_sq / n - mean**2, 0.0)
    return MCEstimate(float(mean), float(np.sqrt(var / n)))


def entropy_production_fisher(
    spec: MixtureSpec, sched: NoiseSchedule, t: float, n: int, rng, dtype=np.float64
):
    """Fisher-gap estimator of the forward-time entropy production.

    Hdot = (g_t^2 / 2) E_{i, x|i} ||s_i(x) - s_mix(x)||^2  (non-negative).
    """
    if n < 2:
        raise ValueError("need n >= 2")
    cs = component_stats(spec, sched, t)
    if cs.degenerate:
        raise ValueError("degenerate kernel: v(t) = 0")
    g2 = float(diffusion_coeff(sched, t))
    sampler = _GramSampler(spec, cs)
    total = 0.0
    total_sq = 0.0
    for start in range(0, n, _CHUNK):
        m = min(_CHUNK, n - start)
        z, y = sampler.sample(m, rng, dtype=dtype)
        gamma = sampler.gamma(y)
        # s_i - s_mix = -(m_bar - m_i)/v with m_bar the posterior-mean component mean
        vals = 0.5 * g2 * sampler.fisher_gap_sq(z, gamma) / cs.v**2
        total += vals.sum()
        total_sq += (vals**2).sum()
    mean = total / n
    var = max(total_sq / n - mean**2, 0.0)
    return MCEstimate(float(mean), float(np.sqrt(var / n)))


def entropy_production_fd(times: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Finite-difference dH/dt on the grid: centered interior, one-sided ends."""
    times = np.asarray(times, dtype=float)
    H = np.asarray(H, dtype=float)
    if len(times) < 3:
        raise ValueError("grid must have at least 3 points")
    return np.gradient(H, times)


def _branch_log_density(spec, sched, t, x, partition: Partition, side: str):
    subset = partition.set_a if side == "a" else partition.set_b
    return mx.log_subset_density(spec, sched, t, x, subset=subset)


def binary_posterior(spec: MixtureSpec, sched: NoiseSchedule, partition: Partition, t: float, x):
    """Closed-form renormalized posterior gamma_A(x, t) of the partition."""
    la = _branch_log_density(spec, sched, t, x, partition, "a") + np.log(partition.prior_a)
    lb = _branch_log_density(spec, sched, t, x, partition, "b") + np.log(1.0 - partition.prior_a)
    return sigmoid(la - lb)


def sigmoid(log_odds):
    """Logistic function, stable in both tails."""
    diff = np.atleast_1d(np.asarray(log_odds, dtype=float))
    out = np.empty_like(diff)
    pos = diff >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-diff[pos]))
    exp_d = np.exp(diff[~pos])
    out[~pos] = exp_d / (1.0 + exp_d)
    return out if np.ndim(log_odds) else float(out[0])


def _binary_entropy(gamma: np.ndarray) -> np.ndarray:
    g = np.clip(gamma, 1e-300, 1.0)
    one_m = np.clip(1.0 - gamma, 1e-300, 1.0)
    return -(gamma * np.log(g) + (1.0 - gamma) * np.log(one_m))


def partitioned_entropy_mc(
    spec: MixtureSpec, sched: NoiseSchedule, partition: Partition, t: float, n: int, rng
):
    """Stratified MC estimate of the partitioned entropy H[pi(Z) | X_t].

    Equals ln 2 - JSD(p_A, p_B) under the equal-prior convention.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    cs = component_stats(spec, sched, t)
    if cs.degenerate:
        raise ValueError("degenerate kernel: v(t) = 0")
    n_a = n // 2
    n_b = n - n_a
    means, variances = [], []
    for side, n_side in (("a", n_a), ("b", n_b)):
        idx = partition.set_a if side == "a" else partition.set_b
        total = 0.0
        total_sq = 0.0
        for start in range(0, n_side, _CHUNK):
            m = min(_CHUNK, n_side - start)
            _, x = _sample_joint(spec, cs, m, rng, idx=idx)
            h = _binary_entropy(binary_posterior(spec, sched, partition, t, x))
            total += h.sum()
            total_sq += (h**2).sum()
        mean = total / n_side
        means.append(mean)
        variances.append(max(total_sq / n_side - mean**2, 0.0) / n_side)
    w_a = partition.prior_a
    H = w_a * means[0] + (1.0 - w_a) * means[1]
    stderr = np.sqrt(w_a**2 * variances[0] + (1.0 - w_a) ** 2 * variances[1])
    return MCEstimate(float(H), float(stderr))


@lru_cache(maxsize=8)
def _leggauss(n_nodes: int):
    # leggauss is O(n^2); cache the node sets, they are reused constantly
    return np.polynomial.legendre.leggauss(n_nodes)


def jsd_quadrature_1d(density_a, density_b, lo: float, hi: float, n_nodes: int = 4096) -> float:
    """Deterministic Gauss-Legendre Jensen-Shannon divergence for 1D densities."""
    nodes, weights = _leggauss(n_nodes)
    x = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * weights
    pa = np.asarray(density_a(x), dtype=float)
    pb = np.asarray(density_b(x), dtype=float)
    m = 0.5 * (pa + pb)
    with np.errstate(divide="ignore", invalid="ignore"):
        term_a = np.where(pa > 0, pa * (np.log(pa) - np.log(m)), 0.0)
        term_b = np.where(pb > 0, pb * (np.log(pb) - np.log(m)), 0.0)
    return float(np.sum(w * 0.5 * (term_a + term_b)))


def profile_sweep(
    spec: MixtureSpec,
    sched: NoiseSchedule,
    t_grid: np.ndarray,
    n: int,
    seed: int,
    partition: Partition = None,
    threads: int = 1,
    dtype=np.float64,
) -> EntropyProfile:
    """Map the entropy estimators over a time grid.

    Full-class profiles attach the Fisher-form production; partitioned ones use
    finite differences of H. Each grid row draws from its own keyed stream, so
    results are independent of the thread count.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    scale = speciation_time(sched, spec.d)
    u = t_grid / scale.t_s if not scale.degenerate else np.full_like(t_grid, np.nan)

    def row(i):
        rng = np.random.default_rng([seed, i])
        t = t_grid[i]
        if partition is None:
            H, se = conditional_entropy_mc(spec, sched, t, n, rng, dtype=dtype)
            hdot, hdot_se = entropy_production_fisher(spec, sched, t, n, rng, dtype=dtype)
        else:
            H, se = partitioned_entropy_mc(spec, sched, partition, t, n, rng)
            hdot, hdot_se = np.nan, np.nan
        return H, se, hdot, hdot_se

    results = [None] * len(t_grid)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i, res in enumerate(pool.map(row, range(len(t_grid)))):
                results[i] = res
    else:
        for i in range(len(t_grid)):
            results[i] = row(i)

    H = np.array([r[0] for r in results])
    H_se = np.array([r[1] for r in results])
    Hdot = np.array([r[2] for r in results])
    Hdot_se = np.array([r[3] for r in results])
    if partition is not None and len(t_grid) >= 3:
        order = np.argsort(t_grid)
        hd = np.empty_like(H)
        hd[order] = entropy_production_fd(t_grid[order], H[order])
        Hdot = hd
        Hdot_se = _fd_stderr(t_grid, H_se)
    return EntropyProfile(t_grid, u, H, H_se, Hdot, Hdot_se, n, seed)


def _fd_stderr(times: np.ndarray, H_stderr: np.ndarray) -> np.ndarray:
    """Propagated standard error of the centered-difference derivative."""
    order = np.argsort(times)
    t = times[order]
    se = H_stderr[order]
    out = np.empty_like(se)
    for j in range(len(t)):
        if j == 0:
            out[j] = np.hypot(se[0], se[1]) / abs(t[1] - t[0])
        elif j == len(t) - 1:
            out[j] = np.hypot(se[-1], se[-2]) / abs(t[-1] - t[-2])
        else:
            out[j] = np.hypot(se[j - 1], se[j + 1]) / abs(t[j + 1] - t[j - 1])
    unsorted = np.empty_like(out)
    unsorted[order] = out
    return unsorted


def isotonic_increasing(y: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators projection onto non-decreasing sequences."""
    y = np.asarray(y, dtype=float)
    level = y.copy()
    weight = np.ones_like(y)
    n_blocks = 0
    starts = np.empty(len(y), dtype=int)
    vals = np.empty(len(y))
    wts = np.empty(len(y))
    for i in range(len(y)):
        starts[n_blocks] = i
        vals[n_blocks] = y[i]
        wts[n_blocks] = 1.0
        n_blocks += 1
        while n_blocks > 1 and vals[n_blocks - 2] > vals[n_blocks - 1]:
            w = wts[n_blocks - 2] + wts[n_blocks - 1]
            vals[n_blocks - 2] = (
                wts[n_blocks - 2] * vals[n_blocks - 2] + wts[n_blocks - 1] * vals[n_blocks - 1]
            ) / w
            wts[n_blocks - 2] = w
            n_blocks -= 1
    out = np.empty_like(y)
    for b in range(n_blocks):
        end = starts[b + 1] if b + 1 < n_blocks else len(y)
        out[starts[b] : end] = vals[b]
    return out


def transition_window(profile, H: np.ndarray = None, lo: float = 0.4, hi: float = 0.6):
    """First upward crossings of the lo/hi thresholds on the isotonically
    smoothed profile; returns a (t_lo, t_hi, width) named tuple.

    Accepts either an :class:`EntropyProfile` or (times, H) arrays.
    """
    if isinstance(profile, EntropyProfile):
        times, H = profile.times, profile.H
    else:
        times = profile
    order = np.argsort(times)
    t = np.asarray(times, dtype=float)[order]
    h = isotonic_increasing(np.asarray(H, dtype=float)[order])

    def crossing(level):
        if h[0] > level or h[-1] < level:
            raise ValueError(f"profile does not bracket threshold {level}")
        j = int(np.argmax(h >= level))
        if j == 0:
            return t[0]
        if h[j] == h[j - 1]:
            return t[j]
        return t[j - 1] + (level - h[j - 1]) * (t[j] - t[j - 1]) / (h[j] - h[j - 1])

    t_lo = crossing(lo)
    t_hi = crossing(hi)
    return TransitionWindow(t_lo, t_hi, t_hi - t_lo)
