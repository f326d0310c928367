"""Desk-scale laboratory for entropy dynamics of Gaussian-mixture diffusion."""

from .entropy import (
    EntropyProfile,
    Partition,
    binary_posterior,
    conditional_entropy_mc,
    entropy_production_fd,
    entropy_production_fisher,
    MCEstimate,
    TransitionWindow,
    jsd_quadrature_1d,
    partitioned_entropy_mc,
    profile_sweep,
    transition_window,
)
from .mixture import (
    ComponentStats,
    MixtureSpec,
    PairwiseEvidence,
    component_score,
    component_stats,
    denoiser,
    evidence_stats,
    hierarchical_mixture,
    log_ratio,
    mixture_score,
    posterior,
    snr_asymptotic,
    symmetric_two_class,
)
from .schedule import (
    NoiseSchedule,
    ScheduleKind,
    SpeciationScale,
    alpha_sigma,
    diffusion_coeff,
    speciation_time,
)
from .sde import (
    GuidanceConfig,
    Trajectory,
    forward_sample,
    guided_score,
    integrate_reverse,
    terminal_sample,
)
from .tracker import (
    PosteriorTrack,
    distortion_profile,
    estimate_entropy_online,
    exact_denoiser,
    update_posterior,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
