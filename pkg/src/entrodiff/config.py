"""Experiment configuration: YAML parsing, validation, canonical hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from .entropy import Partition
from .mixture import MixtureSpec, hierarchical_mixture, symmetric_two_class
from .schedule import NoiseSchedule, ScheduleKind, speciation_time
from .sde import GuidanceConfig


class ConfigError(ValueError):
    """Invalid experiment configuration; message carries the field path."""


def _get(block: dict, path: str, key: str, types, required=True, default=None):
    if key not in block:
        if required:
            raise ConfigError(f"{path}.{key}: missing required field")
        return default
    val = block[key]
    if not isinstance(val, types):
        raise ConfigError(f"{path}.{key}: expected {types}, got {type(val).__name__}")
    return val


@dataclass
class ExperimentConfig:
    schedule: NoiseSchedule
    mixture: MixtureSpec
    t_grid: np.ndarray
    n_samples: int
    seed: int
    steps: int
    n_trajectories: int
    partition: Partition | None
    guidance: GuidanceConfig | None
    d_values: list[int]
    output: str | None
    resolved: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.resolved, sort_keys=True).encode()
        ).hexdigest()[:16]


def _parse_mixture(raw: dict) -> tuple[MixtureSpec, dict]:
    if "symmetric_two_class" in raw:
        blk = raw["symmetric_two_class"]
        d = _get(blk, "mixture.symmetric_two_class", "d", int)
        q = float(_get(blk, "mixture.symmetric_two_class", "q", (int, float)))
        sigma0 = float(_get(blk, "mixture.symmetric_two_class", "sigma0", (int, float)))
        return symmetric_two_class(d, q, sigma0), {
            "symmetric_two_class": {"d": d, "q": q, "sigma0": sigma0}
        }
    if "hierarchical" in raw:
        blk = raw["hierarchical"]
        levels = _get(blk, "mixture.hierarchical", "levels", list)
        d = _get(blk, "mixture.hierarchical", "d", int)
        sigma0 = float(_get(blk, "mixture.hierarchical", "sigma0", (int, float)))
        levels = [(float(o), int(b)) for o, b in levels]
        return hierarchical_mixture(levels, d, sigma0), {
            "hierarchical": {"levels": levels, "d": d, "sigma0": sigma0}
        }
    if "means" in raw:
        means = np.asarray(raw["means"], dtype=float)
        sigma0 = float(_get(raw, "mixture", "sigma0", (int, float)))
        priors = raw.get("priors")
        log_priors = np.log(np.asarray(priors, dtype=float)) if priors else None
        spec = MixtureSpec(means, sigma0, log_priors)
        return spec, {"means": means.tolist(), "sigma0": sigma0, "priors": priors}
    raise ConfigError("mixture: need one of symmetric_two_class | hierarchical | means")


def load_config(path: str, seed_override: int = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return parse_config(raw, seed_override=seed_override)


def parse_config(raw: dict, seed_override: int = None) -> ExperimentConfig:
    sched_blk = _get(raw, "config", "schedule", dict)
    kind_str = _get(sched_blk, "schedule", "kind", str)
    try:
        kind = ScheduleKind(kind_str)
    except ValueError:
        raise ConfigError(f"schedule.kind: must be 'vp' or 'edm', got {kind_str!r}")

    mix_blk = _get(raw, "config", "mixture", dict)
    spec, mix_resolved = _parse_mixture(mix_blk)

    t_max = sched_blk.get("t_max")
    if t_max is not None:
        sched = NoiseSchedule(kind, float(t_max))
    else:
        sched = NoiseSchedule.for_dimension(kind, spec.d)

    scale = speciation_time(sched, spec.d)
    grid_blk = _get(raw, "config", "grid", dict, required=False, default={})
    grid_kind = _get(grid_blk, "grid", "kind", str, required=False, default="u")
    count = _get(grid_blk, "grid", "count", int, required=False, default=64)
    if grid_kind == "u":
        if scale.degenerate:
            raise ConfigError("grid.kind: u-grid requires a non-degenerate speciation scale")
        start = float(grid_blk.get("start", 0.05))
        stop = float(grid_blk.get("stop", min(2.0, sched.t_max / scale.t_s)))
        t_grid = np.linspace(start, stop, count) * scale.t_s
    elif grid_kind == "t":
        start = float(grid_blk.get("start", sched.t_max / count))
        stop = float(grid_blk.get("stop", sched.t_max))
        t_grid = np.linspace(start, stop, count)
    else:
        raise ConfigError(f"grid.kind: must be 'u' or 't', got {grid_kind!r}")

    est_blk = _get(raw, "config", "estimator", dict, required=False, default={})
    n_samples = _get(est_blk, "estimator", "n_samples", int, required=False, default=10000)
    seed = _get(est_blk, "estimator", "seed", int, required=False, default=0)
    steps = _get(est_blk, "estimator", "steps", int, required=False, default=256)
    n_traj = _get(est_blk, "estimator", "n_trajectories", int, required=False, default=1000)
    if seed_override is not None:
        seed = seed_override

    part_blk = raw.get("partition")
    partition = None
    if part_blk is not None:
        set_a = tuple(_get(part_blk, "partition", "set_a", list))
        proxy = bool(part_blk.get("complement_proxy", False))
        set_b = tuple(part_blk["set_b"]) if "set_b" in part_blk else None
        if set_b is None and not proxy:
            raise ConfigError("partition.set_b: required unless complement_proxy is true")
        try:
            partition = Partition(set_a, set_b, float(part_blk.get("prior_a", 0.5)), proxy)
        except ValueError as exc:
            raise ConfigError(f"partition: {exc}") from exc
        n_cls = spec.n_classes
        for side, s in (("set_a", set_a), ("set_b", set_b or ())):
            if any(not (0 <= c < n_cls) for c in s):
                raise ConfigError(f"partition.{side}: class index out of range [0, {n_cls})")

    guid_blk = raw.get("guidance")
    guidance = None
    if guid_blk is not None:
        try:
            guidance = GuidanceConfig(
                omega=float(_get(guid_blk, "guidance", "omega", (int, float))),
                sigma_low=float(_get(guid_blk, "guidance", "sigma_low", (int, float))),
                sigma_high=float(_get(guid_blk, "guidance", "sigma_high", (int, float))),
            )
        except ValueError as exc:
            raise ConfigError(f"guidance: {exc}") from exc

    d_values = [int(d) for d in raw.get("sweep", {}).get("d_values", [])]

    resolved = {
        "schedule": {"kind": kind.value, "t_max": sched.t_max},
        "mixture": mix_resolved,
        "grid": {"kind": grid_kind, "count": count, "t_grid": [float(t) for t in t_grid]},
        "estimator": {
            "n_samples": n_samples,
            "seed": seed,
            "steps": steps,
            "n_trajectories": n_traj,
        },
        "partition": None
        if partition is None
        else {
            "set_a": list(partition.set_a),
            "set_b": None if partition.set_b is None else list(partition.set_b),
            "prior_a": partition.prior_a,
            "complement_proxy": partition.complement_proxy,
        },
        "guidance": None
        if guidance is None
        else {
            "omega": guidance.omega,
            "sigma_low": guidance.sigma_low,
            "sigma_high": guidance.sigma_high,
        },
        "sweep": {"d_values": d_values},
    }
    return ExperimentConfig(
        schedule=sched,
        mixture=spec,
        t_grid=t_grid,
        n_samples=n_samples,
        seed=seed,
        steps=steps,
        n_trajectories=n_traj,
        partition=partition,
        guidance=guidance,
        d_values=d_values,
        output=raw.get("output"),
        resolved=resolved,
    )
