"""Experiment runner: reproducible commands with CSV/JSON outputs."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import entropy as ent
from . import mixture as mx
from . import tracker as trk
from .config import ConfigError, ExperimentConfig, load_config
from .entropy import Partition, profile_sweep, transition_window
from .schedule import NoiseSchedule, ScheduleKind, speciation_time

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return "nan"
    return format(float(x), ".9g")


def write_csv(path: str, header: list[str], rows, cfg: ExperimentConfig, extra_comments=()):
    lines = [f"# config_sha256={cfg.config_hash}"]
    lines.append("# config=" + json.dumps(cfg.resolved, sort_keys=True))
    lines.extend(f"# {c}" for c in extra_comments)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _profile_comments(cfg: ExperimentConfig):
    scale = speciation_time(cfg.schedule, cfg.mixture.d)
    return [
        f"d={cfg.mixture.d}",
        f"kind={cfg.schedule.kind.value}",
        f"t_s={_fmt(scale.t_s)}",
    ]


def cmd_profile(cfg: ExperimentConfig, out: str, threads: int = 1) -> int:
    profile = profile_sweep(
        cfg.mixture, cfg.schedule, cfg.t_grid, cfg.n_samples, cfg.seed,
        partition=cfg.partition, threads=threads,
    )
    rows = zip(
        profile.times, profile.u, profile.H, profile.H_stderr,
        profile.Hdot, profile.Hdot_stderr,
        [profile.n_samples] * len(profile.times), [profile.seed] * len(profile.times),
    )
    write_csv(
        out, ["t", "u", "H", "H_stderr", "Hdot", "Hdot_stderr", "n", "seed"],
        rows, cfg, _profile_comments(cfg),
    )
    return EXIT_OK


def cmd_speciation_sweep(cfg: ExperimentConfig, out: str, threads: int = 1) -> int:
    if not cfg.d_values:
        raise ConfigError("sweep.d_values: required for speciation-sweep")
    mix_blk = cfg.resolved["mixture"].get("symmetric_two_class")
    if mix_blk is None:
        raise ConfigError("sweep: speciation-sweep requires a symmetric_two_class mixture")
    if cfg.resolved["grid"]["kind"] != "u":
        raise ConfigError("grid.kind: speciation-sweep requires a u-grid")
    rows = []
    for d in cfg.d_values:
        spec = mx.symmetric_two_class(d, mix_blk["q"], mix_blk["sigma0"])
        sched = NoiseSchedule.for_dimension(cfg.schedule.kind, d)
        scale = speciation_time(sched, d)
        grid_blk = cfg.resolved["grid"]
        u_grid = np.asarray(grid_blk["t_grid"]) / speciation_time(cfg.schedule, cfg.mixture.d).t_s
        t_grid = u_grid * scale.t_s
        profile = profile_sweep(spec, sched, t_grid, cfg.n_samples, cfg.seed, threads=threads)
        t_lo, t_hi, width = transition_window(profile)
        rows.append((d, scale.t_s, t_lo, t_hi, width, width / scale.t_s))
    write_csv(out, ["d", "t_s", "t_lo", "t_hi", "width_t", "width_u"], rows, cfg)
    return EXIT_OK


def _tracked_profile(cfg: ExperimentConfig, guidance=None):
    """Online profile plus mean |tracked gamma - closed-form gamma| diagnostics."""
    spec, sched, part = cfg.mixture, cfg.schedule, cfg.partition
    if part is None:
        raise ConfigError("partition: required for tracking commands")
    den_a = trk.exact_denoiser(spec, sched, subset=part.set_a)
    den_b = trk.exact_denoiser(spec, sched, subset=part.set_b)
    uncond = trk.exact_denoiser(spec, sched, subset=None)
    branch_h = []
    branch_var = []
    abs_err = []
    grid = None
    for stream, gen in enumerate((den_a, den_b)):
        grid, gammas, states = trk.track_branch(
            gen, den_a, den_b, sched, spec.d, cfg.steps, cfg.n_trajectories,
            cfg.seed, stream, guidance=guidance, uncond_denoiser=uncond,
            record_states=True,
        )
        h = ent._binary_entropy(gammas)
        branch_h.append(h.mean(axis=1))
        branch_var.append(h.var(axis=1) / cfg.n_trajectories)
        closed = np.stack(
            [ent.binary_posterior(spec, sched, part, t, states[i]) for i, t in enumerate(grid)]
        )
        abs_err.append(np.abs(gammas - closed).mean(axis=1))
    H = 0.5 * (branch_h[0] + branch_h[1])
    stderr = 0.5 * np.sqrt(branch_var[0] + branch_var[1])
    order = np.argsort(grid)
    Hdot = np.empty_like(H)
    Hdot[order] = ent.entropy_production_fd(grid[order], H[order])
    scale = speciation_time(sched, spec.d)
    u = grid / scale.t_s if not scale.degenerate else np.full_like(grid, np.nan)
    return grid, u, H, stderr, Hdot, 0.5 * (abs_err[0] + abs_err[1])


def cmd_track(cfg: ExperimentConfig, out: str, threads: int = 1) -> int:
    grid, u, H, stderr, Hdot, err = _tracked_profile(cfg)
    hdot_se = ent._fd_stderr(grid, stderr)
    rows = zip(grid, u, H, stderr, Hdot, hdot_se,
               [cfg.n_trajectories] * len(grid), [cfg.seed] * len(grid), err)
    write_csv(
        out,
        ["t", "u", "H", "H_stderr", "Hdot", "Hdot_stderr", "n", "seed", "gamma_abs_err"],
        rows, cfg, _profile_comments(cfg),
    )
    return EXIT_OK


def cmd_guidance_distortion(cfg: ExperimentConfig, out: str, threads: int = 1) -> int:
    if cfg.guidance is None:
        raise ConfigError("guidance: required for guidance-distortion")
    grid, u, H_base, se_b, hd_base, _ = _tracked_profile(cfg, guidance=None)
    _, _, H_g, se_g, hd_guided, _ = _tracked_profile(cfg, guidance=cfg.guidance)
    delta = hd_guided - hd_base
    rows = zip(grid, hd_base, hd_guided, delta)
    write_csv(out, ["t", "Hdot_base", "Hdot_guided", "delta"], rows, cfg)
    return EXIT_OK


DEFAULT_VALIDATE_CONFIG = {
    "schedule": {"kind": "vp"},
    "mixture": {"symmetric_two_class": {"d": 4, "q": 1.0, "sigma0": 0.5}},
    "grid": {"kind": "u", "start": 0.1, "stop": 2.5, "count": 24},
    "estimator": {"n_samples": 4000, "seed": 7, "steps": 192, "n_trajectories": 400},
    "partition": {"set_a": [0], "set_b": [1]},
    "guidance": {"omega": 2.0, "sigma_low": 0.8, "sigma_high": 1.0},
    "sweep": {"d_values": [16, 64, 256]},
}


def cmd_validate(out_dir: str, threads: int = 1, seed: int = None) -> int:
    """Run the oracle cross-checks and emit a JSON report plus the four CSV kinds."""
    import os

    from .config import parse_config
    from .schedule import NoiseSchedule as NS

    os.makedirs(out_dir, exist_ok=True)
    cfg = parse_config(DEFAULT_VALIDATE_CONFIG, seed_override=seed)
    checks = []

    def check(name, measured, tolerance, passed):
        checks.append(
            {"name": name, "measured": float(measured), "tolerance": float(tolerance),
             "passed": bool(passed)}
        )

    spec, sched, part = cfg.mixture, cfg.schedule, cfg.partition
    rng = np.random.default_rng([cfg.seed, 999])

    # 1. JSD identity: ln 2 - partitioned H == quadrature JSD (1D instance)
    spec1 = mx.symmetric_two_class(1, 1.0, 0.5)
    t0 = 0.4
    H_part, se = ent.partitioned_entropy_mc(spec1, sched, Partition((0,), (1,)), t0, 40000, rng)
    cs = mx.component_stats(spec1, sched, t0)
    lo, hi = -1.0 - 10 * np.sqrt(cs.v), 1.0 + 10 * np.sqrt(cs.v)

    def dens(k):
        return lambda x: np.exp(
            mx.log_subset_density(spec1, sched, t0, np.asarray(x)[:, None], subset=(k,))
        )

    jsd = ent.jsd_quadrature_1d(dens(0), dens(1), lo, hi)
    err = abs(np.log(2.0) - H_part - jsd)
    check("jsd_identity", err, 3 * se, err <= 3 * se)

    # 2. Fisher-form vs finite-difference entropy production (1D instance)
    t_fd, dt = 0.5, 0.01
    hdot, hdot_se = ent.entropy_production_fisher(spec1, sched, t_fd, 60000, rng)
    h_hi, se_hi = ent.conditional_entropy_mc(spec1, sched, t_fd + dt, 60000, rng)
    h_lo, se_lo = ent.conditional_entropy_mc(spec1, sched, t_fd - dt, 60000, rng)
    fd = (h_hi - h_lo) / (2 * dt)
    combined = np.sqrt(hdot_se**2 + (se_hi**2 + se_lo**2) / (2 * dt) ** 2)
    err = abs(hdot - fd)
    check("fisher_vs_fd", err, 3 * combined, err <= 3 * combined)

    # 3. Tracker vs closed-form posterior
    grid, u, H, stderr, Hdot, gamma_err = _tracked_profile(cfg)
    mean_err = float(np.mean(gamma_err))
    check("tracker_vs_closed_form", mean_err, 0.02, mean_err <= 0.02)

    # 4. Conservation: trapezoid integral of Hdot equals H(end) - H(start)
    profile = profile_sweep(spec, sched, cfg.t_grid, cfg.n_samples, cfg.seed, threads=threads)
    order = np.argsort(profile.times)
    integral = np.trapezoid(profile.Hdot[order], profile.times[order])
    dH = profile.H[order][-1] - profile.H[order][0]
    err = abs(integral - dH)
    tol = 0.02 * np.log(2.0)
    check("conservation_integral", err, tol, err <= tol)

    # emit the four CSV kinds for downstream figure rendering
    cmd_profile(cfg, os.path.join(out_dir, "profile.csv"), threads)
    cmd_speciation_sweep(cfg, os.path.join(out_dir, "speciation_sweep.csv"), threads)
    cmd_track(cfg, os.path.join(out_dir, "track.csv"), threads)
    cmd_guidance_distortion(cfg, os.path.join(out_dir, "guidance_distortion.csv"), threads)

    report = {"all_passed": all(c["passed"] for c in checks), "checks": checks}
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if report["all_passed"] else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entrodiff",
        description="Entropy dynamics of Gaussian-mixture diffusion: "
        "profiles, speciation sweeps, online tracking, guidance distortion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("profile", "speciation-sweep", "track", "guidance-distortion"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", help="output CSV path (defaults to config's output)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, default=1)
    pv = sub.add_parser("validate")
    pv.add_argument("--out", required=True, help="output directory for report and CSVs")
    pv.add_argument("--seed", type=int)
    pv.add_argument("--threads", type=int, default=1)
    return parser


COMMANDS = {
    "profile": cmd_profile,
    "speciation-sweep": cmd_speciation_sweep,
    "track": cmd_track,
    "guidance-distortion": cmd_guidance_distortion,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args.out, threads=args.threads, seed=args.seed)
        cfg = load_config(args.config, seed_override=args.seed)
        out = args.out or cfg.output
        if not out:
            raise ConfigError("output: no --out flag and no output path in config")
        return COMMANDS[args.command](cfg, out, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
