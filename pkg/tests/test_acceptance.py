"""End-to-end acceptance checks for the entropy-dynamics laboratory.

Each test exercises one headline property at full scale and prints a single
pass/fail line (visible with ``pytest -s`` or in the failure report).
"""

import json
import math

import numpy as np
import pytest
import yaml

from entrodiff import cli
from entrodiff.entropy import (
    Partition,
    binary_posterior,
    conditional_entropy_mc,
    entropy_production_fisher,
    jsd_quadrature_1d,
    partitioned_entropy_mc,
    profile_sweep,
    transition_window,
)
from entrodiff.mixture import MixtureSpec, component_stats, log_subset_density, symmetric_two_class
from entrodiff.schedule import NoiseSchedule, speciation_time
from entrodiff.sde import GuidanceConfig
from entrodiff.tracker import estimate_entropy_online, exact_denoiser, track_branch

LN2 = math.log(2.0)
HALF_LN2 = 0.5 * LN2


def report(name, passed, detail):
    status = "PASS" if passed else "FAIL"
    print(f"[{name}] {status}: {detail}")
    assert passed, f"{name}: {detail}"


def test_c1_vp_speciation_collapse():
    """Two-class entropy crossing of half ln 2 sits at u ~ 1 for d up to 1e4."""
    u_grid = np.linspace(0.05, 2.0, 64)
    crossings = []
    for d in (100, 1_000, 10_000):
        spec = symmetric_two_class(d, 1.0, 1.0)
        sched = NoiseSchedule.for_dimension("vp", d)
        t_s = speciation_time(sched, d).t_s
        prof = profile_sweep(spec, sched, u_grid * t_s, 20_000, seed=17)
        crossings.append(transition_window(prof, lo=HALF_LN2, hi=HALF_LN2).t_lo / t_s)
    in_band = all(0.8 <= u <= 1.2 for u in crossings)
    errs = [abs(u - 1.0) for u in crossings]
    tightening = all(e2 <= e1 + 1e-12 for e1, e2 in zip(errs, errs[1:]))
    report(
        "c1 speciation collapse",
        in_band and tightening,
        f"u_cross={np.round(crossings, 4).tolist()} (band [0.8, 1.2], |u-1| non-increasing)",
    )


def test_c2_width_scaling_vp_vs_edm():
    """Transition window width: d-independent for VP, sqrt(d) growth for EDM."""

    def widths(kind, ds, u_stop, count):
        out = []
        for d in ds:
            spec = symmetric_two_class(d, 1.0, 1.0)
            sched = NoiseSchedule.for_dimension(kind, d)
            t_s = speciation_time(sched, d).t_s
            u = np.linspace(0.05, u_stop, count)
            prof = profile_sweep(spec, sched, u * t_s, 8_000, seed=11)
            out.append(transition_window(prof).width)
        return np.array(out)

    w_vp = widths("vp", (16, 256, 4096), 2.0, 64)
    vp_ratio = w_vp.max() / w_vp.min()
    w_edm = widths("edm", (64, 256, 1024), 2.9, 96)
    edm_steps = w_edm[1:] / w_edm[:-1]
    ok = vp_ratio <= 1.5 and all(1.5 <= r <= 2.7 for r in edm_steps)
    report(
        "c2 width scaling",
        ok,
        f"VP max/min={vp_ratio:.3f} (<=1.5), EDM per-4x ratios={np.round(edm_steps, 3).tolist()}"
        " (in [1.5, 2.7])",
    )


def test_c3_entropy_limits():
    """H saturates at ln N deep in noise and vanishes for well-separated data."""
    n = 50_000
    rng = np.random.default_rng(23)
    # late-time plateau, two and four classes
    errs_late = []
    for spec, n_classes in (
        (symmetric_two_class(16, 1.0, 1.0), 2),
        (
            MixtureSpec(
                np.array(
                    [[3.0, 0.0, 0.0], [-3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 3.0]]
                ),
                1.0,
            ),
            4,
        ),
    ):
        sched = NoiseSchedule.vp(t_max=20.0)
        # horizon: five times the larger of the dimension scale and the
        # pairwise-separation scale, so the plateau is fully reached
        diffs = spec.means[:, None, :] - spec.means[None, :, :]
        d2_max = float((diffs**2).sum(axis=-1).max())
        t_s = max(speciation_time(sched, spec.d).t_s, 0.5 * math.log(d2_max / 4.0))
        H, _ = conditional_entropy_mc(spec, sched, 5.0 * t_s, n, rng)
        errs_late.append(abs(H - math.log(n_classes)))
    # t = 0 with separation ratio delta/sigma0 = 10
    d = 8
    delta = 2.0 * math.sqrt(d)
    spec0 = symmetric_two_class(d, 1.0, delta / 10.0)
    H0, _ = conditional_entropy_mc(spec0, NoiseSchedule.vp(), 0.0, n, rng)
    ok = max(errs_late) <= 0.01 and H0 <= 0.01
    report(
        "c3 entropy limits",
        ok,
        f"|H(5 t_s) - ln N| = {np.round(errs_late, 5).tolist()} (<= 0.01), "
        f"H(0) = {H0:.2e} (<= 0.01)",
    )


def test_c4_entropy_production_consistency():
    """Fisher-form production matches finite differences and integrates to dH."""
    spec = symmetric_two_class(1, 1.0, 0.5)
    sched = NoiseSchedule.vp()
    rng = np.random.default_rng(29)
    t_grid = np.linspace(0.05, 2.5, 21)
    dt = 0.01
    hits = 0
    for t in t_grid:
        hdot, se_f = entropy_production_fisher(spec, sched, t, 60_000, rng)
        h_hi, se_hi = conditional_entropy_mc(spec, sched, t + dt, 60_000, rng)
        h_lo, se_lo = conditional_entropy_mc(spec, sched, t - dt, 60_000, rng)
        fd = (h_hi - h_lo) / (2.0 * dt)
        combined = math.sqrt(se_f**2 + (se_hi**2 + se_lo**2) / (2.0 * dt) ** 2)
        if abs(hdot - fd) <= 3.0 * combined:
            hits += 1
    frac = hits / len(t_grid)

    fine = np.linspace(0.02, 6.0, 120)
    prof = profile_sweep(spec, sched, fine, 60_000, seed=31)
    integral = np.trapezoid(prof.Hdot, prof.times)
    dH = prof.H[-1] - prof.H[0]
    int_err = abs(integral - dH)
    ok = frac >= 0.95 and int_err <= 0.02 * LN2
    report(
        "c4 production consistency",
        ok,
        f"Fisher-vs-FD agreement {hits}/{len(t_grid)} (>=95%), "
        f"|trapz(Hdot) - dH| = {int_err:.4f} (<= {0.02 * LN2:.4f})",
    )


def test_c5_tracker_equivalence():
    """Online posterior tracking reproduces the closed-form posterior."""
    spec = symmetric_two_class(4, 1.0, 0.5)
    sched = NoiseSchedule.vp()
    den_a = exact_denoiser(spec, sched, subset=(0,))
    den_b = exact_denoiser(spec, sched, subset=(1,))
    part = Partition((0,), (1,))

    def mean_err(steps, n):
        grid, gammas, states = track_branch(
            den_a, den_a, den_b, sched, 4, steps, n, seed=37, stream=0, record_states=True
        )
        per_step = [
            np.abs(gammas[j] - binary_posterior(spec, sched, part, grid[j], states[j])).mean()
            for j in range(1, len(grid))
        ]
        return float(np.mean(per_step))

    err_256 = mean_err(256, 1_000)
    err_128 = mean_err(128, 1_000)
    err_512 = mean_err(512, 1_000)
    ok = err_256 <= 0.02 and err_512 <= err_128
    report(
        "c5 tracker equivalence",
        ok,
        f"mean|gamma - closed form| = {err_256:.4f} at 256 steps (<= 0.02); "
        f"512 steps {err_512:.4f} <= 128 steps {err_128:.4f}",
    )


def test_c6_jsd_identity():
    """ln 2 - partitioned entropy equals the branch JSD, from overlap to separation."""
    sched = NoiseSchedule.vp()
    part = Partition((0,), (1,))
    rng = np.random.default_rng(41)
    results = []
    for label, t in (("overlapping", 1.5), ("intermediate", 0.4), ("separated", 0.05)):
        spec = symmetric_two_class(1, 1.0, 0.5)
        H, se = partitioned_entropy_mc(spec, sched, part, t, 100_000, rng)
        cs = component_stats(spec, sched, t)
        span = 1.0 + 10.0 * math.sqrt(cs.v)

        def dens(k):
            return lambda x: np.exp(
                log_subset_density(spec, sched, t, np.asarray(x)[:, None], subset=(k,))
            )

        jsd = jsd_quadrature_1d(dens(0), dens(1), -span, span)
        err = abs(LN2 - H - jsd)
        results.append((label, err, 3.0 * se, err <= 3.0 * se + 1e-9))
    ok = all(r[3] for r in results)
    detail = ", ".join(f"{lbl}: |err|={e:.2e} (tol {tol:.2e})" for lbl, e, tol, _ in results)
    report("c6 jsd identity", ok, detail)


def test_c7_guidance_sanity():
    """omega=1 is a no-op bit for bit; omega=2 at high noise shifts the production peak."""
    spec = symmetric_two_class(4, 1.0, 0.5)
    sched = NoiseSchedule.vp()
    den_a = exact_denoiser(spec, sched, subset=(0,))
    den_b = exact_denoiser(spec, sched, subset=(1,))
    uncond = exact_denoiser(spec, sched)
    part = Partition((0,), (1,))

    identity_cfg = GuidanceConfig(omega=1.0, sigma_low=0.0, sigma_high=1.0)
    base = estimate_entropy_online((den_a, den_b), sched, part, 128, 200, seed=43, d=4)
    as_guided = estimate_entropy_online(
        (den_a, den_b), sched, part, 128, 200, seed=43, d=4,
        guidance=identity_cfg, uncond_denoiser=uncond,
    )
    bit_identical = np.array_equal(base.H, as_guided.H) and np.array_equal(
        base.Hdot, as_guided.Hdot
    )

    cfg = GuidanceConfig(omega=2.0, sigma_low=0.8, sigma_high=1.0)
    shifts = []
    for seed in (101, 202, 303):
        b = estimate_entropy_online((den_a, den_b), sched, part, 192, 1_000, seed, 4)
        g = estimate_entropy_online(
            (den_a, den_b), sched, part, 192, 1_000, seed, 4,
            guidance=cfg, uncond_denoiser=uncond,
        )
        shifts.append(g.times[np.argmax(g.Hdot)] - b.times[np.argmax(b.Hdot)])
    all_higher = all(s > 0 for s in shifts)
    ok = bit_identical and all_higher
    report(
        "c7 guidance sanity",
        ok,
        f"omega=1 bit-identical={bit_identical}; "
        f"omega=2 peak shifts={np.round(shifts, 3).tolist()} (all > 0)",
    )


ACCEPT_CONFIG = {
    "schedule": {"kind": "vp"},
    "mixture": {"symmetric_two_class": {"d": 3, "q": 1.0, "sigma0": 0.5}},
    "grid": {"kind": "u", "start": 0.1, "stop": 2.0, "count": 12},
    "estimator": {"n_samples": 1000, "seed": 5, "steps": 64, "n_trajectories": 48},
    "partition": {"set_a": [0], "set_b": [1]},
    "guidance": {"omega": 2.0, "sigma_low": 0.5, "sigma_high": 0.9},
    "sweep": {"d_values": [16, 64]},
}


def test_c8_cli_determinism(tmp_path):
    """Fixed-seed CLI outputs are byte-identical across runs and thread counts."""
    cfg_path = tmp_path / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(ACCEPT_CONFIG))
    mismatches = []
    for command in ("profile", "speciation-sweep", "track", "guidance-distortion"):
        blobs = []
        for tag, threads in (("r1", "1"), ("r2", "1"), ("t4", "4")):
            out = tmp_path / f"{command}-{tag}.csv"
            rc = cli.main(
                [command, "--config", str(cfg_path),
                 "--out", str(out), "--seed", "9", "--threads", threads]
            )
            assert rc == 0, command
            blobs.append(out.read_bytes())
        if not (blobs[0] == blobs[1] == blobs[2]):
            mismatches.append(command)
    # validate emits a directory of artifacts; compare them all
    digests = []
    for tag, threads in (("v1", "1"), ("v2", "4")):
        out_dir = tmp_path / f"validate-{tag}"
        rc = cli.main(["validate", "--out", str(out_dir), "--seed", "9", "--threads", threads])
        assert rc == 0
        digests.append(
            {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())}
        )
    if digests[0] != digests[1]:
        mismatches.append("validate")
    report(
        "c8 cli determinism",
        not mismatches,
        "all commands byte-identical across seeds/threads"
        if not mismatches
        else f"mismatched: {mismatches}",
    )
