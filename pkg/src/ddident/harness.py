"""Experiment runners behind the command-line interface.

Each runner validates its configuration up front, computes, and returns an
outcome object; :func:`write_outputs` emits the artifacts. Random streams
are derived from the root seed by counter so results do not depend on
evaluation order.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import TimeFreqPoint, compare_stft_bargmann
from .channel import (GaussianProbe, SampledSignal, apply_channel, default_grid,
                      identifiability_ratio, synthesis_bound, difference_measure)
from .config import (ExperimentConfig, build_lattice, build_pattern, pattern_indices,
                     validate_density,
                     validate_identify, validate_sweep, validate_verify)
from .estimation import (SamplingPlan, add_awgn, estimate_channel, match_taps,
                         noise_rank_tol)
from .measures import (ChannelSpec, Tap, density_estimates, exact_pattern_density,
                       identifiability_verdict, read_points_csv, residue_pattern_points)

log = logging.getLogger(__name__)

# stream tags for counter-derived seeds
_SCENARIO, _NOISE, _VERIFY_PAIRS, _VERIFY_POINTS, _VERIFY_SIGNAL = range(5)


@dataclass
class Outcome:
    """Result of one subcommand: JSON payload, CSV tables, and a pass flag."""

    command: str
    payload: dict
    tables: dict = field(default_factory=dict)
    passed: bool = True


def _rng(seed: int, *counters: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *counters])


def random_taps(lattice, index_box, K: int, sigma: float, rng) -> list[Tap]:
    """``K`` distinct lattice taps with unit-mean log-normal gains and uniform phases."""
    (i0, i1), (j0, j1) = index_box
    ni, nj = i1 - i0 + 1, j1 - j0 + 1
    flat = rng.choice(ni * nj, size=K, replace=False)
    mags = rng.lognormal(mean=-sigma * sigma / 2.0, sigma=sigma, size=K)
    phases = rng.random(K)
    taps = []
    for f, mag, ph in zip(flat, mags, phases):
        tau, nu = lattice.point((i0 + f // nj, j0 + f % nj))
        taps.append(Tap(mag * np.exp(2j * np.pi * ph), tau, nu))
    return taps


def scenario_spec(cfg: ExperimentConfig) -> ChannelSpec:
    lattice = build_lattice(cfg)
    sc = cfg.scenario
    if sc.mode == "explicit":
        taps = [Tap(complex(t["a_re"], t["a_im"]), t["tau"], t["nu"]) for t in sc.taps]
    elif sc.mode == "pattern":
        idx = pattern_indices(build_pattern(sc.pattern, "scenario.pattern"), sc.index_box)
        rng = _rng(sc.seed, _SCENARIO)
        s = sc.amplitude_sigma
        mags = rng.lognormal(mean=-s * s / 2.0, sigma=s, size=len(idx))
        phases = rng.random(len(idx))
        taps = [Tap(m * np.exp(2j * np.pi * ph), *lattice.point(n))
                for n, m, ph in zip(idx, mags, phases)]
    else:
        taps = random_taps(lattice, sc.index_box, sc.K, sc.amplitude_sigma,
                           _rng(sc.seed, _SCENARIO))
    return ChannelSpec(tuple(taps), lattice)


def _plan(cfg: ExperimentConfig) -> SamplingPlan:
    p = cfg.plan
    return SamplingPlan(p.tau_min, p.horizon, p.M, tuple(p.nu_window))


def _tap_rows(taps) -> list[dict]:
    return [{"a_re": t.amplitude.real, "a_im": t.amplitude.imag, "tau": t.delay, "nu": t.doppler}
            for t in taps]


def _relative_errors(truth, estimate) -> list[dict]:
    """Per-tap errors relative to ``max(|true value|, 1)`` (amplitude: ``|a|``)."""
    report = match_taps(truth, estimate)
    rows = []
    for p in report.pairs:
        t = truth[p["truth"]]
        rows.append({
            "truth": p["truth"],
            "tau": abs(p["delay_err"]) / max(abs(t.delay), 1.0),
            "nu": abs(p["doppler_err"]) / max(abs(t.doppler), 1.0),
            "amp": p["amp_err"] / abs(t.amplitude),
        })
    return rows


def _estimate(cfg: ExperimentConfig, samples, K: int, snr_db: Optional[float]):
    plan = _plan(cfg)
    est = cfg.estimation
    order = K if est.order == "known" else None
    tol = est.rank_tol if est.rank_tol is not None else noise_rank_tol(snr_db)
    return estimate_channel(samples, cfg.probe.B, plan, order, tol, strict=est.strict)


def run_identify(cfg: ExperimentConfig) -> Outcome:
    """Simulate the scenario, estimate the taps, and compare with the truth."""
    validate_identify(cfg)
    spec = scenario_spec(cfg)
    plan = _plan(cfg)
    probe = GaussianProbe(cfg.probe.B, cfg.probe.T)
    times = plan.sample_times()
    r = apply_channel(spec, probe, times)
    snr = cfg.noise.identify_snr_db
    if snr is not None:
        r = add_awgn(r, snr, _rng(cfg.scenario.seed, _NOISE, 0, 0))
    result = _estimate(cfg, r, len(spec), snr)
    truth = list(spec.taps)
    result.matching = match_taps(truth, result.taps)
    rel = _relative_errors(truth, result.taps)
    worst = max((max(e["tau"], e["nu"], e["amp"]) for e in rel), default=0.0)
    complete = result.matching.unmatched == 0
    passed = complete and worst <= cfg.checks.tap_tol
    payload = {
        "result": result.to_dict(),
        "truth": _tap_rows(truth),
        "relative_errors": rel,
        "max_relative_error": worst,
        "tap_tol": cfg.checks.tap_tol,
        "snr_db": snr,
        "passed": passed,
    }
    tables = {
        "truth.csv": ("a_re,a_im,tau,nu", [(r_["a_re"], r_["a_im"], r_["tau"], r_["nu"])
                                          for r_ in _tap_rows(truth)]),
        "estimate.csv": ("a_re,a_im,tau,nu", [(r_["a_re"], r_["a_im"], r_["tau"], r_["nu"])
                                             for r_ in _tap_rows(result.taps)]),
        "samples.csv": ("t,re,im", [(t, v.real, v.imag) for t, v in zip(times, r)]),
    }
    return Outcome("identify", payload, tables, passed)


def run_sweep(cfg: ExperimentConfig) -> Outcome:
    """Monte Carlo noise sweep; checks that the median delay RMSE never rises with SNR."""
    validate_sweep(cfg)
    spec = scenario_spec(cfg)
    plan = _plan(cfg)
    lattice = build_lattice(cfg)
    probe = GaussianProbe(cfg.probe.B, cfg.probe.T)
    times = plan.sample_times()
    sc = cfg.scenario
    rows = []
    summary = []
    for s_idx, snr in enumerate(cfg.noise.snr_db):
        rmse_tau = []
        for trial in range(cfg.noise.trials):
            if cfg.noise.redraw_scenario and sc.mode == "random":
                taps = random_taps(lattice, sc.index_box, sc.K, sc.amplitude_sigma,
                                   _rng(sc.seed, _SCENARIO, trial))
                spec = ChannelSpec(tuple(taps), lattice)
            clean = apply_channel(spec, probe, times)
            noisy = add_awgn(clean, snr, _rng(sc.seed, _NOISE, s_idx, trial))
            res = _estimate(cfg, noisy, len(spec), snr)
            m = match_taps(list(spec.taps), res.taps)
            rmse_tau.append(m.rmse_tau)
            rows.append((snr, trial, m.rmse_tau, m.rmse_nu, m.rmse_amp, m.unmatched,
                         res.vandermonde_cond, res.fit_residual))
        summary.append({"snr_db": snr, "median_rmse_tau": float(np.median(rmse_tau)),
                        "mean_rmse_tau": float(np.mean(rmse_tau))})
    order = sorted(summary, key=lambda s: s["snr_db"])
    medians = [s["median_rmse_tau"] for s in order]
    monotone = all(b <= a for a, b in zip(medians, medians[1:]))
    payload = {"trials": cfg.noise.trials, "redraw_scenario": cfg.noise.redraw_scenario,
               "summary": summary,
               "median_nonincreasing": monotone, "passed": monotone}
    tables = {
        "trials.csv": ("snr_db,trial,rmse_tau,rmse_nu,rmse_amp,unmatched,cond,residual", rows),
        "summary.csv": ("snr_db,median_rmse_tau,mean_rmse_tau",
                        [(s["snr_db"], s["median_rmse_tau"], s["mean_rmse_tau"]) for s in summary]),
    }
    return Outcome("sweep", payload, tables, monotone)


def density_points(cfg: ExperimentConfig) -> np.ndarray:
    d = cfg.density
    lattice = build_lattice(cfg)
    if d.source == "pattern":
        return residue_pattern_points(build_pattern(d.pattern, "density.pattern"), lattice, d.box)
    if d.source == "csv":
        return read_points_csv(d.points_csv)
    return lattice.points_in_box([0.0, 0.0], [float(d.box), float(d.box)])


def run_density(cfg: ExperimentConfig) -> Outcome:
    """Window counts, density estimates, exact pattern density and the verdict."""
    validate_density(cfg)
    d = cfg.density
    lattice = build_lattice(cfg)
    pts = density_points(cfg)
    report = density_estimates(pts, d.radii, d.grid_step)
    verdict = identifiability_verdict(d.alpha, lattice)
    payload = {
        "points": int(pts.shape[0]),
        "report": report.to_dict(),
        "lattice_density": lattice.density(),
        "alpha": d.alpha,
        "verdict": verdict.value,
    }
    if d.source == "pattern":
        payload["exact_density"] = exact_pattern_density(
            build_pattern(d.pattern, "density.pattern"), lattice)
    passed = d.expected_verdict is None or d.expected_verdict == verdict.value
    payload["passed"] = passed
    rows = [(r, lo, hi, lo / r ** 2, hi / r ** 2)
            for r, lo, hi in zip(report.radii, report.n_minus, report.n_plus)]
    tables = {"density.csv": ("r,n_minus,n_plus,lower,upper", rows)}
    return Outcome("density", payload, tables, passed)


def _verify_signal(cfg: ExperimentConfig) -> SampledSignal:
    v = cfg.verify
    B = v.B
    hw = v.stft_half_width
    if v.signal == "zero":
        return SampledSignal.from_function(lambda t: np.zeros_like(t, dtype=complex), -hw, hw, v.stft_dt)
    if v.signal == "gaussian":
        return SampledSignal.from_function(
            lambda t: np.sqrt(B) * np.exp(-np.pi * B * B * t * t / 2.0) + 0j, -hw, hw, v.stft_dt)
    rng = _rng(cfg.scenario.seed, _VERIFY_SIGNAL)
    freqs = rng.uniform(-B, B, 6)
    coefs = rng.standard_normal(6) + 1j * rng.standard_normal(6)

    def smooth_random(t):
        env = np.exp(-np.pi * (B * t) ** 2 / 8.0)
        return env * (np.exp(2j * np.pi * np.outer(t, freqs)) @ coefs)

    return SampledSignal.from_function(smooth_random, -hw, hw, v.stft_dt)


def run_verify(cfg: ExperimentConfig) -> Outcome:
    """Upper-bound ratio sweep plus the STFT/Bargmann identity check."""
    validate_verify(cfg)
    v = cfg.verify
    lattice = build_lattice(cfg)
    probe = GaussianProbe(v.B, 0.0)
    ratios, bounds = [], []
    for trial in range(v.trials):
        rng = _rng(cfg.scenario.seed, _VERIFY_PAIRS, trial)
        kh, kk = rng.integers(1, v.max_taps + 1, size=2)
        h = ChannelSpec(tuple(random_taps(lattice, v.index_box, int(kh), 0.3, rng)), lattice)
        k = ChannelSpec(tuple(random_taps(lattice, v.index_box, int(kk), 0.3, rng)), lattice)
        atoms = [a for a in difference_measure(h, k) if a[2] != 0]
        if not atoms:
            continue
        grid = default_grid(probe, h, k)
        if v.grid_dt is not None:
            grid = grid[0] + v.grid_dt * np.arange(int(np.ceil((grid[-1] - grid[0]) / v.grid_dt)) + 1)
        ratios.append(identifiability_ratio(h, k, probe, grid))
        bounds.append(synthesis_bound([a[0] for a in atoms], [a[1] for a in atoms], probe))
    max_ratio = max(ratios) if ratios else 0.0
    ratio_pass = max_ratio <= 1.0 + v.ratio_tol

    x = _verify_signal(cfg)
    degenerate = not np.any(x.values)
    prng = _rng(cfg.scenario.seed, _VERIFY_POINTS)
    pts = [TimeFreqPoint(*prng.uniform(-v.stft_extent, v.stft_extent, 2))
           for _ in range(v.stft_points)]
    records = compare_stft_bargmann(x, v.B, pts)
    max_err = max(r["abs_err"] for r in records)
    stft_pass = max_err <= v.stft_tol
    passed = ratio_pass and stft_pass
    payload = {
        "ratio": {"trials": len(ratios), "max_ratio": max_ratio, "tol": v.ratio_tol,
                  "max_synthesis_bound": max(bounds) if bounds else 0.0,
                  "within_synthesis_bound": bool(all(r <= b * (1 + 1e-9) for r, b in zip(ratios, bounds))),
                  "passed": ratio_pass},
        "stft_bargmann": {"signal": v.signal, "dt": v.stft_dt, "max_abs_err": max_err,
                          "tol": v.stft_tol, "degenerate": degenerate, "passed": stft_pass,
                          "points": records},
        "passed": passed,
    }
    tables = {"ratios.csv": ("trial,ratio,synthesis_bound", list(zip(range(len(ratios)), ratios, bounds)))}
    return Outcome("verify", payload, tables, passed)


RUNNERS = {
    "identify": run_identify,
    "sweep": run_sweep,
    "density": run_density,
    "verify": run_verify,
}


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_outputs(outcome: Outcome, cfg: ExperimentConfig, out_dir, formats=None) -> list[Path]:
    """Write JSON result, CSV tables and a manifest; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats = cfg.outputs.formats if formats is None else formats
    written = []
    if "json" in formats:
        p = out / f"{outcome.command}.json"
        p.write_text(json.dumps(outcome.payload, sort_keys=True, indent=2) + "\n")
        written.append(p)
    if "csv" in formats:
        for name, (header, rows) in outcome.tables.items():
            p = out / name
            with open(p, "w", newline="") as fh:
                fh.write(header + "\n")
                for row in rows:
                    fh.write(",".join(_fmt(v) for v in row) + "\n")
            written.append(p)
    manifest = {
        "command": outcome.command,
        "config_sha256": cfg.digest(),
        "seed": cfg.scenario.seed,
        "version": __version__,
        "passed": outcome.passed,
        "files": sorted(p.name for p in written),
        "config": cfg.to_dict(),
    }
    p = out / "manifest.json"
    p.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    written.append(p)
    return written
