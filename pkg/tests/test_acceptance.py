"""One test per acceptance criterion; a summary line per criterion is printed at the end."""
import json
import time

import numpy as np
import pytest

from ddident.analysis import TimeFreqPoint, verify_stft_bargmann
from ddident.channel import GaussianProbe, SampledSignal, apply_channel, l2_norm_grid, probe_value
from ddident.cli import main
from ddident.config import ExperimentConfig, fixture_path, load_config
from ddident.estimation import (SamplingPlan, estimate_channel, match_taps, matrix_pencil,
                                normalize_samples, synthesize_samples, vandermonde_condition)
from ddident.harness import run_sweep, run_verify
from ddident.measures import (ChannelSpec, Lattice, ResiduePattern, Tap, Verdict,
                              density_estimates, identifiability_verdict, pattern_index_density)

pytestmark = pytest.mark.acceptance


def _lattice_taps(rng, K, i_box, j_box, lattice):
    cells = [(i, j) for i in range(i_box[0], i_box[1] + 1) for j in range(j_box[0], j_box[1] + 1)]
    taps = []
    for c in rng.choice(len(cells), size=K, replace=False):
        tau, nu = lattice.point(cells[c])
        taps.append(Tap(rng.lognormal(-0.045, 0.3) * np.exp(2j * np.pi * rng.random()), tau, nu))
    return taps


def test_noiseless_end_to_end_recovery(acceptance):
    plan = SamplingPlan(0.0, 8.0, 64, (-3.5, 3.5))
    lattice = Lattice.identity()
    rng = np.random.default_rng(20240601)
    worst, slowest = 0.0, 0.0
    for _ in range(10):
        taps = _lattice_taps(rng, 4, (0, 2), (-3, 3), lattice)
        start = time.perf_counter()
        probe = GaussianProbe(1.0, plan.horizon)
        r = apply_channel(ChannelSpec(tuple(taps), lattice), probe, plan.sample_times())
        est = estimate_channel(r, 1.0, plan).taps
        slowest = max(slowest, time.perf_counter() - start)
        m = match_taps(taps, est)
        assert m.unmatched == 0
        for p in m.pairs:
            t = taps[p["truth"]]
            worst = max(worst, abs(p["delay_err"]) / max(abs(t.delay), 1.0),
                        abs(p["doppler_err"]) / max(abs(t.doppler), 1.0),
                        p["amp_err"] / abs(t.amplitude))
    ok = worst <= 1e-6 and slowest < 1.0
    acceptance(1, "noiseless K=4 recovery", ok,
               f"max rel err {worst:.2e} (tol 1e-6), slowest run {slowest:.3f}s (< 1s)")
    assert ok


def test_closed_form_samples_match_simulation(acceptance):
    rng = np.random.default_rng(99)
    worst = 0.0
    start = time.perf_counter()
    for _ in range(50):
        B = rng.uniform(0.5, 1.5)
        T = float(rng.choice([1.0, 2.0, 4.0, 8.0]))
        M = int(rng.integers(16, 65))
        tau_min = rng.uniform(-1, 1)
        width = 0.9 * M / T
        plan = SamplingPlan(tau_min, T, M, (-width / 2, width / 2))
        lattice = Lattice([[0.5, 0.0], [0.0, 0.5]])
        taps = [Tap(t.amplitude, t.delay + tau_min, t.doppler)
                for t in _lattice_taps(rng, int(rng.integers(1, 7)), (0, 4), (-3, 3), lattice)]
        sim = apply_channel(ChannelSpec(tuple(taps)), GaussianProbe(B, T), plan.sample_times())
        syn = synthesize_samples(taps, B, plan)
        worst = max(worst, np.max(np.abs(sim - syn)) / np.max(np.abs(sim)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 5.0
    acceptance(2, "closed-form cisoid samples", ok,
               f"max rel diff {worst:.2e} over 50 scenarios (tol 1e-12), {elapsed:.2f}s (< 5s)")
    assert ok


def test_upper_bound_ratio(acceptance):
    start = time.perf_counter()
    out = run_verify(load_config(fixture_path("verify_default.cfg")))
    elapsed = time.perf_counter() - start
    r = out.payload["ratio"]
    ok = r["trials"] == 100 and r["max_ratio"] <= 1.0 + 1e-3 and elapsed < 30.0
    acceptance(3, "ratio bound ||Hx-Kx|| <= ||H-K||", ok,
               f"max ratio {r['max_ratio']:.4f} over {r['trials']} pairs (tol 1.001); "
               f"sharp constant up to {r['max_synthesis_bound']:.4f}; {elapsed:.2f}s")
    assert ok


def test_stft_bargmann_identity(acceptance):
    rng = np.random.default_rng(4)
    pts = [TimeFreqPoint(*rng.uniform(-2, 2, 2)) for _ in range(20)]
    start = time.perf_counter()
    g = SampledSignal.from_function(lambda t: probe_value(GaussianProbe(1.0), t), -12, 12, 1 / 64)
    err = verify_stft_bargmann(g, 1.0, pts)
    elapsed = time.perf_counter() - start
    ok = err <= 1e-6 and elapsed < 10.0
    acceptance(4, "STFT/Bargmann identity", ok,
               f"max discrepancy {err:.2e} at 20 points (tol 1e-6), {elapsed:.2f}s (< 10s)")
    assert ok


def test_probe_normalisation(acceptance):
    errs = {}
    for B in (0.5, 1.0, 2.0, 4.0):
        p = GaussianProbe(B)
        x = SampledSignal.from_function(lambda t: probe_value(p, t), -8 / B, 8 / B, 1 / (64 * B))
        errs[B] = abs(l2_norm_grid(x) - 1.0)
    worst = max(errs.values())
    ok = worst <= 1e-9
    acceptance(5, "probe unit norm", ok, f"max | ||g|| - 1 | = {worst:.2e} (tol 1e-9)")
    assert ok


def _enumerate(pattern):
    p = pattern.period
    hits = 0
    for i in range(p):
        for j in range(p):
            if pattern.outer_modulus is None:
                hits += i % pattern.modulus == j % pattern.modulus and i % pattern.modulus in pattern.residues
            else:
                m = pattern.modulus
                hits += i == j and (i % m) in pattern.residues and (i // m) in pattern.outer_residues
    return hits, p * p


def test_density_oracles(acceptance):
    rng = np.random.default_rng(6)
    exact = True
    for _ in range(50):
        m = int(rng.integers(1, 10))
        res = rng.choice(m, size=int(rng.integers(1, m + 1)), replace=False).tolist()
        pat = ResiduePattern(m, res)
        hits, total = _enumerate(pat)
        f = pattern_index_density(pat)
        exact &= f.numerator * total == hits * f.denominator
    rel = {}
    for name, A in (("I", [[1, 0], [0, 1]]), ("diag(2,1)", [[2, 0], [0, 1]]),
                    ("[[1,1],[0,1]]", [[1, 1], [0, 1]])):
        lat = Lattice(A)
        rep = density_estimates(lat.points_in_box([0, 0], [60, 60]), [20.0])
        d = lat.density()
        rel[name] = max(abs(rep.upper_estimate - d), abs(rep.lower_estimate - d)) / d
    ok = exact and max(rel.values()) <= 0.05
    acceptance(6, "density oracles", ok,
               f"50 patterns exact={exact}; r=20 rel err "
               + ", ".join(f"{k}: {v:.3f}" for k, v in rel.items()) + " (tol 0.05)")
    assert ok


def test_verdict_table(acceptance):
    table = [(0.4, [[1, 0], [0, 1]], Verdict.IDENTIFIABLE),
             (0.6, [[0.5, 0], [0, 1]], Verdict.NOT_IDENTIFIABLE),
             (0.5, [[1, 0], [0, 1]], Verdict.BOUNDARY),
             (0.6, [[1, 0], [0, 1]], Verdict.HYPOTHESIS_VIOLATED)]
    got = [identifiability_verdict(a, Lattice(A)) for a, A, _ in table]
    ok = all(g is w for g, (_, _, w) in zip(got, table))
    acceptance(7, "verdict table", ok, ", ".join(v.value for v in got))
    assert ok


def test_matrix_pencil_oracles(acceptance):
    z0 = 0.95 * np.exp(1j * np.pi / 5)
    one = matrix_pencil(z0 ** np.arange(1, 33))
    e1 = max(abs(one.poles[0] - z0), abs(one.amplitudes[0] - 1))
    m = np.arange(1, 65)
    z = np.array([0.9, 0.8 * np.exp(1j * np.pi / 3)])
    a = np.array([2.0, 1.0])
    two = matrix_pencil((z[None, :] ** m[:, None]) @ a)
    e2 = 0.0
    for zk, ak in zip(z, a):
        i = np.argmin(np.abs(two.poles - zk))
        e2 = max(e2, abs(two.poles[i] - zk), abs(two.amplitudes[i] - ak))
    cond = vandermonde_condition([z0], 32)
    ok = one.order == 1 and two.order == 2 and e1 <= 1e-8 and e2 <= 1e-8 and cond == 1.0
    acceptance(8, "matrix pencil oracles", ok,
               f"single-tone err {e1:.1e}, two-tone err {e2:.1e} (tol 1e-8), cond(K=1)={cond}")
    assert ok


def test_noise_monotonicity(acceptance):
    cfg = load_config(fixture_path("noise_sweep.cfg"))
    start = time.perf_counter()
    out = run_sweep(cfg)
    elapsed = time.perf_counter() - start
    meds = [s["median_rmse_tau"] for s in sorted(out.payload["summary"], key=lambda s: s["snr_db"])]
    ok = (cfg.noise.snr_db == [20, 30, 40, 50] and cfg.noise.trials == 100
          and out.payload["median_nonincreasing"] and elapsed < 120.0)
    acceptance(9, "noise monotonicity", ok,
               "median delay RMSE " + " >= ".join(f"{v:.2e}" for v in meds)
               + f" at 20/30/40/50 dB, {elapsed:.1f}s (< 120s)")
    assert ok


FIXTURES = {"noiseless_k4.cfg": "identify", "noise_sweep.cfg": "sweep",
            "density_lattice.cfg": "density", "density_pattern.cfg": "density",
            "verify_default.cfg": "verify"}


def test_determinism(acceptance, tmp_path, capsys):
    mismatched = []
    for name, command in FIXTURES.items():
        dirs = []
        for run in ("a", "b"):
            d = tmp_path / name / run
            main([command, "--config", str(fixture_path(name)), "--seed", "7", "--out", str(d)])
            dirs.append(d)
        capsys.readouterr()
        files = sorted(p.name for p in dirs[0].iterdir())
        if files != sorted(p.name for p in dirs[1].iterdir()):
            mismatched.append(name)
            continue
        mismatched += [f"{name}:{f}" for f in files
                       if (dirs[0] / f).read_bytes() != (dirs[1] / f).read_bytes()]
    ok = not mismatched
    acceptance(10, "byte-identical reruns", ok,
               f"{len(FIXTURES)} fixtures, mismatches: {mismatched or 'none'}")
    assert ok
