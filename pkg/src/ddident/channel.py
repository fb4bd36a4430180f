"""Linear time-varying channel driven by a Gaussian probe.

The channel maps ``x`` to ``sum_k a_k x(t - tau_k) exp(-2 pi i nu_k t)``.
Norms are Riemann sums on uniform grids; for the Gaussian signals used here
these converge faster than any power of the pitch.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend
from .errors import InvalidParameterError, UndefinedRatioError
from .measures import ChannelSpec, Lattice, Tap, _snap_close


@dataclass(frozen=True)
class SampledSignal:
    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex).ravel()
        if not self.dt > 0:
            raise InvalidParameterError("dt must be positive")
        if vals.size == 0:
            raise InvalidParameterError("a sampled signal needs at least one value")
        vals.setflags(write=False)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "values", vals)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.values.size - 1)

    @classmethod
    def from_function(cls, func, t0: float, t1: float, dt: float) -> "SampledSignal":
        n = int(np.floor((t1 - t0) / dt + 1e-9)) + 1
        t = t0 + dt * np.arange(n)
        return cls(t0, dt, func(t))


@dataclass(frozen=True)
class GaussianProbe:
    """``sqrt(B) exp(-pi B^2 (t - T)^2 / 2)``; unit L2 norm for every ``B``."""

    bandwidth: float
    center: float = 0.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise InvalidParameterError("probe bandwidth B must be positive")
        object.__setattr__(self, "bandwidth", float(self.bandwidth))
        object.__setattr__(self, "center", float(self.center))


def probe_value(probe: GaussianProbe, t):
    """Probe samples at ``t`` (scalar or array), as complex numbers."""
    t = np.asarray(t, dtype=float)
    b = probe.bandwidth
    out = np.sqrt(b) * np.exp(-np.pi * b * b * (t - probe.center) ** 2 / 2.0) + 0j
    return complex(out) if out.ndim == 0 else out


def apply_channel(spec: ChannelSpec, probe: GaussianProbe, times) -> np.ndarray:
    """Channel response to ``probe`` at ``times``; taps are summed in list order."""
    times = np.ascontiguousarray(times, dtype=float)
    if len(spec) == 0:
        return np.zeros(times.shape, dtype=complex)
    return _backend.gaussian_response(times, spec.amplitudes, spec.delays, spec.dopplers,
                                      probe.bandwidth, probe.center)


def l2_norm_grid(signal: SampledSignal) -> float:
    """Riemann approximation ``sqrt(dt * sum |x_m|^2)``.

    The grid must cover the signal's mass; truncation is the caller's concern.
    """
    v = signal.values
    return float(np.sqrt(signal.dt * np.vdot(v, v).real))


def default_grid(probe: GaussianProbe, *specs: ChannelSpec) -> np.ndarray:
    """Uniform time grid adequate for norms of channel responses to ``probe``.

    Covers ``8/B`` beyond the delayed probe centres. The pitch is at most
    ``1/(8B)`` and also keeps aliases of Doppler beat frequencies at least
    ``6B`` away from zero.
    """
    b = probe.bandwidth
    delays = np.concatenate([s.delays for s in specs]) if specs else np.zeros(0)
    dopplers = np.concatenate([s.dopplers for s in specs]) if specs else np.zeros(0)
    lo = probe.center + (delays.min() if delays.size else 0.0) - 8.0 / b
    hi = probe.center + (delays.max() if delays.size else 0.0) + 8.0 / b
    nu_span = float(np.ptp(dopplers)) if dopplers.size else 0.0
    dt = 1.0 / max(8.0 * b, nu_span + 6.0 * b)
    n = int(np.ceil((hi - lo) / dt)) + 1
    return lo + dt * np.arange(n)


def _merge_key(lattice: Optional[Lattice], tap: Tap):
    if lattice is not None:
        idx = lattice.index_of(tap.delay, tap.doppler)
        if idx is None:
            raise InvalidParameterError(f"tap ({tap.delay!r}, {tap.doppler!r}) is off the lattice")
        return idx
    return None


def difference_measure(h: ChannelSpec, k: ChannelSpec) -> list[tuple[float, float, complex]]:
    """Atoms ``(delay, doppler, amplitude)`` of ``mu_h - mu_k``.

    Supports are aligned by lattice index when a lattice is known and by
    snapped coordinates otherwise; unmatched taps keep their full amplitude.
    Atoms that cancel exactly are kept with amplitude 0.
    """
    lattice = h.lattice or k.lattice
    atoms: list[list] = []
    keyed: dict = {}
    for sign, spec in ((1.0, h), (-1.0, k)):
        for tap in spec.taps:
            key = _merge_key(lattice, tap)
            if key is not None:
                if key in keyed:
                    keyed[key][2] += sign * tap.amplitude
                    continue
                keyed[key] = [tap.delay, tap.doppler, sign * tap.amplitude]
                atoms.append(keyed[key])
                continue
            for atom in atoms:
                if _snap_close(atom[0], tap.delay) and _snap_close(atom[1], tap.doppler):
                    atom[2] += sign * tap.amplitude
                    break
            else:
                atoms.append([tap.delay, tap.doppler, sign * tap.amplitude])
    return [(a[0], a[1], complex(a[2])) for a in atoms]


def operator_distance(h: ChannelSpec, k: ChannelSpec) -> float:
    """l2 norm of the amplitudes of ``mu_h - mu_k``."""
    amps = np.array([a for _, _, a in difference_measure(h, k)], dtype=complex)
    return float(np.sqrt(np.sum(np.abs(amps) ** 2))) if amps.size else 0.0


def identifiability_ratio(h: ChannelSpec, k: ChannelSpec, probe: GaussianProbe,
                          grid=None) -> float:
    """``||Hx - Kx||_L2 / ||H - K||`` with the L2 norm taken on ``grid``."""
    dist = operator_distance(h, k)
    if dist == 0.0:
        raise UndefinedRatioError("H and K coincide; the ratio is undefined")
    times = default_grid(probe, h, k) if grid is None else np.asarray(grid, dtype=float)
    if times.size < 2:
        raise InvalidParameterError("grid needs at least two samples")
    diff = apply_channel(h, probe, times) - apply_channel(k, probe, times)
    num = l2_norm_grid(SampledSignal(times[0], times[1] - times[0], diff))
    return num / dist


def atom_gram(delays, dopplers, probe: GaussianProbe) -> np.ndarray:
    """Closed-form Gram matrix of time-frequency shifted probes.

    ``G[j, k] = <M_nu_j T_tau_j x, M_nu_k T_tau_k x>``.
    """
    b = probe.bandwidth
    tau = np.asarray(delays, dtype=float)
    nu = np.asarray(dopplers, dtype=float)
    dtau = tau[:, None] - tau[None, :]
    dnu = nu[:, None] - nu[None, :]
    mid = (tau[:, None] + tau[None, :]) / 2.0 + probe.center
    return (np.exp(-np.pi * b * b * dtau ** 2 / 4.0 - np.pi * dnu ** 2 / (b * b))
            * np.exp(-2j * np.pi * dnu * mid))


def synthesis_bound(delays, dopplers, probe: GaussianProbe) -> float:
    """Best constant ``C`` with ``||sum c_k M T x|| <= C ||c||_2`` on this support."""
    g = atom_gram(delays, dopplers, probe)
    if g.size == 0:
        return 0.0
    return float(np.sqrt(np.linalg.eigvalsh(g).max()))


def write_signal_csv(path, signal: SampledSignal) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,re,im\n")
        for t, v in zip(signal.times, signal.values):
            fh.write(f"{float(t)!r},{float(v.real)!r},{float(v.imag)!r}\n")


def read_signal_csv(path) -> SampledSignal:
    with open(path, newline="") as fh:
        rows = [(float(r["t"]), complex(float(r["re"]), float(r["im"])))
                for r in csv.DictReader(fh)]
    if len(rows) < 2:
        raise InvalidParameterError("signal CSV needs at least two rows")
    t = np.array([r[0] for r in rows])
    steps = np.diff(t)
    dt = float(np.mean(steps))
    if not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
        raise InvalidParameterError("signal CSV times are not uniformly spaced")
    return SampledSignal(t[0], dt, np.array([r[1] for r in rows]))


def write_channel_csv(path, spec: ChannelSpec) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("a_re,a_im,tau,nu\n")
        for tap in spec.taps:
            a = tap.amplitude
            fh.write(f"{a.real!r},{a.imag!r},{tap.delay!r},{tap.doppler!r}\n")


def read_channel_csv(path, lattice: Optional[Lattice] = None) -> ChannelSpec:
    with open(path, newline="") as fh:
        taps = [Tap(complex(float(r["a_re"]), float(r["a_im"])), float(r["tau"]), float(r["nu"]))
                for r in csv.DictReader(fh)]
    return ChannelSpec(tuple(taps), lattice)
