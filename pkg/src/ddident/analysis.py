"""Gaussian-window STFT and the Bargmann transform by trapezoidal quadrature.

With window ``g(t) = sqrt(B) exp(-pi B^2 t^2 / 2)`` the two transforms are
tied by

    V_g x(tau, nu) = (Bf)(z) exp(-pi |z|^2 / 2) exp(-pi i tau nu),

where ``f(u) = (sqrt(2)/B)^(1/2) x(u sqrt(2)/B)`` and
``z = tau B / sqrt(2) - i nu sqrt(2) / B``. :func:`verify_stft_bargmann`
evaluates both sides independently and reports the largest mismatch.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .channel import SampledSignal
from .errors import CoverageError, InvalidParameterError, RangeError

SQRT2 = np.sqrt(2.0)
#: largest |z| accepted by the Bargmann quadrature
Z_MAX = 6.0
#: integrand values below this fraction of the peak are dropped
WINDOW_FLOOR = 1e-18
#: allowed integrand magnitude at the grid ends, relative to the peak
EDGE_TOL = 1e-15


@dataclass(frozen=True)
class TimeFreqPoint:
    tau: float
    nu: float

    def z(self, bandwidth: float) -> complex:
        return complex(self.tau * bandwidth / SQRT2, -self.nu * SQRT2 / bandwidth)


def _trapz_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n, dt)
    if n > 1:
        w[0] = w[-1] = dt / 2.0
    return w


def _check_stft_coverage(x: SampledSignal, bandwidth: float, tau: float) -> None:
    half = 8.0 / bandwidth
    slack = 1e-9 * max(1.0, abs(tau) + half)
    if x.t0 > tau - half + slack or x.t_end < tau + half - slack:
        raise CoverageError(
            f"signal grid [{x.t0:g}, {x.t_end:g}] does not cover "
            f"[{tau - half:g}, {tau + half:g}]")


def stft_gaussian(x: SampledSignal, bandwidth: float, p: TimeFreqPoint) -> complex:
    """``int x(t) g(t - tau) exp(-2 pi i nu t) dt`` by the trapezoidal rule."""
    if not bandwidth > 0:
        raise InvalidParameterError("B must be positive")
    _check_stft_coverage(x, bandwidth, p.tau)
    t = x.times
    window = np.sqrt(bandwidth) * np.exp(-np.pi * bandwidth ** 2 * (t - p.tau) ** 2 / 2.0)
    w = _trapz_weights(t.size, x.dt)
    return complex(np.sum(w * x.values * window * np.exp(-2j * np.pi * p.nu * t)))


def stft_grid(x: SampledSignal, bandwidth: float, taus, nus) -> np.ndarray:
    """STFT on the tensor grid ``taus x nus`` (shape ``(len(taus), len(nus))``)."""
    taus = np.asarray(taus, dtype=float)
    nus = np.asarray(nus, dtype=float)
    for tau in (taus.min(), taus.max()):
        _check_stft_coverage(x, bandwidth, tau)
    t = x.times
    w = _trapz_weights(t.size, x.dt)
    win = np.sqrt(bandwidth) * np.exp(-np.pi * bandwidth ** 2 * (t[None, :] - taus[:, None]) ** 2 / 2.0)
    left = win * (w * x.values)[None, :]
    return left @ np.exp(-2j * np.pi * t[:, None] * nus[None, :])


def bargmann_transform(f: SampledSignal, z: complex) -> complex:
    """``2^(1/4) exp(-pi z^2/2) int f(u) exp(2 pi u z - pi u^2) du``."""
    z = complex(z)
    if abs(z) > Z_MAX:
        raise RangeError(f"|z| = {abs(z):g} exceeds {Z_MAX:g}")
    u = f.times
    vals = f.values
    mag = np.abs(vals)
    nz = mag > 0
    if not np.any(nz):
        return 0j
    # log-magnitude of the full integrand, used for windowing and coverage
    logmag = np.full(u.size, -np.inf)
    logmag[nz] = np.log(mag[nz]) + 2 * np.pi * u[nz] * z.real - np.pi * u[nz] ** 2
    peak = logmag.max()
    keep = np.nonzero(logmag >= peak + np.log(WINDOW_FLOOR))[0]
    lo, hi = keep[0], keep[-1] + 1
    edge = np.log(EDGE_TOL)
    if (lo == 0 and logmag[0] > peak + edge) or (hi == u.size and logmag[-1] > peak + edge):
        raise CoverageError("grid truncates the Bargmann integrand")
    us = u[lo:hi]
    expo = 2 * np.pi * us * z - np.pi * us ** 2 - np.pi * z * z / 2.0
    w = _trapz_weights(us.size, f.dt)
    return complex(2 ** 0.25 * np.sum(w * vals[lo:hi] * np.exp(expo)))


def bargmann_input(x: SampledSignal, bandwidth: float, du: Optional[float] = None) -> SampledSignal:
    """Resample ``f(u) = (sqrt(2)/B)^(1/2) x(u sqrt(2)/B)`` on a uniform ``u`` grid.

    ``x`` is interpolated with a cubic spline; the default pitch ``du`` equals
    the pitch of ``x``.
    """
    scale = SQRT2 / bandwidth
    du = x.dt if du is None else float(du)
    u_lo, u_hi = x.t0 / scale, x.t_end / scale
    n = int(np.floor((u_hi - u_lo) / du * (1 - 1e-12))) + 1
    u = u_lo + du * np.arange(n)
    t = np.clip(u * scale, x.t0, x.t_end)
    spline = CubicSpline(x.times, x.values)
    return SampledSignal(u_lo, du, np.sqrt(scale) * spline(t))


def compare_stft_bargmann(x: SampledSignal, bandwidth: float,
                          points: Sequence[TimeFreqPoint],
                          du: Optional[float] = None) -> list[dict]:
    """Both sides of the STFT/Bargmann identity at every point."""
    f = bargmann_input(x, bandwidth, du)
    records = []
    for p in points:
        lhs = stft_gaussian(x, bandwidth, p)
        z = p.z(bandwidth)
        rhs = (bargmann_transform(f, z) * np.exp(-np.pi * abs(z) ** 2 / 2.0)
               * np.exp(-1j * np.pi * p.tau * p.nu))
        records.append({
            "point": {"tau": p.tau, "nu": p.nu},
            "lhs": {"re": lhs.real, "im": lhs.imag},
            "rhs": {"re": rhs.real, "im": rhs.imag},
            "abs_err": float(abs(lhs - rhs)),
        })
    return records


def verify_stft_bargmann(x: SampledSignal, bandwidth: float,
                         points: Sequence[TimeFreqPoint],
                         du: Optional[float] = None) -> float:
    """Largest ``|V_g x - Bf * prefactor|`` over ``points``."""
    records = compare_stft_bargmann(x, bandwidth, points, du)
    return max((r["abs_err"] for r in records), default=0.0)
