"""Recovery of channel taps from sampled responses to a Gaussian probe.

With the probe centred at the horizon ``T`` and samples
``r_m = (Hx)(t_m)``, ``t_m = tau_min + m T / M``, the normalised sequence
``y_m = r_{M-m} / lambda_m`` (``m = 1..M``) is a sum of damped cisoids
``sum_k alpha_k z_k^m`` with

    lambda_j = sqrt(B) exp(-pi B^2 T^2 j^2 / (2 M^2))
    z_k      = exp(-pi B^2 T (tau_k - tau_min) / M) exp(2 pi i nu_k T / M)
    alpha_k  = a_k exp(-pi B^2 (tau_k - tau_min)^2 / 2) exp(-2 pi i nu_k (T + tau_min))

Poles and weights come from a matrix pencil on the Hankel matrix of ``y``;
:func:`backmap` inverts the two maps above.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (DegeneratePoleError, InsufficientSamplesError, InvalidParameterError,
                     NumericalError, UnderflowError)
from .measures import Tap

log = logging.getLogger(__name__)

#: smallest usable normalisation weight
LAMBDA_FLOOR = 1e-300
#: pole moduli up to 1 + POLE_SLACK are clamped to the unit circle silently
POLE_SLACK = 1e-6


@dataclass(frozen=True)
class SamplingPlan:
    tau_min: float
    horizon: float
    count: int
    nu_window: tuple

    def __post_init__(self):
        lo, hi = (float(v) for v in self.nu_window)
        object.__setattr__(self, "tau_min", float(self.tau_min))
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "nu_window", (lo, hi))
        if not self.horizon > 0:
            raise InvalidParameterError("horizon T must be positive")
        if int(self.count) != self.count or self.count < 2:
            raise InvalidParameterError("sample count M must be an integer >= 2")
        object.__setattr__(self, "count", int(self.count))
        if not hi > lo:
            raise InvalidParameterError("nu_window needs nu_max > nu_min")
        if hi - lo >= self.doppler_period:
            raise InvalidParameterError(
                f"Doppler window width {hi - lo:g} must be below M/T = {self.doppler_period:g}")

    @property
    def doppler_period(self) -> float:
        return self.count / self.horizon

    def sample_times(self) -> np.ndarray:
        m = np.arange(self.count)
        return self.tau_min + m * self.horizon / self.count


@dataclass(frozen=True)
class CisoidModel:
    poles: np.ndarray
    amplitudes: np.ndarray
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def order(self) -> int:
        return int(self.poles.size)

    def synthesize(self, count: int) -> np.ndarray:
        """``y_m = sum_k alpha_k z_k^m`` for ``m = 1..count``."""
        if self.order == 0:
            return np.zeros(count, dtype=complex)
        return vandermonde(self.poles, count) @ self.amplitudes


@dataclass
class MatchReport:
    pairs: list
    unmatched_truth: int
    unmatched_estimate: int
    rmse_tau: float
    rmse_nu: float
    rmse_amp: float

    @property
    def unmatched(self) -> int:
        return self.unmatched_truth + self.unmatched_estimate

    def to_dict(self) -> dict:
        return {
            "rmse_tau": self.rmse_tau,
            "rmse_nu": self.rmse_nu,
            "rmse_amp": self.rmse_amp,
            "unmatched": self.unmatched,
            "unmatched_truth": self.unmatched_truth,
            "unmatched_estimate": self.unmatched_estimate,
            "pairs": self.pairs,
        }


@dataclass
class EstimationResult:
    taps: list
    model: CisoidModel
    vandermonde_cond: float
    fit_residual: float
    matching: Optional[MatchReport] = None

    def to_dict(self) -> dict:
        d = {
            "taps": [{"a_re": t.amplitude.real, "a_im": t.amplitude.imag,
                      "tau": t.delay, "nu": t.doppler} for t in self.taps],
            "poles": [{"re": float(z.real), "im": float(z.imag)} for z in self.model.poles],
            "cond": self.vandermonde_cond,
            "residual": self.fit_residual,
        }
        if self.matching is not None:
            d["matching"] = self.matching.to_dict()
        return d


def lambda_weights(bandwidth: float, horizon: float, count: int) -> np.ndarray:
    """``lambda_j`` for ``j = 0..M``."""
    if not (bandwidth > 0 and horizon > 0 and count > 0):
        raise InvalidParameterError("B, T and M must be positive")
    j = np.arange(count + 1)
    return np.sqrt(bandwidth) * np.exp(-np.pi * (bandwidth * horizon * j / count) ** 2 / 2.0)


def normalize_samples(r, bandwidth: float, horizon: float, count: int) -> np.ndarray:
    """Map samples ``r_0..r_{M-1}`` to ``y_1..y_M`` (returned 0-based)."""
    r = np.asarray(r, dtype=complex)
    if r.shape != (count,):
        raise InvalidParameterError(f"expected {count} samples, got {r.size}")
    lam = lambda_weights(bandwidth, horizon, count)
    if lam[count] < LAMBDA_FLOOR:
        raise UnderflowError(
            f"lambda_M = {lam[count]:.3g} underflows; reduce B^2 T^2 / M^2 "
            f"(currently {(bandwidth * horizon / count) ** 2:.3g})")
    m = np.arange(1, count + 1)
    return r[count - m] / lam[m]


def synthesize_samples(taps: Sequence[Tap], bandwidth: float, plan: SamplingPlan) -> np.ndarray:
    """``r_m = lambda_{M-m} sum_k alpha_k z_k^{M-m}`` from the closed forms."""
    poles, amps = forward_model(taps, bandwidth, plan)
    M = plan.count
    lam = lambda_weights(bandwidth, plan.horizon, M)
    p = M - np.arange(M)
    if len(amps) == 0:
        return np.zeros(M, dtype=complex)
    return lam[p] * (poles[None, :] ** p[:, None] @ amps)


def forward_model(taps: Sequence[Tap], bandwidth: float, plan: SamplingPlan):
    """Poles ``z_k`` and weights ``alpha_k`` of the cisoid model of ``taps``."""
    b2 = bandwidth * bandwidth
    T, M, t0 = plan.horizon, plan.count, plan.tau_min
    tau = np.array([t.delay for t in taps], dtype=float)
    nu = np.array([t.doppler for t in taps], dtype=float)
    a = np.array([t.amplitude for t in taps], dtype=complex)
    d = tau - t0
    poles = np.exp(-np.pi * b2 * T * d / M) * np.exp(2j * np.pi * nu * T / M)
    amps = (a * np.exp(-np.pi * b2 * d * d / 2.0)
            * np.exp(-2j * np.pi * nu * T) * np.exp(-2j * np.pi * nu * t0))
    return poles, amps


def pencil_parameter(count: int, order: int) -> int:
    """``floor(M/3)`` clipped to ``[K, M-K]``."""
    return int(min(max(count // 3, order), count - order))


def vandermonde(poles, count: int) -> np.ndarray:
    """The ``count x K`` matrix ``[z_k^m]`` for ``m = 1..count``."""
    poles = np.asarray(poles, dtype=complex)
    m = np.arange(1, count + 1)
    return poles[None, :] ** m[:, None]


def _hankel(y: np.ndarray, L: int) -> np.ndarray:
    M = y.size
    i = np.arange(M - L)[:, None]
    j = np.arange(L + 1)[None, :]
    return y[i + j]


def _svd(a: np.ndarray):
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc


def matrix_pencil(y, order_hint: Optional[int] = None, rank_tol: float = 1e-8) -> CisoidModel:
    """Estimate ``y_m = sum_k alpha_k z_k^m`` (``y`` holds ``y_1..y_M``).

    The order is ``order_hint`` when given, else the number of singular
    values of the Hankel matrix at or above ``rank_tol * sigma_max``.
    """
    y = np.asarray(y, dtype=complex).ravel()
    M = y.size
    if M < 2:
        raise InsufficientSamplesError("need at least two samples")
    if order_hint is not None and order_hint < 0:
        raise InvalidParameterError("order_hint must be nonnegative")
    K = order_hint
    L = pencil_parameter(M, K or 0)
    _, s, vh = _svd(_hankel(y, L))
    if K is None:
        K = int(np.count_nonzero(s >= rank_tol * s[0])) if s[0] > 0 else 0
    if K == 0:
        return CisoidModel(np.zeros(0, complex), np.zeros(0, complex), s)
    if K > M // 2:
        raise InsufficientSamplesError(f"order {K} needs at least {2 * K} samples, got {M}")
    L_k = pencil_parameter(M, K)
    if L_k != L:
        L = L_k
        _, s, vh = _svd(_hankel(y, L))
    if K > min(L, M - L):
        raise InsufficientSamplesError(f"pencil of size {L} cannot hold order {K}")
    # rows of vh span the row space of the Hankel matrix, whose basis is (z_k^j)_j
    basis = vh[:K].T
    v1, v2 = basis[:-1], basis[1:]
    shift, *_ = np.linalg.lstsq(v1, v2, rcond=None)
    try:
        poles = np.linalg.eigvals(shift)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue solve failed: {exc}") from exc
    poles = poles[np.lexsort((np.angle(poles), -np.abs(poles)))]
    amps, *_ = np.linalg.lstsq(vandermonde(poles, M), y, rcond=None)
    return CisoidModel(poles, amps, s)


def _doppler_representative(raw: float, plan: SamplingPlan, strict: bool) -> float:
    lo, hi = plan.nu_window
    period = plan.doppler_period
    nu = lo + math.fmod(raw - lo, period)
    if nu < lo:
        nu += period
    if nu >= hi:
        if strict:
            raise NumericalError(
                f"Doppler {raw:g} has no representative in [{lo:g}, {hi:g}) modulo {period:g}")
        # outside the window: move to the nearer edge, measured on the circle
        nu = hi if (nu - hi) < (lo + period - nu) else lo
        log.warning("Doppler estimate outside window; clamped to %g", nu)
    return nu


def backmap(model: CisoidModel, bandwidth: float, plan: SamplingPlan,
            strict: bool = True) -> list[Tap]:
    """Invert the pole/weight maps to channel taps.

    Pole moduli above ``1 + POLE_SLACK`` are logged and mapped to
    ``tau_min``. With ``strict=False`` a Doppler falling outside the plan's
    window is clamped instead of raising.
    """
    b2 = bandwidth * bandwidth
    T, M, t0 = plan.horizon, plan.count, plan.tau_min
    taps = []
    for z, alpha in zip(model.poles, model.amplitudes):
        mod = abs(z)
        if mod == 0.0:
            raise DegeneratePoleError("pole at the origin has no delay")
        if mod > 1.0 + POLE_SLACK:
            log.warning("pole modulus %.9g exceeds 1; delay set to tau_min", mod)
        tau = t0 - M * math.log(min(mod, 1.0)) / (math.pi * b2 * T)
        nu = _doppler_representative(M / (2 * math.pi * T) * float(np.angle(z)), plan, strict)
        d = tau - t0
        a = (alpha * np.exp(math.pi * b2 * d * d / 2.0)
             * np.exp(2j * math.pi * nu * T) * np.exp(2j * math.pi * nu * t0))
        if a == 0:
            continue
        taps.append(Tap(complex(a), tau, nu))
    return taps


def vandermonde_condition(poles, count: int) -> float:
    """2-norm condition number of the ``count x K`` Vandermonde matrix."""
    poles = np.asarray(poles, dtype=complex)
    K = poles.size
    if K < 1 or count < K:
        raise InvalidParameterError("need K >= 1 and M >= K")
    s = np.linalg.svd(vandermonde(poles, count), compute_uv=False)
    if s[-1] <= s[0] * np.finfo(float).eps * max(count, K):
        return math.inf
    return float(s[0] / s[-1])


def match_taps(truth: Sequence[Tap], estimate: Sequence[Tap],
               delay_scale: float = 1.0, doppler_scale: float = 1.0) -> MatchReport:
    """Greedy nearest-pair assignment in the scaled delay-Doppler metric."""
    if not (delay_scale > 0 and doppler_scale > 0):
        raise InvalidParameterError("scales must be positive")
    cands = []
    for i, t in enumerate(truth):
        for j, e in enumerate(estimate):
            dist = math.hypot((e.delay - t.delay) / delay_scale,
                              (e.doppler - t.doppler) / doppler_scale)
            cands.append((dist, i, j))
    cands.sort()
    used_t, used_e, pairs = set(), set(), []
    for dist, i, j in cands:
        if i in used_t or j in used_e:
            continue
        used_t.add(i)
        used_e.add(j)
        t, e = truth[i], estimate[j]
        pairs.append({
            "truth": i, "estimate": j,
            "delay_err": e.delay - t.delay,
            "doppler_err": e.doppler - t.doppler,
            "amp_err": abs(e.amplitude - t.amplitude),
        })
    pairs.sort(key=lambda p: p["truth"])

    def rmse(key):
        if not pairs:
            return 0.0
        errs = np.abs(np.array([p[key] for p in pairs], dtype=complex))
        return float(np.sqrt(np.mean(errs * errs)))

    return MatchReport(pairs, len(truth) - len(pairs), len(estimate) - len(pairs),
                       rmse("delay_err"), rmse("doppler_err"), rmse("amp_err"))


def estimate_channel(samples, bandwidth: float, plan: SamplingPlan,
                     order_hint: Optional[int] = None, rank_tol: float = 1e-8,
                     strict: bool = True) -> EstimationResult:
    """Samples ``r_0..r_{M-1}`` to taps: normalise, pencil, back-map."""
    y = normalize_samples(samples, bandwidth, plan.horizon, plan.count)
    model = matrix_pencil(y, order_hint, rank_tol)
    taps = backmap(model, bandwidth, plan, strict)
    cond = vandermonde_condition(model.poles, plan.count) if model.order else 1.0
    ynorm = np.linalg.norm(y)
    resid = np.linalg.norm(y - model.synthesize(plan.count))
    fit = float(resid / ynorm) if ynorm > 0 else float(resid)
    return EstimationResult(taps, model, cond, fit)


def noise_rank_tol(snr_db: Optional[float]) -> float:
    """Order-selection threshold: ``1e-8`` noiseless, else ``max(1e-8, 3/sqrt(snr))``."""
    if snr_db is None:
        return 1e-8
    return max(1e-8, 3.0 / math.sqrt(10 ** (snr_db / 10.0)))


def add_awgn(r, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian noise at ``snr_db`` relative to ``||r||^2 / M``."""
    r = np.asarray(r, dtype=complex)
    power = np.vdot(r, r).real / r.size
    sigma2 = power / 10 ** (snr_db / 10.0)
    noise = rng.standard_normal(r.size) + 1j * rng.standard_normal(r.size)
    return r + np.sqrt(sigma2 / 2.0) * noise
