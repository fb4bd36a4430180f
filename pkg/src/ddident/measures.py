"""Discrete spreading measures, lattices and Beurling-density estimates.

Windows are the half-open squares ``[x, x + r) x [y, y + r)``; translate
search is grid sampled. Exact densities of periodic residue patterns are
obtained by enumerating one period.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _backend
from .errors import InvalidParameterError

#: relative snap tolerance for lattice membership and support alignment
SNAP_RTOL = 1e-9


def _snap_close(a: float, b: float) -> bool:
    return abs(a - b) <= SNAP_RTOL * max(abs(a), abs(b), 1.0)


@dataclass(frozen=True)
class Lattice:
    """The lattice ``A Z^2``; rows of ``generator`` carry delay and Doppler units."""

    generator: tuple

    def __init__(self, generator):
        a = np.asarray(generator, dtype=float)
        if a.shape != (2, 2) or not np.all(np.isfinite(a)):
            raise InvalidParameterError("lattice generator must be a finite 2x2 matrix")
        if np.linalg.det(a) == 0.0:
            raise InvalidParameterError("lattice generator is singular")
        object.__setattr__(self, "generator", tuple(tuple(float(v) for v in row) for row in a))

    @classmethod
    def identity(cls) -> "Lattice":
        return cls([[1.0, 0.0], [0.0, 1.0]])

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.generator, dtype=float)

    @property
    def det(self) -> float:
        (a, b), (c, d) = self.generator
        return a * d - b * c

    def density(self) -> float:
        return 1.0 / abs(self.det)

    def point(self, index) -> tuple[float, float]:
        n = np.asarray(index, dtype=float)
        p = self.matrix @ n
        return float(p[0]), float(p[1])

    def points(self, indices) -> np.ndarray:
        """Map an ``(N, 2)`` array of integer indices to ``(N, 2)`` coordinates."""
        idx = np.asarray(indices, dtype=float).reshape(-1, 2)
        return idx @ self.matrix.T

    def index_of(self, delay: float, doppler: float) -> Optional[tuple[int, int]]:
        """Integer index of ``(delay, doppler)`` or ``None`` when off-lattice."""
        n = np.linalg.solve(self.matrix, np.array([delay, doppler], dtype=float))
        k = np.rint(n)
        p = self.matrix @ k
        if _snap_close(p[0], delay) and _snap_close(p[1], doppler):
            return int(k[0]), int(k[1])
        return None

    def points_in_box(self, lo, hi) -> np.ndarray:
        """All lattice points with ``lo <= p <= hi`` componentwise, row-major by index."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
        idx_corners = np.linalg.solve(self.matrix, corners.T).T
        kmin = np.floor(idx_corners.min(axis=0)).astype(int) - 1
        kmax = np.ceil(idx_corners.max(axis=0)).astype(int) + 1
        i, j = np.meshgrid(np.arange(kmin[0], kmax[0] + 1),
                           np.arange(kmin[1], kmax[1] + 1), indexing="ij")
        idx = np.column_stack([i.ravel(), j.ravel()])
        pts = self.points(idx)
        tol = SNAP_RTOL * np.maximum(1.0, np.abs(pts))
        keep = np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)
        return pts[keep]


@dataclass(frozen=True)
class Tap:
    amplitude: complex
    delay: float
    doppler: float

    def __post_init__(self):
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        object.__setattr__(self, "delay", float(self.delay))
        object.__setattr__(self, "doppler", float(self.doppler))
        if self.amplitude == 0:
            raise InvalidParameterError("zero-amplitude taps are not part of the support")
        if not (math.isfinite(self.delay) and math.isfinite(self.doppler)
                and math.isfinite(self.amplitude.real) and math.isfinite(self.amplitude.imag)):
            raise InvalidParameterError("tap fields must be finite")


@dataclass(frozen=True)
class ChannelSpec:
    """Finite discrete spreading measure: a list of taps, optionally on a lattice."""

    taps: tuple = ()
    lattice: Optional[Lattice] = None

    def __post_init__(self):
        taps = tuple(self.taps)
        object.__setattr__(self, "taps", taps)
        seen = set()
        for tap in taps:
            key = self._key(tap)
            if key is None:
                raise InvalidParameterError(
                    f"tap at ({tap.delay!r}, {tap.doppler!r}) is not on the lattice")
            if key in seen:
                raise InvalidParameterError(
                    f"duplicate support point ({tap.delay!r}, {tap.doppler!r})")
            seen.add(key)

    def _key(self, tap: Tap):
        if self.lattice is not None:
            return self.lattice.index_of(tap.delay, tap.doppler)
        return (tap.delay, tap.doppler)

    def __len__(self):
        return len(self.taps)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([t.amplitude for t in self.taps], dtype=complex)

    @property
    def delays(self) -> np.ndarray:
        return np.array([t.delay for t in self.taps], dtype=float)

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([t.doppler for t in self.taps], dtype=float)

    def support(self) -> np.ndarray:
        return np.column_stack([self.delays, self.dopplers]) if self.taps else np.empty((0, 2))

    @classmethod
    def from_arrays(cls, amplitudes, delays, dopplers, lattice=None) -> "ChannelSpec":
        taps = tuple(Tap(a, t, n) for a, t, n in zip(amplitudes, delays, dopplers) if a != 0)
        return cls(taps, lattice)


@dataclass(frozen=True)
class ResiduePattern:
    """Periodic subset of Z^2 built from diagonal residue classes.

    Single level: the union over ``r`` in ``residues`` of ``(m Z + r)^2``.
    Two level: the union over ``r`` in ``residues`` and ``s`` in
    ``outer_residues`` of ``(m m' Z + m s + r)^2``.
    """

    modulus: int
    residues: frozenset
    outer_modulus: Optional[int] = None
    outer_residues: Optional[frozenset] = None

    def __post_init__(self):
        m = int(self.modulus)
        res = frozenset(int(r) for r in self.residues)
        if m <= 0:
            raise InvalidParameterError("modulus must be a positive integer")
        if not res or any(r < 0 or r >= m for r in res):
            raise InvalidParameterError(f"residues must be nonempty and lie in [0, {m})")
        object.__setattr__(self, "modulus", m)
        object.__setattr__(self, "residues", res)
        if (self.outer_modulus is None) != (self.outer_residues is None):
            raise InvalidParameterError("outer_modulus and outer_residues go together")
        if self.outer_modulus is not None:
            mo = int(self.outer_modulus)
            ores = frozenset(int(s) for s in self.outer_residues)
            if mo <= 0:
                raise InvalidParameterError("outer_modulus must be a positive integer")
            if not ores or any(s < 0 or s >= mo for s in ores):
                raise InvalidParameterError(f"outer_residues must be nonempty and lie in [0, {mo})")
            object.__setattr__(self, "outer_modulus", mo)
            object.__setattr__(self, "outer_residues", ores)

    @property
    def period(self) -> int:
        return self.modulus * (self.outer_modulus or 1)

    def contains(self, i, j):
        """Vectorised membership test for integer coordinates."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        p = self.period
        ri = np.mod(i, p)
        same = ri == np.mod(j, p)
        inner = np.isin(np.mod(ri, self.modulus), sorted(self.residues))
        if self.outer_modulus is None:
            return same & inner
        outer = np.isin(ri // self.modulus, sorted(self.outer_residues))
        return same & inner & outer

    def to_dict(self) -> dict:
        d = {"modulus": self.modulus, "residues": sorted(self.residues)}
        if self.outer_modulus is not None:
            d["outer_modulus"] = self.outer_modulus
            d["outer_residues"] = sorted(self.outer_residues)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ResiduePattern":
        return cls(d["modulus"], frozenset(d["residues"]), d.get("outer_modulus"),
                   None if d.get("outer_residues") is None else frozenset(d["outer_residues"]))


@dataclass(frozen=True)
class DensityReport:
    radii: tuple
    n_minus: tuple
    n_plus: tuple
    lower_estimate: float
    upper_estimate: float

    def __post_init__(self):
        if any(lo > hi for lo, hi in zip(self.n_minus, self.n_plus)):
            raise InvalidParameterError("n_minus exceeds n_plus")

    def to_dict(self) -> dict:
        return {
            "radii": list(self.radii),
            "n_minus": list(self.n_minus),
            "n_plus": list(self.n_plus),
            "lower_estimate": self.lower_estimate,
            "upper_estimate": self.upper_estimate,
        }


class Verdict(enum.Enum):
    IDENTIFIABLE = "Identifiable"
    NOT_IDENTIFIABLE = "NotIdentifiable"
    BOUNDARY = "Boundary"
    HYPOTHESIS_VIOLATED = "HypothesisViolated"


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return np.empty((0, 2))
    pts = pts.reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise InvalidParameterError("points must be finite")
    return pts


def _axis_starts(lo: float, hi: float, r: float, step: float, closed: bool):
    """Translate origins along one axis: all (for n+) and interior (for n-)."""
    n_all = int(math.floor((hi - (lo - r)) / step + 1e-9))
    all_starts = (lo - r) + step * np.arange(n_all + 1)
    if hi - lo >= r:
        n_in = int(math.floor((hi - r - lo) / step + 1e-9))
        inner = lo + step * np.arange(n_in + 1)
    else:
        # extent shorter than the window: keep the windows that cover it
        k = np.arange(int(math.floor((lo - (hi - r)) / step)) + 1)
        inner = lo - step * k
        inner = inner[inner >= hi - r] if closed else inner[inner > hi - r]
        if inner.size == 0:
            inner = np.array([lo])
    return all_starts, inner


def windowed_counts(points, r: float, grid_step: Optional[float] = None,
                    closed: bool = False) -> tuple[int, int]:
    """Smallest and largest number of points in a translate of ``[0, r)^2``.

    Translates are sampled on a grid of pitch ``grid_step`` (default ``r/64``).
    ``n_plus`` scans the bounding box of ``points`` inflated by ``r``;
    ``n_minus`` only scans windows lying inside the bounding box (along an
    axis shorter than ``r``, windows covering the whole extent are used
    instead). ``closed=True`` counts points on the upper window edges too.
    """
    if not r > 0:
        raise InvalidParameterError("window radius r must be positive")
    if grid_step is None:
        grid_step = r / 64.0
    if not grid_step > 0:
        raise InvalidParameterError("grid_step must be positive")
    pts = _as_points(points)
    if pts.shape[0] == 0:
        return 0, 0
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    xs = np.ascontiguousarray(pts[order, 0])
    ys = np.ascontiguousarray(pts[order, 1])
    (xlo, ylo), (xhi, yhi) = pts.min(axis=0), pts.max(axis=0)
    x_all, x_in = _axis_starts(xlo, xhi, r, grid_step, closed)
    y_all, y_in = _axis_starts(ylo, yhi, r, grid_step, closed)
    n_plus = int(_backend.window_counts(xs, ys, x_all, y_all, float(r), closed).max())
    n_minus = int(_backend.window_counts(xs, ys, x_in, y_in, float(r), closed).min())
    return n_minus, n_plus


def density_estimates(points, radii: Sequence[float],
                      grid_step: Optional[float] = None) -> DensityReport:
    """Per-radius window counts and last-radius density estimates."""
    radii = [float(r) for r in radii]
    if not radii:
        raise InvalidParameterError("radii must be nonempty")
    if any(r <= 0 for r in radii) or any(b <= a for a, b in zip(radii, radii[1:])):
        raise InvalidParameterError("radii must be positive and strictly increasing")
    pts = _as_points(points)
    n_minus, n_plus = [], []
    for r in radii:
        lo, hi = windowed_counts(pts, r, grid_step)
        n_minus.append(lo)
        n_plus.append(hi)
    r_max = radii[-1]
    return DensityReport(tuple(radii), tuple(n_minus), tuple(n_plus),
                         n_minus[-1] / r_max ** 2, n_plus[-1] / r_max ** 2)


def residue_pattern_points(pattern: ResiduePattern, lattice: Lattice, box: int) -> np.ndarray:
    """Points of ``A * pattern`` whose integer index lies in ``[-box, box]^2``."""
    box = int(box)
    if box < pattern.modulus:
        raise InvalidParameterError("box half-width must be at least the pattern modulus")
    k = np.arange(-box, box + 1)
    i, j = np.meshgrid(k, k, indexing="ij")
    mask = pattern.contains(i, j)
    idx = np.column_stack([i[mask], j[mask]])
    return lattice.points(idx)


def pattern_index_density(pattern: ResiduePattern) -> Fraction:
    """Fraction of Z^2 covered by the pattern, counted over one full period."""
    p = pattern.period
    cols = np.arange(p)
    count = 0
    for i in range(p):
        count += int(np.count_nonzero(pattern.contains(i, cols)))
    return Fraction(count, p * p)


def exact_pattern_density(pattern: ResiduePattern, lattice: Lattice) -> float:
    """Uniform density of ``A * pattern``: one-period count over ``m^2``, times ``1/|det A|``."""
    frac = pattern_index_density(pattern)
    return float(frac / Fraction(abs(lattice.det)))


def complementary_pattern(pattern: ResiduePattern, outer_modulus: int,
                          outer_residues: Iterable[int]) -> ResiduePattern:
    """Two-level pattern on the residues mod ``m`` not used by ``pattern``.

    The result is disjoint from ``pattern``.
    """
    if pattern.outer_modulus is not None:
        raise InvalidParameterError("complement is defined for single-level patterns")
    rest = frozenset(range(pattern.modulus)) - pattern.residues
    if not rest:
        raise InvalidParameterError("pattern uses every residue; complement is empty")
    return ResiduePattern(pattern.modulus, rest, outer_modulus, frozenset(outer_residues))


@dataclass(frozen=True)
class AdversarialPair:
    h_pattern: ResiduePattern
    k_pattern: ResiduePattern
    q: Fraction
    q_outer: Fraction
    nominal_density: float = field(default=0.0)


def adversarial_patterns(alpha: float, lattice: Lattice, n: int) -> AdversarialPair:
    """Disjoint pattern pair from the non-identifiability construction.

    ``q = l/m`` with ``alpha/d - 1/n <= q <= alpha/d`` and
    ``q' = l'/m'`` with ``(alpha - 1/n)/((1-q) d) <= q' <= alpha/((1-q) d)``,
    where ``d`` is the lattice density. ``nominal_density`` is
    ``q d + q' (1-q) d``, the value asserted for the union; the counted
    density of the generated sets is available from
    :func:`exact_pattern_density`.
    """
    if not alpha > 0:
        raise InvalidParameterError("alpha must be positive")
    n = int(n)
    d = lattice.density()
    if d < 2 * alpha:
        raise InvalidParameterError("construction needs lattice density >= 2 alpha")
    m = n
    ell = int(math.floor(m * alpha / d))
    if ell <= 0 or 2 * ell > m:
        raise InvalidParameterError(f"n={n} too small for alpha/d={alpha / d:g}")
    q = Fraction(ell, m)
    scale = float((1 - q)) * d
    m_out = int(math.ceil(n * scale))
    ell_out = min(int(math.floor(m_out * alpha / scale)), m_out)
    if ell_out <= 0:
        raise InvalidParameterError(f"n={n} too small for the outer pattern")
    h = ResiduePattern(m, frozenset(range(ell)))
    k = complementary_pattern(h, m_out, range(ell_out))
    q_out = Fraction(ell_out, m_out)
    return AdversarialPair(h, k, q, q_out, float(q) * d + float(q_out) * float(1 - q) * d)


def identifiability_verdict(alpha: float, lattice: Lattice) -> Verdict:
    """Identifiability of operators whose support has upper density at most ``alpha``."""
    if not alpha > 0:
        raise InvalidParameterError("alpha must be positive")
    # density >= 2 alpha  <=>  1 >= 2 alpha |det|, avoids a reciprocal
    if 2.0 * alpha * abs(lattice.det) > 1.0:
        return Verdict.HYPOTHESIS_VIOLATED
    if alpha < 0.5:
        return Verdict.IDENTIFIABLE
    if alpha > 0.5:
        return Verdict.NOT_IDENTIFIABLE
    return Verdict.BOUNDARY


def read_points_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = [(float(row["tau"]), float(row["nu"])) for row in reader]
    return np.array(rows, dtype=float).reshape(-1, 2)


def write_points_csv(path, points) -> None:
    pts = _as_points(points)
    with open(path, "w", newline="") as fh:
        fh.write("tau,nu\n")
        for tau, nu in pts:
            fh.write(f"{float(tau)!r},{float(nu)!r}\n")
