"""Numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is not importable. Both
implementations share signatures and summation order.
"""
import numpy as np


def window_counts(xs, ys, x_starts, y_starts, r, closed=False):
    """Count points inside every axis-aligned window ``[x, x+r) x [y, y+r)``.

    ``xs`` must be sorted ascending (``ys`` permuted alongside). Returns an
    int64 array of shape ``(len(x_starts), len(y_starts))``. With
    ``closed=True`` the windows include their upper edges.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x_starts = np.asarray(x_starts, dtype=np.float64)
    y_starts = np.asarray(y_starts, dtype=np.float64)
    counts = np.zeros((x_starts.size, y_starts.size), dtype=np.int64)
    if xs.size == 0:
        return counts
    upper_side = "right" if closed else "left"
    lo = np.searchsorted(xs, x_starts, side="left")
    hi = np.searchsorted(xs, x_starts + r, side=upper_side)
    y_ends = y_starts + r
    for i in range(x_starts.size):
        if hi[i] <= lo[i]:
            continue
        slab = np.sort(ys[lo[i]:hi[i]])
        counts[i] = (np.searchsorted(slab, y_ends, side=upper_side)
                     - np.searchsorted(slab, y_starts, side="left"))
    return counts


def gaussian_response(times, amps, delays, dopplers, bandwidth, center):
    """Sum of delayed, Doppler-shifted Gaussian pulses at ``times``."""
    times = np.asarray(times, dtype=np.float64)
    out = np.zeros(times.shape, dtype=np.complex128)
    scale = np.sqrt(bandwidth)
    c = -np.pi * bandwidth * bandwidth / 2.0
    for a, tau, nu in zip(amps, delays, dopplers):
        u = times - tau - center
        out += a * (scale * np.exp(c * u * u)) * np.exp(-2j * np.pi * nu * times)
    return out
