"""Kernel selection: compiled extension when importable, numpy otherwise."""
try:
    from ._kernels import gaussian_response, window_counts
    BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on build
    from ._fallback import gaussian_response, window_counts
    BACKEND = "python"

__all__ = ["BACKEND", "gaussian_response", "window_counts"]
