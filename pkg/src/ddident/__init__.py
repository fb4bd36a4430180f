"""Delay-Doppler channel identification with Gaussian probes."""
__version__ = "0.1.0"
