"""Spectral laboratory for observability-based state reconstruction of 1D waves."""
