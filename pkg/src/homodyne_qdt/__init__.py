"""Simulated homodyne detector tomography with coherent probes.

A detector's POVM is expanded over quadrature projectors and recovered from
coherent-probe histograms by non-negative least squares, jointly with a
per-probe amplitude rescaling that absorbs loss.
"""
__version__ = "0.1.0"
