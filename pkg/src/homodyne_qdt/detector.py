"""Detector operator measure expanded over quadrature projectors.

Each outcome ``x_j`` owns a POVM element ``Pi_j = sum_k g[j, k] |y_k><y_k|``.
Entries carry the basis measure: a detector that reports the quadrature
exactly, on matched grids, has ``g = identity / dy``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .numerics import golden_section_max
from .states import (
    TAU,
    VACUUM_VARIANCE,
    GridError,
    NoiseParams,
    QuadratureGrid,
    QuadraturePdf,
    check_capture,
    gaussian_capture,
)

_VACUUM_PEAK = np.sqrt(2.0 / np.pi)


@dataclass(frozen=True, eq=False)
class GMatrix:
    outcome_grid: QuadratureGrid
    basis_grid: QuadratureGrid
    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        shape = (self.outcome_grid.n_points, self.basis_grid.n_points)
        if e.shape != shape:
            raise GridError(f"entries have shape {e.shape}, grids need {shape}")
        if not np.all(np.isfinite(e)):
            raise ValueError("g entries must be finite")
        if np.any(e < 0):
            raise ValueError("g entries must be non-negative")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def is_square(self) -> bool:
        return self.outcome_grid == self.basis_grid

    def column_sums(self) -> np.ndarray:
        """``sum_j g[j, k] dx``; equals 1 where the POVM resolves the identity."""
        return self.entries.sum(axis=0) * self.outcome_grid.spacing

    def to_dict(self) -> dict:
        return {
            "outcome_grid": self.outcome_grid.to_dict(),
            "basis_grid": self.basis_grid.to_dict(),
            "entries": self.entries.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GMatrix":
        out = QuadratureGrid.from_dict(d["outcome_grid"])
        basis = QuadratureGrid.from_dict(d["basis_grid"])
        entries = np.asarray(d["entries"], dtype=float).reshape(out.n_points, basis.n_points)
        return cls(out, basis, entries)


def identity_g(grid: QuadratureGrid) -> GMatrix:
    """The ideal detector on matched grids."""
    return GMatrix(grid, grid, np.eye(grid.n_points) / grid.spacing)


@dataclass(frozen=True, eq=False)
class ScaleFactors:
    gamma: np.ndarray
    sigma_gamma: np.ndarray
    pinned: np.ndarray

    def __post_init__(self):
        gamma = np.array(self.gamma, dtype=float)
        sigma = np.array(self.sigma_gamma, dtype=float)
        pinned = np.array(self.pinned, dtype=bool)
        if not gamma.shape == sigma.shape == pinned.shape:
            raise ValueError("gamma, sigma_gamma and pinned must have equal length")
        if np.any(gamma[pinned] != 1.0):
            raise ValueError("pinned scale factors must equal 1")
        if np.any(sigma < 0):
            raise ValueError("uncertainties must be non-negative")
        for a in (gamma, sigma, pinned):
            a.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "sigma_gamma", sigma)
        object.__setattr__(self, "pinned", pinned)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma.tolist(),
            # infinite uncertainty is written as null
            "sigma_gamma": [float(s) if np.isfinite(s) else None for s in self.sigma_gamma],
            "pinned": self.pinned.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleFactors":
        sigma = [np.inf if s is None else s for s in d["sigma_gamma"]]
        return cls(d["gamma"], sigma, d["pinned"])


@dataclass(frozen=True, eq=False)
class DetectorPovm:
    g: GMatrix
    scale: ScaleFactors | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = self.g.to_dict()
        d["scale"] = None if self.scale is None else self.scale.to_dict()
        d["metadata"] = dict(self.metadata)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorPovm":
        scale = None if d.get("scale") is None else ScaleFactors.from_dict(d["scale"])
        return cls(GMatrix.from_dict(d), scale, dict(d.get("metadata", {})))


def config_hash(obj) -> str:
    """Stable short hash of a JSON-serialisable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# -- forward maps -----------------------------------------------------------

def coherent_kernel(y: np.ndarray, mu) -> np.ndarray:
    """``sqrt(2/pi) exp(-2 (y - mu)^2)``, broadcasting over ``mu``."""
    return _VACUUM_PEAK * np.exp(-2.0 * (y - mu) ** 2)


def q_response(g: GMatrix, mu: float, tau: float | None = TAU) -> QuadraturePdf:
    """Outcome density the detector produces for a coherent probe of projected mean ``mu``."""
    basis = g.basis_grid
    check_capture(basis, gaussian_capture(basis, mu, VACUUM_VARIANCE), tau, "probe")
    kern = coherent_kernel(basis.points, mu) * basis.spacing
    return QuadraturePdf(g.outcome_grid, np.maximum(g.entries @ kern, 0.0))


def born_predict(g: GMatrix, p_state: QuadraturePdf) -> QuadraturePdf:
    """Outcome density for a state whose ideal quadrature marginal is ``p_state``."""
    if p_state.grid != g.basis_grid:
        raise GridError("state pdf must live on the basis grid of g")
    vals = g.entries @ p_state.values * g.basis_grid.spacing
    return QuadraturePdf(g.outcome_grid, np.maximum(vals, 0.0))


def ground_truth_g(noise: NoiseParams, outcome_grid: QuadratureGrid,
                   basis_grid: QuadratureGrid) -> GMatrix:
    """POVM of a lossy, noisy homodyne detector.

    Row ``j`` is the outcome bin around ``x_j`` integrated against the normal
    kernel ``N(x; sqrt(eta) y_k, (1 - eta)/4 + v_el)`` and divided by the bin
    width. Bin integration keeps the noiseless limit well defined.
    """
    x_edges = outcome_grid.edges
    dx = outcome_grid.spacing
    centres = np.sqrt(noise.eta) * basis_grid.points
    s2 = noise.kernel_variance
    if s2 == 0.0:
        cdf = (x_edges[:, None] >= centres[None, :]).astype(float)
    else:
        cdf = ndtr((x_edges[:, None] - centres[None, :]) / np.sqrt(s2))
    return GMatrix(outcome_grid, basis_grid, np.maximum(np.diff(cdf, axis=0), 0.0) / dx)


# -- figures of merit -------------------------------------------------------

def delta_figure(g: GMatrix) -> float:
    """Trace of ``g`` in units of the ideal diagonal value ``1/dy``.

    Equals the matrix dimension for a perfect reconstruction and drops as
    diagonal elements are voided.
    """
    if not g.is_square:
        raise GridError("delta figure needs matched outcome and basis grids")
    return float(np.trace(g.entries) * g.basis_grid.spacing)


def overlap_f(y: float, sigma: float) -> float:
    """Scaled overlap ``sqrt(pi) * int p_sigma(x, x0) p_sigma(x, x0 + y) dx``."""
    if not sigma > 0:
        raise ValueError(f"sigma={sigma} must be positive")
    return float(np.exp(-(y**2) / (4 * sigma**2)) / (2 * sigma))


def overlap_f_numeric(y: float, sigma: float) -> float:
    """Same overlap by adaptive quadrature, as a cross-check on :func:`overlap_f`."""
    if not sigma > 0:
        raise ValueError(f"sigma={sigma} must be positive")
    norm = 1.0 / (sigma * np.sqrt(2 * np.pi))

    def integrand(x):
        return norm**2 * np.exp(-(x**2) / (2 * sigma**2) - (x - y) ** 2 / (2 * sigma**2))

    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)
    return float(np.sqrt(np.pi) * val)


def overlap_argmax(sigma: float, xtol: float = 1e-7) -> float:
    """Spacing that maximises ``y * f(y)``; analytically ``sigma * sqrt(2)``."""
    if not sigma > 0:
        raise ValueError(f"sigma={sigma} must be positive")
    y, _ = golden_section_max(lambda y: y * overlap_f(y, sigma), 0.0, 10.0 * sigma, xtol=xtol)
    return y


@dataclass(frozen=True)
class RowSpread:
    center: float
    rms_width: float
    flagged: bool = False


def spread_metrics(g: GMatrix) -> list[RowSpread]:
    """First moment and rms width of every row of ``g`` over the basis grid.

    Rows with zero total weight are flagged and carry NaN moments.
    """
    y = g.basis_grid.points
    out = []
    for row in g.entries:
        total = row.sum()
        if total <= 0:
            out.append(RowSpread(float("nan"), float("nan"), True))
            continue
        c = float(row @ y / total)
        width = float(np.sqrt(max(row @ (y - c) ** 2 / total, 0.0)))
        out.append(RowSpread(c, width))
    return out
