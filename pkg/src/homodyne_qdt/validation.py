"""Closed-loop validation of a reconstructed POVM on nonclassical states."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import DetectorPovm, born_predict
from .reconstruction import NoValidProbeError, ReconstructionResult, weighted_gamma_bar
from .simulator import draw_samples, histogram
from .states import (
    GridError,
    NoiseParams,
    QuadraturePdf,
    StateModel,
    apply_loss,
    state_pdf,
    state_support,
    QuadratureGrid,
    state_to_dict,
)

_FINE_SPACING = 0.01


def rescale_channel(gamma: float) -> NoiseParams | None:
    """Pure-loss channel that multiplies every coherent amplitude by ``gamma``.

    A beam splitter of transmissivity ``gamma^2`` maps ``|alpha>`` to
    ``|gamma alpha>``, so it is the unique quantum channel consistent with
    the fitted amplitude rescaling. ``None`` for ``gamma >= 1``.
    """
    if gamma >= 1.0:
        return None
    return NoiseParams(max(gamma, 1e-6) ** 2, 0.0)


def _ideal_on_basis(state: StateModel, phi: float, basis: QuadratureGrid, gamma: float):
    channel = rescale_channel(gamma)
    if channel is None:
        # the basis window may clip the state's tails; the detector only sees the window
        return state_pdf(state, phi, basis, tau=None)
    lo, hi = state_support(state, phi)
    lo, hi = min(lo, basis.x_min), max(hi, basis.x_max)
    fine = QuadratureGrid(lo, hi, int(np.ceil((hi - lo) / _FINE_SPACING)) + 1)
    return apply_loss(state_pdf(state, phi, fine), channel, basis)


def predict_state_response(povm: DetectorPovm, state: StateModel, phi: float = 0.0,
                           gamma: float | None = None) -> QuadraturePdf:
    """Outcome density the reconstructed detector predicts for ``state``.

    The fitted amplitude rescaling (``gamma``, default the weighted mean of
    the POVM's scale factors, else 1) acts on the state as a pure-loss
    channel before the Born rule with ``g``. For coherent probes this is
    exactly the rescaled model that was fitted.
    """
    if gamma is None:
        gamma = 1.0
        if povm.scale is not None:
            try:
                gamma = weighted_gamma_bar(povm.scale)[0]
            except NoValidProbeError:
                pass
    p = _ideal_on_basis(state, phi, povm.g.basis_grid, gamma)
    return born_predict(povm.g, p)


def score(predicted: QuadraturePdf, measured: QuadraturePdf) -> tuple[float, float]:
    """Total variation distance and Bhattacharyya coefficient on a shared grid."""
    if predicted.grid != measured.grid:
        raise GridError("score needs both pdfs on the same grid")
    dx = predicted.grid.spacing
    p, q = predicted.values, measured.values
    tvd = 0.5 * float(np.sum(np.abs(p - q))) * dx
    bc = float(np.sum(np.sqrt(p * q))) * dx
    return float(np.clip(tvd, 0.0, 1.0)), float(np.clip(bc, 0.0, 1.0))


def efficiency_estimate(result: ReconstructionResult) -> tuple[float, float]:
    """``eta = gamma_bar^2`` with first-order propagated uncertainty."""
    g, s = result.gamma_bar, result.gamma_bar_sigma
    if not np.isfinite(g):
        raise ValueError("gamma_bar is not finite")
    return g * g, 2.0 * g * s


@dataclass(frozen=True, eq=False)
class ValidationReport:
    state: StateModel
    phase: float
    predicted: QuadraturePdf
    measured: QuadraturePdf
    tvd: float
    bhattacharyya: float
    band_low: np.ndarray
    band_high: np.ndarray
    out_of_range: float = 0.0

    def to_dict(self) -> dict:
        return {
            "state": state_to_dict(self.state),
            "phase": self.phase,
            "grid": self.predicted.grid.to_dict(),
            "predicted": self.predicted.values.tolist(),
            "measured": self.measured.values.tolist(),
            "tvd": self.tvd,
            "bhattacharyya": self.bhattacharyya,
            "gamma_band": {"low": self.band_low.tolist(), "high": self.band_high.tolist()},
            "out_of_range": self.out_of_range,
        }


def validate_state(result: ReconstructionResult, state: StateModel, truth: NoiseParams,
                   n_samples: int, seed, phi: float = 0.0) -> ValidationReport:
    """Predict ``state`` through the reconstruction and score it against a fresh measurement."""
    povm = result.povm
    gbar, gsig = result.gamma_bar, result.gamma_bar_sigma
    predicted = predict_state_response(povm, state, phi, gbar)
    if np.isfinite(gsig) and gsig > 0:
        lo = predict_state_response(povm, state, phi, gbar - gsig).values
        hi = predict_state_response(povm, state, phi, gbar + gsig).values
        band_low = np.minimum.reduce([lo, hi, predicted.values])
        band_high = np.maximum.reduce([lo, hi, predicted.values])
    else:
        band_low = band_high = predicted.values.copy()
    x = draw_samples(state, phi, truth, n_samples, seed)
    measured, outside = histogram(x, povm.g.outcome_grid)
    tvd, bc = score(predicted, measured)
    return ValidationReport(state, phi, predicted, measured, tvd, bc, band_low, band_high, outside)
