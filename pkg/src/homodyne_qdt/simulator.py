"""Monte-Carlo homodyne records, histograms, probe sets and SPDC calibration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .states import (
    GridError,
    Coherent,
    NoiseParams,
    QuadratureGrid,
    QuadraturePdf,
    StateModel,
    projected_mean,
    state_pdf,
    state_support,
)

#: Spacing of the tabulated inverse CDF used for non-Gaussian states.
CDF_SPACING = 1e-3
DEFAULT_SAMPLES = 100_000

PROBE_SET_KINDS = ("full_109", "reduced_25", "minimal_9", "custom")
_N_AMPLITUDES = 12
_MAX_AMPLITUDE = 3.0
_N_PHASES = 9


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProbeSpec:
    amplitude_true: float
    phase: float
    n_samples: int = DEFAULT_SAMPLES

    def __post_init__(self):
        if not (np.isfinite(self.amplitude_true) and self.amplitude_true >= 0):
            raise ValueError(f"amplitude {self.amplitude_true} must be finite and >= 0")
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ValueError(f"n_samples={self.n_samples} must be a positive integer")

    @property
    def alpha(self) -> complex:
        return self.amplitude_true * np.exp(1j * self.phase)


@dataclass(frozen=True)
class ProbeRecord:
    spec: ProbeSpec
    amplitude_calibrated: float
    calibration_sigma: float
    histogram: QuadraturePdf
    out_of_range: float = 0.0

    @property
    def projected_amplitude(self) -> float:
        """Signed calibrated amplitude along the measured quadrature."""
        return self.amplitude_calibrated * float(np.cos(self.spec.phase))


@dataclass(frozen=True)
class SpdcConfig:
    spontaneous_rate: float = 1e4
    acquisition_time: float = 100.0
    seed: int | None = None

    def __post_init__(self):
        if not (self.spontaneous_rate > 0 and self.acquisition_time > 0):
            raise ValueError("spontaneous rate and acquisition time must be positive")

    def to_dict(self) -> dict:
        return {
            "spontaneous_rate": self.spontaneous_rate,
            "acquisition_time": self.acquisition_time,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpdcConfig":
        seed = d.get("seed")
        return cls(float(d["spontaneous_rate"]), float(d["acquisition_time"]),
                   None if seed is None else int(seed))


def probe_rng(master_seed: int, probe_index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one probe, derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, probe_index, stream]))


# -- sampling ---------------------------------------------------------------

def _ideal_draws(state: StateModel, phi: float, n: int, rng) -> np.ndarray:
    if isinstance(state, Coherent):
        return rng.normal(projected_mean(state.alpha, phi), 0.5, size=n)
    lo, hi = state_support(state, phi)
    grid = QuadratureGrid(lo, hi, int(round((hi - lo) / CDF_SPACING)) + 1)
    pdf = state_pdf(state, phi, grid).values
    # cumulative trapezoid, then linear interpolation of the inverse
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) / 2) * grid.spacing])
    cdf /= cdf[-1]
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return np.interp(rng.random(n), cdf[keep], grid.points[keep])


def draw_samples(state: StateModel, phi: float, noise: NoiseParams, n: int,
                 seed) -> np.ndarray:
    """Homodyne outcomes ``sqrt(eta) y + sqrt(1 - eta) v + e`` for ``n`` shots.

    ``seed`` may be an integer or a ``numpy.random.Generator``.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    y = _ideal_draws(state, phi, n, rng)
    x = np.sqrt(noise.eta) * y
    if noise.eta < 1.0:
        x += rng.normal(0.0, np.sqrt((1.0 - noise.eta) / 4.0), size=n)
    if noise.v_el > 0.0:
        x += rng.normal(0.0, np.sqrt(noise.v_el), size=n)
    return x


def histogram(samples, grid: QuadratureGrid) -> tuple[QuadraturePdf, float]:
    """Empirical density on ``grid`` and the fraction of samples outside it.

    Bins are centred on the grid points. Counts are divided by the total
    number of samples, so the density integrates to the in-range fraction.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ValueError("no samples")
    counts, _ = np.histogram(samples, bins=grid.edges)
    inside = int(counts.sum())
    if inside == 0:
        raise GridError("no sample falls inside the histogram range")
    density = counts / (samples.size * grid.spacing)
    return QuadraturePdf(grid, density), 1.0 - inside / samples.size


# -- probe sets ---------------------------------------------------------------

def _amplitudes() -> np.ndarray:
    return _MAX_AMPLITUDE * np.arange(1, _N_AMPLITUDES + 1) / _N_AMPLITUDES


def _signed(values, n_samples) -> list[ProbeSpec]:
    return [ProbeSpec(abs(float(v)), 0.0 if v >= 0 else float(np.pi), n_samples) for v in values]


def build_probe_set(kind: str, amplitudes=None, phases=None,
                    n_samples: int = DEFAULT_SAMPLES) -> list[ProbeSpec]:
    """Coherent probe sets.

    ``full_109``: 12 amplitudes on (0, 3] at 9 phases spanning [0, pi], plus
    the vacuum. ``reduced_25``: the 12 amplitudes at phases 0 and pi, plus
    the vacuum. ``minimal_9``: 9 real amplitudes from -3 to 3 (spacing 0.75);
    negative values are realised at phase pi. ``custom``: every amplitude at
    every phase.
    """
    if kind == "full_109":
        specs = [ProbeSpec(0.0, 0.0, n_samples)]
        for a in _amplitudes():
            specs += [ProbeSpec(float(a), float(p), n_samples)
                      for p in np.linspace(0.0, np.pi, _N_PHASES)]
        return specs
    if kind == "reduced_25":
        a = _amplitudes()
        return _signed(np.concatenate([[0.0], a, -a]), n_samples)
    if kind == "minimal_9":
        return _signed(np.linspace(-_MAX_AMPLITUDE, _MAX_AMPLITUDE, 9), n_samples)
    if kind == "custom":
        amplitudes = [] if amplitudes is None else list(amplitudes)
        phases = [0.0] if phases is None else list(phases)
        if len(amplitudes) < 1 or len(phases) < 1:
            raise ValueError("custom probe set needs at least one amplitude and one phase")
        return [ProbeSpec(float(a), float(p), n_samples) for a in amplitudes for p in phases]
    raise ValueError(f"unknown probe set {kind!r}; expected one of {PROBE_SET_KINDS}")


def equidistant_probe_set(spacing: float, max_amplitude: float = _MAX_AMPLITUDE,
                          n_samples: int = DEFAULT_SAMPLES) -> list[ProbeSpec]:
    """Real-axis probes ``k * spacing`` for all integers ``k`` with ``|k spacing| <= max``."""
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    k = int(np.floor(max_amplitude / spacing + 1e-9))
    return _signed(spacing * np.arange(-k, k + 1), n_samples)


# -- calibration ---------------------------------------------------------------

def calibration_from_counts(n_stim: float, n_spont: float) -> tuple[float, float]:
    """Amplitude and first-order uncertainty from stimulated/spontaneous counts."""
    if n_spont <= 0:
        raise CalibrationError("no spontaneous counts; ratio undefined")
    r = n_stim / n_spont
    sigma_r = r * np.sqrt((1.0 / n_stim if n_stim > 0 else 0.0) + 1.0 / n_spont)
    a2 = max(0.0, r - 1.0)
    amp = float(np.sqrt(a2))
    # d sqrt(r - 1)/dr diverges at r = 1; fall back to the amplitude scale sqrt(sigma_r)
    sigma = float(sigma_r / (2 * amp)) if amp > np.sqrt(sigma_r) else float(np.sqrt(sigma_r))
    return amp, sigma


def simulate_spdc_calibration(amplitude_true: float, cfg: SpdcConfig,
                              seed=None) -> tuple[float, float]:
    """Standard-free amplitude calibration from Poisson stimulated/spontaneous counts.

    Stimulated emission runs at ``1 + |alpha|^2`` times the spontaneous rate.
    Returns ``(amplitude_calibrated, calibration_sigma)``.
    """
    if seed is None:
        seed = cfg.seed
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mean_spont = cfg.spontaneous_rate * cfg.acquisition_time
    n_stim = rng.poisson(mean_spont * (1.0 + amplitude_true**2))
    n_spont = rng.poisson(mean_spont)
    return calibration_from_counts(float(n_stim), float(n_spont))


def simulate_probe(spec: ProbeSpec, index: int, truth: NoiseParams, grid: QuadratureGrid,
                   master_seed: int, spdc: SpdcConfig | None) -> ProbeRecord:
    """Calibrate and measure one probe; each probe owns its seeded streams."""
    if spdc is None:
        amp, sigma = spec.amplitude_true, 0.0
    else:
        spdc_seed = master_seed if spdc.seed is None else spdc.seed
        amp, sigma = simulate_spdc_calibration(
            spec.amplitude_true, spdc, probe_rng(spdc_seed, index, 1))
    x = draw_samples(Coherent(spec.alpha), 0.0, truth, spec.n_samples,
                     probe_rng(master_seed, index, 0))
    hist, outside = histogram(x, grid)
    return ProbeRecord(spec, amp, sigma, hist, outside)


def simulate_probes(specs, truth: NoiseParams, grid: QuadratureGrid, master_seed: int,
                    spdc: SpdcConfig | None = None) -> list[ProbeRecord]:
    return [simulate_probe(s, i, truth, grid, master_seed, spdc) for i, s in enumerate(specs)]


def analytic_probe(spec: ProbeSpec, truth: NoiseParams, grid: QuadratureGrid) -> ProbeRecord:
    """Noiseless record: exact detected density at the grid nodes, exact calibration."""
    mu = np.sqrt(truth.eta) * projected_mean(spec.alpha, 0.0)
    var = 0.25 + truth.v_el
    x = grid.points
    dens = np.exp(-((x - mu) ** 2) / (2 * var)) / np.sqrt(2 * np.pi * var)
    return ProbeRecord(spec, spec.amplitude_true, 0.0, QuadraturePdf(grid, dens), 0.0)
