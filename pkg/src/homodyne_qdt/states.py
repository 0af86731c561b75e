"""Quadrature-space representations of probe and validation states.

Convention: the quadrature is ``x_phi = (a^dag e^{i phi} + a e^{-i phi}) / 2``,
so the vacuum marginal is a Gaussian of variance 1/4,

    |<x|0>|^2 = sqrt(2/pi) exp(-2 x^2).

Other references use variance 1/2 (``q = (a + a^dag)/sqrt(2)``); every
function in this package uses the variance-1/4 convention.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import ndtr

#: Default tolerated mass outside a grid.
TAU = 1e-6
#: Maximum Fock-tail weight neglected by a truncated SPACS expansion.
SPACS_TAIL = 1e-10
#: Largest photon number supported by the Hermite-function evaluator.
FOCK_MAX = 64

VACUUM_VARIANCE = 0.25
_VACUUM_PEAK = np.sqrt(2.0 / np.pi)


class GridError(ValueError):
    """A grid is malformed, mismatched, or too small for the requested state."""


class TruncationError(ValueError):
    """A Fock expansion is truncated too early."""


@dataclass(frozen=True)
class QuadratureGrid:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise GridError("grid bounds must be finite")
        if not self.x_min < self.x_max:
            raise GridError(f"x_min={self.x_min} must be below x_max={self.x_max}")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise GridError(f"n_points={self.n_points} must be an integer >= 2")
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "x_max", float(self.x_max))
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def edges(self) -> np.ndarray:
        """Bin edges of the cells centred on the grid points."""
        h = self.spacing
        return np.linspace(self.x_min - h / 2, self.x_max + h / 2, self.n_points + 1)

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "n_points": self.n_points}

    @classmethod
    def from_dict(cls, d: dict) -> "QuadratureGrid":
        return cls(d["x_min"], d["x_max"], d["n_points"])


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class QuadraturePdf:
    """A density sampled on a uniform quadrature grid.

    Construction only checks shape and sign. Whether the grid captures the
    full mass is a property of how the values were produced, see
    :meth:`integral` and :func:`check_capture`.
    """

    grid: QuadratureGrid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (self.grid.n_points,):
            raise GridError(
                f"values have shape {values.shape}, grid has {self.grid.n_points} points"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("pdf values must be finite")
        if np.any(values < 0):
            raise ValueError("pdf values must be non-negative")
        object.__setattr__(self, "values", values)

    def integral(self) -> float:
        """Trapezoidal integral over the grid."""
        return float(np.trapezoid(self.values, dx=self.grid.spacing))

    def mean(self) -> float:
        x = self.grid.points
        return float(np.trapezoid(x * self.values, dx=self.grid.spacing) / self.integral())

    def variance(self) -> float:
        x = self.grid.points
        m = self.mean()
        return float(
            np.trapezoid((x - m) ** 2 * self.values, dx=self.grid.spacing) / self.integral()
        )


@dataclass(frozen=True)
class NoiseParams:
    eta: float
    v_el: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta={self.eta} must lie in (0, 1]")
        if not self.v_el >= 0.0:
            raise ValueError(f"v_el={self.v_el} must be non-negative")

    @property
    def kernel_variance(self) -> float:
        """Variance added on top of the scaled signal quadrature."""
        return (1.0 - self.eta) * VACUUM_VARIANCE + self.v_el

    def to_dict(self) -> dict:
        return {"eta": self.eta, "v_el": self.v_el}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseParams":
        return cls(float(d["eta"]), float(d.get("v_el", 0.0)))


IDEAL = NoiseParams(1.0, 0.0)


# -- state models -----------------------------------------------------------

@dataclass(frozen=True)
class Coherent:
    alpha: complex

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")


@dataclass(frozen=True)
class Fock:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or not 0 <= self.n <= FOCK_MAX:
            raise ValueError(f"Fock n={self.n} must be an integer in [0, {FOCK_MAX}]")
        object.__setattr__(self, "n", int(self.n))


@dataclass(frozen=True)
class Spacs:
    """Photon-added coherent state, optionally mixed with its seed coherent state.

    With preparation efficiency ``zeta`` the state is
    ``zeta * SPACS + (1 - zeta) * |alpha><alpha|``.
    """

    alpha: complex
    zeta: float = 1.0
    truncation: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if not 0.0 <= self.zeta <= 1.0:
            raise ValueError(f"zeta={self.zeta} must lie in [0, 1]")
        if self.truncation == 0:
            object.__setattr__(self, "truncation", spacs_truncation(self.alpha))
        spacs_coefficients(self.alpha, self.truncation)  # raises if too short


StateModel = Union[Coherent, Fock, Spacs]


def state_to_dict(state: StateModel) -> dict:
    if isinstance(state, Coherent):
        return {"kind": "coherent", "alpha": [state.alpha.real, state.alpha.imag]}
    if isinstance(state, Fock):
        return {"kind": "fock", "n": state.n}
    if isinstance(state, Spacs):
        return {
            "kind": "spacs",
            "alpha": [state.alpha.real, state.alpha.imag],
            "zeta": state.zeta,
            "truncation": state.truncation,
        }
    raise TypeError(f"unknown state {state!r}")


def state_from_dict(d: dict) -> StateModel:
    kind = d["kind"]
    if kind == "fock":
        return Fock(int(d["n"]))
    alpha = d["alpha"]
    alpha = complex(alpha[0], alpha[1]) if isinstance(alpha, (list, tuple)) else complex(alpha)
    if kind == "coherent":
        return Coherent(alpha)
    if kind == "spacs":
        return Spacs(alpha, float(d.get("zeta", 1.0)), int(d.get("truncation", 0)))
    raise ValueError(f"unknown state kind {kind!r}")


# -- numerics ---------------------------------------------------------------

def projected_mean(alpha: complex, phi: float) -> float:
    """Mean of the quadrature ``x_phi`` for a coherent state ``|alpha>``."""
    return float((complex(alpha) * np.exp(-1j * phi)).real)


def check_capture(grid: QuadratureGrid, mass: float, tau: float | None, what: str):
    if tau is not None and mass < 1.0 - tau:
        raise GridError(
            f"grid [{grid.x_min}, {grid.x_max}] captures {mass:.3g} of the {what} mass "
            f"(need >= 1 - {tau:g})"
        )


def gaussian_capture(grid: QuadratureGrid, mean: float, variance: float) -> float:
    sd = np.sqrt(variance)
    return float(ndtr((grid.x_max - mean) / sd) - ndtr((grid.x_min - mean) / sd))


def hermite_functions(n_max: int, x) -> np.ndarray:
    """Oscillator eigenfunctions ``<x|n>`` for n = 0..n_max, variance-1/4 convention.

    Returns an array of shape ``(n_max + 1, len(x))``. Uses the stable
    three-term recurrence of the normalised functions, so no factorials
    appear.
    """
    if not 0 <= n_max <= FOCK_MAX:
        raise ValueError(f"n_max={n_max} outside [0, {FOCK_MAX}]")
    q = np.sqrt(2.0) * np.asarray(x, dtype=float)
    out = np.empty((n_max + 1, q.size))
    # sqrt(sqrt 2) is the Jacobian of x -> q = sqrt(2) x on the amplitude level
    out[0] = 2.0**0.25 * np.pi**-0.25 * np.exp(-q**2 / 2)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * q * out[0]
    for n in range(1, n_max):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * q * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def spacs_coefficients(alpha: complex, truncation: int) -> np.ndarray:
    """Fock amplitudes ``d_m`` of ``a^dag|alpha> / sqrt(1 + |alpha|^2)`` for m < truncation."""
    alpha = complex(alpha)
    if truncation < 2 or truncation > FOCK_MAX + 1:
        raise TruncationError(f"truncation={truncation} outside [2, {FOCK_MAX + 1}]")
    c = np.empty(truncation - 1, dtype=complex)
    c[0] = np.exp(-abs(alpha) ** 2 / 2)
    for n in range(1, truncation - 1):
        c[n] = c[n - 1] * alpha / np.sqrt(n)
    d = np.zeros(truncation, dtype=complex)
    d[1:] = c * np.sqrt(np.arange(1, truncation)) / np.sqrt(1 + abs(alpha) ** 2)
    tail = 1.0 - float(np.sum(np.abs(d) ** 2))
    if tail >= SPACS_TAIL:
        raise TruncationError(
            f"truncation={truncation} leaves Fock-tail weight {tail:.3g} >= {SPACS_TAIL:g}"
        )
    return d


def spacs_truncation(alpha: complex) -> int:
    """Smallest truncation whose neglected tail weight is below ``SPACS_TAIL``."""
    a2 = abs(complex(alpha)) ** 2
    weight = np.exp(-a2)  # |c_0|^2
    kept = weight * 1.0
    for n in range(1, FOCK_MAX):
        # margin for rounding in the cumulative sum
        if 1.0 - kept / (1 + a2) < SPACS_TAIL / 10:
            return n + 1
        weight *= a2 / n
        kept += weight * (n + 1)
    raise TruncationError(f"|alpha|={abs(alpha):.3g} needs more than {FOCK_MAX} Fock levels")


def _pure_pdf(amplitudes: np.ndarray, phi: float, x: np.ndarray) -> np.ndarray:
    n = np.arange(amplitudes.size)
    rotated = amplitudes * np.exp(-1j * n * phi)
    psi = rotated @ hermite_functions(amplitudes.size - 1, x)
    return np.abs(psi) ** 2


# -- pdf constructors ------------------------------------------------------------

def coherent_pdf(alpha: complex, phi: float, grid: QuadratureGrid, tau: float | None = TAU):
    """Quadrature marginal of ``|alpha>`` measured at phase ``phi``."""
    mu = projected_mean(alpha, phi)
    check_capture(grid, gaussian_capture(grid, mu, VACUUM_VARIANCE), tau, "coherent-state")
    x = grid.points
    return QuadraturePdf(grid, _VACUUM_PEAK * np.exp(-2.0 * (x - mu) ** 2))


def fock_pdf(n: int, grid: QuadratureGrid, tau: float | None = TAU):
    """Quadrature marginal ``|<x|n>|^2`` of a Fock state (phase independent)."""
    if int(n) != n or not 0 <= n <= FOCK_MAX:
        raise ValueError(f"Fock n={n} must be an integer in [0, {FOCK_MAX}]")
    values = hermite_functions(int(n), grid.points)[-1] ** 2
    pdf = QuadraturePdf(grid, values)
    check_capture(grid, pdf.integral(), tau, f"Fock |{n}>")
    return pdf


def spacs_pdf(alpha: complex, phi: float, grid: QuadratureGrid, truncation: int | None = None,
              tau: float | None = TAU):
    """Quadrature marginal of the pure photon-added coherent state."""
    if truncation is None:
        truncation = spacs_truncation(alpha)
    d = spacs_coefficients(alpha, truncation)
    pdf = QuadraturePdf(grid, _pure_pdf(d, phi, grid.points))
    check_capture(grid, pdf.integral(), tau, "SPACS")
    return pdf


def mix_pdf(p_a: QuadraturePdf, p_b: QuadraturePdf, zeta: float) -> QuadraturePdf:
    """Pointwise convex combination ``zeta * p_a + (1 - zeta) * p_b``."""
    if p_a.grid != p_b.grid:
        raise GridError("cannot mix pdfs on different grids")
    if not 0.0 <= zeta <= 1.0:
        raise ValueError(f"zeta={zeta} must lie in [0, 1]")
    if zeta == 1.0:
        return p_a
    if zeta == 0.0:
        return p_b
    return QuadraturePdf(p_a.grid, zeta * p_a.values + (1.0 - zeta) * p_b.values)


def state_pdf(state: StateModel, phi: float, grid: QuadratureGrid, tau: float | None = TAU):
    """Ideal (lossless) quadrature marginal of any supported state model."""
    if isinstance(state, Coherent):
        return coherent_pdf(state.alpha, phi, grid, tau)
    if isinstance(state, Fock):
        return fock_pdf(state.n, grid, tau)
    if isinstance(state, Spacs):
        pure = spacs_pdf(state.alpha, phi, grid, state.truncation, tau)
        if state.zeta == 1.0:
            return pure
        return mix_pdf(pure, coherent_pdf(state.alpha, phi, grid, tau), state.zeta)
    raise TypeError(f"unknown state {state!r}")


def state_support(state: StateModel, phi: float = 0.0) -> tuple[float, float]:
    """An interval holding all but a negligible fraction of the ideal marginal."""
    if isinstance(state, Fock):
        centre, n = 0.0, state.n
    else:
        centre, n = projected_mean(state.alpha, phi), 1 if isinstance(state, Spacs) else 0
    half = np.sqrt(n + 0.5) + 3.5
    return centre - half, centre + half


def apply_loss(p: QuadraturePdf, noise: NoiseParams, out_grid: QuadratureGrid,
               tau: float | None = None) -> QuadraturePdf:
    """Push a quadrature density through a beam-splitter loss plus electronic noise.

    The detected quadrature is ``sqrt(eta) * y + sqrt(1 - eta) * v + e`` with
    ``v`` vacuum noise (variance 1/4) and ``e`` electronic noise of variance
    ``v_el``. The convolution is done by trapezoidal quadrature over ``p``'s
    grid; for kernels much narrower than the grid the density is resampled instead.
    """
    y = p.grid.points
    x = out_grid.points
    s2 = noise.kernel_variance
    k = np.sqrt(noise.eta)
    # a kernel below dy/8 is treated as a delta: its error s2 p''/2 is smaller
    # than the dy^2 p''/8 of interpolating onto a finer grid
    if np.sqrt(s2) < k * p.grid.spacing / 8:
        values = np.interp(x / k, y, p.values, left=0.0, right=0.0) / k
        out = QuadraturePdf(out_grid, values)
    else:
        dy = p.grid.spacing
        vals = p.values
        sd = np.sqrt(s2)
        if sd < 2 * k * dy:
            # kernel narrower than the input spacing: refine the input first
            factor = int(np.ceil(8 * k * dy / sd))
            fine = QuadratureGrid(p.grid.x_min, p.grid.x_max, (p.grid.n_points - 1) * factor + 1)
            vals = np.interp(fine.points, y, vals)
            y, dy = fine.points, fine.spacing
        w = np.full(y.size, dy)
        w[0] = w[-1] = dy / 2
        kern = np.exp(-((x[:, None] - k * y[None, :]) ** 2) / (2 * s2)) / np.sqrt(2 * np.pi * s2)
        out = QuadraturePdf(out_grid, np.maximum(kern @ (w * vals), 0.0))
    if tau is not None:
        check_capture(out_grid, out.integral(), tau, "output")
    return out
