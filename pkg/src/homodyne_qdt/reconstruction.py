"""Tomographic inversion: non-negative g-matrix plus per-probe amplitude rescaling.

The objective is the plain least-squares mismatch between measured probe
densities and the model response,

    F(g, gamma) = sum_j sum_s [p_s(x_j) - sum_k g[j, k] A_s(gamma_s)[k]]^2,

with ``A_s(gamma)[k] = sqrt(2/pi) exp(-2 (y_k - gamma mu_s)^2) dy`` and
``mu_s`` the signed calibrated amplitude projected on the measured quadrature.
It is minimised by alternating an exact multi-right-hand-side NNLS in ``g``
with independent golden-section searches in each free ``gamma_s``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .detector import (
    DetectorPovm,
    GMatrix,
    ScaleFactors,
    coherent_kernel,
    config_hash,
    delta_figure,
)
from .nnls import DEFAULT_TOL, nnls_rows
from .numerics import golden_section_min
from .simulator import ProbeRecord, analytic_probe, equidistant_probe_set
from .states import GridError, IDEAL, NoiseParams, QuadratureGrid

log = logging.getLogger(__name__)

FD_STEP = 1e-3
GOLDEN_XTOL = 1e-4


class NoValidProbeError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    gamma_bounds: tuple[float, float] = (0.2, 1.2)
    # a 0.5 threshold would pin the |alpha| = 0.25 probes at 1,
    # inconsistent with any gamma != 1 elsewhere; 0.2 only pins near-vacuum probes
    gamma_pin_threshold: float = 0.2
    outer_tol: float = 1e-7
    max_outer_iters: int = 500
    nnls_tol: float = DEFAULT_TOL
    golden_xtol: float = GOLDEN_XTOL

    def __post_init__(self):
        lo, hi = self.gamma_bounds
        object.__setattr__(self, "gamma_bounds", (float(lo), float(hi)))
        if not lo < hi:
            raise ValueError(f"gamma bounds {self.gamma_bounds} must satisfy lo < hi")
        if not (self.outer_tol > 0 and self.nnls_tol > 0 and self.golden_xtol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.gamma_pin_threshold < 0:
            raise ValueError("gamma_pin_threshold must be >= 0")

    def to_dict(self) -> dict:
        return {
            "gamma_bounds": list(self.gamma_bounds),
            "gamma_pin_threshold": self.gamma_pin_threshold,
            "outer_tol": self.outer_tol,
            "max_outer_iters": self.max_outer_iters,
            "nnls_tol": self.nnls_tol,
            "golden_xtol": self.golden_xtol,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        return cls(
            tuple(d.get("gamma_bounds", (0.2, 1.2))),
            float(d.get("gamma_pin_threshold", 0.2)),
            float(d.get("outer_tol", 1e-7)),
            int(d.get("max_outer_iters", 500)),
            float(d.get("nnls_tol", DEFAULT_TOL)),
            float(d.get("golden_xtol", GOLDEN_XTOL)),
        )


@dataclass(frozen=True)
class ReconstructionProblem:
    probes: tuple[ProbeRecord, ...]
    outcome_grid: QuadratureGrid
    basis_grid: QuadratureGrid

    def __post_init__(self):
        object.__setattr__(self, "probes", tuple(self.probes))
        if not self.probes:
            raise ValueError("need at least one probe")
        for i, p in enumerate(self.probes):
            if p.histogram.grid != self.outcome_grid:
                raise GridError(f"probe {i} histogram is not on the outcome grid")

    @property
    def data(self) -> np.ndarray:
        """Measured densities, shape (n_outcomes, n_probes)."""
        return np.stack([p.histogram.values for p in self.probes], axis=1)

    @property
    def mu(self) -> np.ndarray:
        return np.array([p.projected_amplitude for p in self.probes])


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    povm: DetectorPovm
    objective: float
    outer_iters: int
    gamma_bar: float
    gamma_bar_sigma: float
    converged: bool
    objective_history: tuple[float, ...] = ()

    @property
    def g(self) -> GMatrix:
        return self.povm.g

    @property
    def scale(self) -> ScaleFactors:
        return self.povm.scale

    def to_dict(self) -> dict:
        def num(v):
            return float(v) if np.isfinite(v) else None

        return {
            "povm": self.povm.to_dict(),
            "objective": self.objective,
            "outer_iters": self.outer_iters,
            "gamma_bar": num(self.gamma_bar),
            "gamma_bar_sigma": num(self.gamma_bar_sigma),
            "converged": self.converged,
            "objective_history": list(self.objective_history),
            "diagnostics": {
                "column_sums": self.povm.g.column_sums().tolist(),
                "delta_over_n": (delta_figure(self.povm.g) / self.povm.g.outcome_grid.n_points
                                 if self.povm.g.is_square else None),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReconstructionResult":
        def num(v):
            return np.inf if v is None else float(v)

        return cls(
            DetectorPovm.from_dict(d["povm"]),
            float(d["objective"]),
            int(d["outer_iters"]),
            num(d["gamma_bar"]),
            num(d["gamma_bar_sigma"]),
            bool(d["converged"]),
            tuple(d.get("objective_history", ())),
        )


def design_matrix(gammas, probes, basis_grid: QuadratureGrid) -> np.ndarray:
    """``A[s, k] = sqrt(2/pi) exp(-2 (y_k - gamma_s mu_s)^2) dy``."""
    gammas = np.asarray(gammas, dtype=float)
    mu = np.array([p.projected_amplitude for p in probes])
    if gammas.shape != mu.shape:
        raise ValueError(f"{gammas.size} scale factors for {mu.size} probes")
    y = basis_grid.points
    return coherent_kernel(y[None, :], (gammas * mu)[:, None]) * basis_grid.spacing


def _objective(P, G, A) -> float:
    r = P - G @ A.T
    return float(np.sum(r * r))


def _probe_objective(P, G, y, dy, mu, gamma) -> float:
    r = P - G @ (coherent_kernel(y, gamma * mu) * dy)
    return float(r @ r)


def pinned_mask(problem: ReconstructionProblem, config: SolverConfig) -> np.ndarray:
    """Probes whose projected calibrated amplitude is too small to carry a scale."""
    return np.abs(problem.mu) < config.gamma_pin_threshold


def fit(problem: ReconstructionProblem, config: SolverConfig = SolverConfig(),
        metadata: dict | None = None) -> ReconstructionResult:
    """Jointly fit ``g >= 0`` and the free scale factors by alternating minimisation.

    Step A solves the NNLS problem for every outcome row with the scale
    factors fixed; Step B line-searches every free ``gamma_s`` with ``g``
    fixed. A half-step is only accepted if it does not raise the objective,
    so the recorded history is non-increasing. Iteration stops when the
    relative decrease over a full sweep drops below ``outer_tol``.
    """
    P = problem.data
    basis = problem.basis_grid
    y, dy = basis.points, basis.spacing
    mu = problem.mu
    pinned = pinned_mask(problem, config)
    lo, hi = config.gamma_bounds
    gamma = np.ones(mu.size)

    G = None
    obj = float(np.sum(P * P))  # g = 0
    history = [obj]
    converged = False
    it = 0
    for it in range(1, config.max_outer_iters + 1):
        start = obj
        # Step A
        A = design_matrix(gamma, problem.probes, basis)
        G_new = nnls_rows(A, P, tol=config.nnls_tol, X0=G)
        obj_new = _objective(P, G_new, A)
        if G is None or obj_new <= obj:
            G, obj = G_new, obj_new
        history.append(obj)
        # Step B
        if not pinned.all():
            for s in np.flatnonzero(~pinned):
                col = P[:, s]
                current = _probe_objective(col, G, y, dy, mu[s], gamma[s])
                g_s, f_s = golden_section_min(
                    lambda c: _probe_objective(col, G, y, dy, mu[s], c), lo, hi, config.golden_xtol)
                if f_s < current:
                    gamma[s] = g_s
            obj = _objective(P, G, design_matrix(gamma, problem.probes, basis))
            history.append(obj)
        else:
            converged = True
            break
        if obj == 0.0 or (start - obj) <= config.outer_tol * start:
            converged = True
            break

    scale0 = float(history[0]) or 1.0
    diffs = np.diff(history)
    if np.any(diffs > 1e-12 * scale0):
        raise AssertionError(f"objective increased by {diffs.max():.3g} during the fit")
    if not converged:
        log.warning("fit stopped after %d outer iterations without converging", it)

    gamma[pinned] = 1.0
    povm = DetectorPovm(
        GMatrix(problem.outcome_grid, basis, G),
        ScaleFactors(gamma, np.zeros(mu.size), pinned),
        metadata or {},
    )
    partial = ReconstructionResult(povm, obj, it, np.nan, np.nan, converged, tuple(history))
    sigma = gamma_uncertainty(problem, partial)
    scale = ScaleFactors(gamma, sigma, pinned)
    try:
        gbar, gbar_sigma = weighted_gamma_bar(scale)
    except NoValidProbeError:
        gbar, gbar_sigma = 1.0, np.inf
    meta = {
        "n_probes": mu.size,
        "solver_config_hash": config_hash(config.to_dict()),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    meta.update(metadata or {})
    povm = DetectorPovm(povm.g, scale, meta)
    return ReconstructionResult(povm, obj, it, gbar, gbar_sigma, converged, tuple(history))


def gamma_uncertainty(problem: ReconstructionProblem, result: ReconstructionResult,
                      step: float = FD_STEP) -> np.ndarray:
    """``[d^2 F / d gamma_s^2]^(-1/2)`` by central differences with ``g`` held fixed.

    Pinned probes and probes with non-positive curvature get ``inf``.
    """
    P = problem.data
    basis = problem.basis_grid
    y, dy = basis.points, basis.spacing
    G = result.g.entries
    mu = problem.mu
    gamma = result.scale.gamma
    pinned = result.scale.pinned
    sigma = np.full(mu.size, np.inf)
    for s in np.flatnonzero(~pinned):
        f = [_probe_objective(P[:, s], G, y, dy, mu[s], gamma[s] + d)
             for d in (-step, 0.0, step)]
        curv = (f[0] - 2 * f[1] + f[2]) / step**2
        if curv > 0 and np.isfinite(curv):
            sigma[s] = curv**-0.5
    return sigma


def weighted_gamma_bar(scale: ScaleFactors) -> tuple[float, float]:
    """Inverse-variance weighted mean of the free, finite-uncertainty scale factors."""
    ok = ~scale.pinned & np.isfinite(scale.sigma_gamma) & (scale.sigma_gamma > 0)
    if not ok.any():
        raise NoValidProbeError("no unpinned probe with a finite uncertainty")
    w = scale.sigma_gamma[ok] ** -2.0
    return float(np.sum(w * scale.gamma[ok]) / np.sum(w)), float(np.sum(w) ** -0.5)


@dataclass(frozen=True)
class SweepPoint:
    delta_alpha: float
    n_probes: int
    delta_over_n: float
    gamma_bar: float


def spacing_sweep(amplitude_range: float, spacings, truth: NoiseParams = IDEAL,
                  config: SolverConfig = SolverConfig(),
                  grid: QuadratureGrid | None = None) -> list[SweepPoint]:
    """Normalised trace figure versus probe spacing for equidistant phase-0 sets.

    Each set is fitted from exact detected densities (no sampling noise, exact
    calibration) on matched outcome/basis grids.
    """
    if grid is None:
        grid = QuadratureGrid(-2.0, 2.0, 81)
    out = []
    for d in spacings:
        if not d > 0:
            raise ValueError("spacings must be positive")
        specs = equidistant_probe_set(float(d), amplitude_range)
        probes = [analytic_probe(s, truth, grid) for s in specs]
        res = fit(ReconstructionProblem(probes, grid, grid), config)
        out.append(SweepPoint(float(d), len(specs),
                              delta_figure(res.g) / grid.n_points, res.gamma_bar))
    return out


def transition_midpoint(sweep, level: float = 0.5) -> float | None:
    """First spacing at which the normalised trace falls through ``level``.

    Linear interpolation between the bracketing sweep points; ``None`` when
    the curve never crosses.
    """
    pts = sorted(sweep, key=lambda p: p.delta_alpha)
    for a, b in zip(pts, pts[1:]):
        if a.delta_over_n >= level > b.delta_over_n:
            t = (a.delta_over_n - level) / (a.delta_over_n - b.delta_over_n)
            return a.delta_alpha + t * (b.delta_alpha - a.delta_alpha)
    return None
