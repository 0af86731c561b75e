"""Command-line front end: ``homodyne-qdt <verb> [--config C] [--out DIR] [--seed N]``.

Exit codes: 0 ok, 1 invalid input, 2 I/O failure, 3 solver did not converge
(the result file is still written).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import artifacts as art
from .config import ConfigError, RunConfig
from .detector import delta_figure, spread_metrics
from .reconstruction import ReconstructionProblem, fit, spacing_sweep, transition_midpoint
from .simulator import (
    CalibrationError,
    draw_samples,
    histogram,
    probe_rng,
    simulate_spdc_calibration,
    ProbeRecord,
)
from .states import Coherent, GridError, TruncationError
from .validation import efficiency_estimate, validate_state

log = logging.getLogger("homodyne_qdt")

OUTPUT_ENV = "HOMODYNE_QDT_OUTPUT_DIR"

EXIT_OK, EXIT_INPUT, EXIT_IO, EXIT_NOT_CONVERGED = 0, 1, 2, 3

_INPUT_ERRORS = (ConfigError, art.SchemaError, GridError, TruncationError,
                 CalibrationError, ValueError, KeyError)


class _NotConverged(Exception):
    pass


# -- commands ---------------------------------------------------------------

def _specs(cfg: RunConfig):
    return cfg.probe_set.build(cfg.samples_per_probe)


def _calibrate(cfg: RunConfig, specs):
    seed = cfg.master_seed if cfg.spdc.seed is None else cfg.spdc.seed
    return [simulate_spdc_calibration(s.amplitude_true, cfg.spdc, probe_rng(seed, i, 1))
            for i, s in enumerate(specs)]


def cmd_simulate(cfg: RunConfig, run: Path) -> list[Path]:
    """Simulate every probe: calibration, samples, histograms."""
    specs = _specs(cfg)
    cal = _calibrate(cfg, specs)
    records, samples = [], []
    for i, (spec, (amp, sig)) in enumerate(zip(specs, cal)):
        x = draw_samples(Coherent(spec.alpha), 0.0, cfg.truth, spec.n_samples,
                         probe_rng(cfg.master_seed, i, 0))
        hist, outside = histogram(x, cfg.outcome_grid)
        records.append(ProbeRecord(spec, amp, sig, hist, outside))
        if cfg.write_samples:
            samples.append(x)
    log.info("simulated %d probes", len(records))
    return art.write_dataset(run, records, samples if cfg.write_samples else None)


def cmd_calibrate(cfg: RunConfig, run: Path) -> list[Path]:
    """SPDC amplitude calibration only; same streams as ``simulate``."""
    specs = _specs(cfg)
    cal = _calibrate(cfg, specs)
    log.info("calibrated %d probes", len(specs))
    return [art.write_calibration(run, specs, cal)]


def cmd_reconstruct(cfg: RunConfig, run: Path, dataset: Path | None) -> list[Path]:
    records = art.read_dataset(dataset or run, cfg.outcome_grid)
    problem = ReconstructionProblem(records, cfg.outcome_grid, cfg.basis_grid)
    result = fit(problem, cfg.solver, {"config_hash": cfg.hash()})
    path = art.write_result(run / "result.json", result)
    log.info("gamma_bar = %.4f +- %.4f after %d iterations (objective %.3g)",
             result.gamma_bar, result.gamma_bar_sigma, result.outer_iters, result.objective)
    if not result.converged:
        raise _NotConverged([path])
    return [path]


def cmd_validate(cfg: RunConfig, run: Path, result_path: Path | None) -> list[Path]:
    result = art.read_result(result_path or run / "result.json")
    v = cfg.validation
    reports = [validate_state(result, state, cfg.truth, v.n_samples,
                              probe_rng(cfg.master_seed, i, 2), v.phase)
               for i, state in enumerate(v.states)]
    for rep in reports:
        log.info("%s: tvd %.4f, bhattacharyya %.4f", type(rep.state).__name__,
                 rep.tvd, rep.bhattacharyya)
    return art.write_validation(run, reports)


def cmd_sweep(cfg: RunConfig, run: Path) -> list[Path]:
    sw = spacing_sweep(cfg.sweep.amplitude_range, cfg.sweep.spacings, config=cfg.solver,
                       grid=cfg.basis_grid)
    mid = transition_midpoint(sw)
    log.info("transition midpoint: %s", "none" if mid is None else f"{mid:.3f}")
    return [art.write_sweep(run / "sweep.csv", sw)]


def summary_text(result, reports=None) -> str:
    g = result.g
    lines = [
        f"gamma_bar = {result.gamma_bar:.4f} +- {result.gamma_bar_sigma:.4f}",
    ]
    try:
        eta, eta_sig = efficiency_estimate(result)
        lines.append(f"eta_hat = {eta:.4f} +- {eta_sig:.4f}")
    except ValueError:
        lines.append("eta_hat = undefined")
    if g.is_square:
        lines.append(f"delta/N = {delta_figure(g) / g.outcome_grid.n_points:.4f}")
    lines += [
        f"objective = {result.objective:.6g}",
        f"outer iterations = {result.outer_iters} (converged: {str(result.converged).lower()})",
        f"probes = {result.scale.gamma.size} ({int(result.scale.pinned.sum())} pinned)",
    ]
    spreads = spread_metrics(g)
    widths = np.array([s.rms_width for s in spreads if not s.flagged])
    if widths.size:
        lines.append(f"row rms width: min {widths.min():.4f}, median {np.median(widths):.4f}, "
                     f"max {widths.max():.4f}; {sum(s.flagged for s in spreads)} empty rows")
    for r in reports or []:
        st = r["state"]
        args = ", ".join(f"{k}={v}" for k, v in sorted(st.items()) if k != "kind")
        name = f"{st['kind']}({args})"
        lines.append(f"validation {name}: tvd {r['tvd']:.4f}, bhattacharyya "
                     f"{r['bhattacharyya']:.4f}")
    lines.append("per-row spread metrics: report/spread.csv")
    return "\n".join(lines) + "\n"


def cmd_report(cfg: RunConfig, run: Path, result_path: Path | None) -> list[Path]:
    result = art.read_result(result_path or run / "result.json")
    vpath = run / "validation.json"
    reports = art.read_validation(vpath) if vpath.exists() else None
    out = run / "report"
    g = result.g
    written = [
        art.write_csv(out / "g.csv", ["x\\y"] + [art.fmt(y) for y in g.basis_grid.points],
                      ([x, *row] for x, row in zip(g.outcome_grid.points, g.entries))),
        art.write_csv(out / "gamma.csv", ("probe", "gamma", "sigma_gamma", "pinned"),
                      ((i, gm, s, p) for i, (gm, s, p) in enumerate(zip(
                          result.scale.gamma, result.scale.sigma_gamma, result.scale.pinned)))),
        art.write_csv(out / "spread.csv", ("x", "center", "rms_width", "flagged"),
                      ((x, s.center, s.rms_width, s.flagged)
                       for x, s in zip(g.outcome_grid.points, spread_metrics(g)))),
    ]
    text = summary_text(result, reports)
    (out / "summary.txt").write_text(text)
    written.append(out / "summary.txt")
    log.info("\n%s", text.rstrip())
    return written


# -- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="homodyne-qdt",
                                description="Simulated homodyne detector tomography.")
    p.add_argument("verb", choices=("simulate", "calibrate", "reconstruct", "validate",
                                    "sweep", "report"))
    p.add_argument("--config", type=Path, help="run configuration JSON")
    p.add_argument("--out", type=Path, help=f"run directory (overrides ${OUTPUT_ENV})")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--dataset", type=Path, help="dataset directory for reconstruct")
    p.add_argument("--result", type=Path, help="result JSON for validate/report")
    p.add_argument("--quiet", action="store_true", help="only print errors")
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    out = args.out if args.out is not None else os.environ.get(OUTPUT_ENV)
    return cfg.with_overrides(seed=args.seed, output_dir=out)


def _prepare_run(cfg: RunConfig) -> Path:
    run = Path(cfg.output_dir)
    run.mkdir(parents=True, exist_ok=True)
    art.write_json(run / "config.json", cfg.experiment_dict())
    return run


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        cfg = resolve_config(args)
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_IO
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_INPUT

    code = EXIT_OK
    try:
        run = _prepare_run(cfg)
        if args.verb == "simulate":
            written = cmd_simulate(cfg, run)
        elif args.verb == "calibrate":
            written = cmd_calibrate(cfg, run)
        elif args.verb == "reconstruct":
            try:
                written = cmd_reconstruct(cfg, run, args.dataset)
            except _NotConverged as exc:
                written, code = exc.args[0], EXIT_NOT_CONVERGED
                log.error("solver did not converge; result written anyway")
        elif args.verb == "validate":
            written = cmd_validate(cfg, run, args.result)
        elif args.verb == "sweep":
            written = cmd_sweep(cfg, run)
        else:
            written = cmd_report(cfg, run, args.result)
        art.update_manifest(run, cfg.hash(), [run / "config.json", *written])
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except _INPUT_ERRORS as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INPUT
    return code


if __name__ == "__main__":
    sys.exit(main())
