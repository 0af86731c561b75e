import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homodyne_qdt import artifacts as art
from homodyne_qdt.config import ConfigError, ProbeSetConfig, RunConfig, SweepConfig
from homodyne_qdt.reconstruction import SolverConfig, SweepPoint
from homodyne_qdt.simulator import SpdcConfig, build_probe_set, simulate_probes
from homodyne_qdt.states import GridError, NoiseParams, QuadratureGrid

finite = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e6, max_value=1e6)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**63 - 1),
    lo=st.floats(-5, -0.1), hi=st.floats(0.1, 5), n=st.integers(2, 400),
    eta=st.floats(1e-3, 1.0), v_el=st.floats(0.0, 1.0),
    bounds=st.tuples(st.floats(0.01, 0.99), st.floats(1.0, 3.0)),
    tol=st.floats(1e-15, 1e-2), spacings=st.lists(st.floats(0.01, 3.0), min_size=1, max_size=6),
    amps=st.lists(st.floats(0.0, 4.0), min_size=1, max_size=5),
    phases=st.lists(finite, min_size=1, max_size=3),
)
def test_config_roundtrip_is_bit_exact(seed, lo, hi, n, eta, v_el, bounds, tol, spacings,
                                       amps, phases):
    cfg = RunConfig(
        master_seed=seed,
        outcome_grid=QuadratureGrid(lo, hi, n),
        basis_grid=QuadratureGrid(lo * 1.5, hi * 1.5, n + 1),
        truth=NoiseParams(eta, v_el),
        probe_set=ProbeSetConfig("custom", tuple(amps), tuple(phases)),
        solver=SolverConfig(gamma_bounds=bounds, outer_tol=tol),
        sweep=SweepConfig(2.5, tuple(spacings)),
        spdc=SpdcConfig(123.456, 7.0, seed=3),
    )
    text = cfg.dumps()
    back = RunConfig.from_dict(json.loads(text))
    assert back.dumps() == text
    assert back.hash() == cfg.hash()


def test_default_config_roundtrip(tmp_path):
    cfg = RunConfig()
    p = tmp_path / "c.json"
    p.write_text(cfg.dumps())
    assert RunConfig.load(p) == cfg


def test_empty_document_gives_defaults():
    assert RunConfig.from_dict({}) == RunConfig()


@pytest.mark.parametrize("doc,field", [
    ({"samples_per_probe": 0}, "samples_per_probe"),
    ({"master_seed": 1.5}, "master_seed"),
    ({"truth": {"eta": 1.5}}, "truth"),
    ({"outcome_grid": {"x_min": 1, "x_max": 0, "n_points": 3}}, "outcome_grid"),
    ({"probe_set": {"kind": "bogus"}}, "probe_set"),
    ({"solver": {"gamma_bounds": [1.0, 0.5]}}, "solver"),
    ({"sweep": {"spacings": [0.5, -1]}}, "sweep"),
    ({"write_samples": "yes"}, "write_samples"),
])
def test_config_errors_name_file_and_field(tmp_path, doc, field):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ConfigError) as exc:
        RunConfig.load(p)
    assert str(p) in str(exc.value) and field in str(exc.value)


def test_unknown_field_and_bad_json(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({"nonsense": 1})
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="x.json"):
        RunConfig.load(p)


def test_hash_ignores_output_dir():
    assert RunConfig(output_dir="a").hash() == RunConfig(output_dir="b").hash()
    assert RunConfig(master_seed=1).hash() != RunConfig(master_seed=2).hash()


# -- artifacts -------------------------------------------------------------------------

GRID = QuadratureGrid(-2.0, 2.0, 81)


@pytest.fixture(scope="module")
def records():
    return simulate_probes(build_probe_set("minimal_9", n_samples=3000),
                           NoiseParams(0.81, 0.005), GRID, 5, SpdcConfig())


def test_dataset_roundtrip(tmp_path, records):
    art.write_dataset(tmp_path, records)
    back = art.read_dataset(tmp_path, GRID)
    assert len(back) == len(records) == len(list((tmp_path / "histograms").iterdir()))
    for a, b in zip(records, back):
        assert a.spec == b.spec
        assert a.amplitude_calibrated == b.amplitude_calibrated
        assert a.calibration_sigma == b.calibration_sigma
        assert a.out_of_range == b.out_of_range
        assert np.array_equal(a.histogram.values, b.histogram.values)
    cal = json.loads((tmp_path / "calibration.json").read_text())["probes"]
    assert [c["amplitude_calibrated"] for c in cal] == [r.amplitude_calibrated for r in records]


def test_samples_roundtrip(tmp_path, records):
    xs = [np.random.default_rng(i).normal(size=5) for i in range(len(records))]
    art.write_dataset(tmp_path, records, xs)
    back = art.read_samples(tmp_path / "samples.csv")
    for i, x in enumerate(xs):
        assert np.array_equal(back[i], x)


def test_dataset_grid_mismatch(tmp_path, records):
    art.write_dataset(tmp_path, records)
    with pytest.raises(GridError):
        art.read_dataset(tmp_path, QuadratureGrid(-2, 2, 41))


def test_corrupt_histogram_names_file_and_field(tmp_path, records):
    art.write_dataset(tmp_path, records)
    path = art.histogram_path(tmp_path, 2)
    lines = path.read_text().splitlines()
    lines[5] = lines[5].split(",")[0] + ",abc"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(art.SchemaError) as exc:
        art.read_dataset(tmp_path, GRID)
    assert "probe_002.csv" in str(exc.value) and "density" in str(exc.value)


def test_bad_header(tmp_path):
    (tmp_path / "probes.csv").write_text("a,b\n1,2\n")
    with pytest.raises(art.SchemaError, match="header"):
        art.read_dataset(tmp_path, GRID)


def test_sweep_roundtrip(tmp_path):
    pts = [SweepPoint(0.1 * k, k, 1 / 3 * k, 0.9 + 1e-17 * k) for k in range(1, 6)]
    art.write_sweep(tmp_path / "s.csv", pts)
    assert art.read_sweep(tmp_path / "s.csv") == pts


def test_manifest_accumulates_and_resets(tmp_path):
    (tmp_path / "a.txt").write_text("1")
    (tmp_path / "b.txt").write_text("2")
    art.update_manifest(tmp_path, "h1", [tmp_path / "b.txt"])
    art.update_manifest(tmp_path, "h1", [tmp_path / "a.txt"])
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["artifacts"] == ["a.txt", "b.txt"] and m["config_hash"] == "h1"
    art.update_manifest(tmp_path, "h2", [tmp_path / "a.txt"])
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["artifacts"] == ["a.txt"]


def test_fmt_is_exact():
    for v in (0.1, 1 / 3, 1e-300, 2.0**60, -0.0):
        assert float(art.fmt(v)) == v
    assert art.fmt(True) == "true" and art.fmt(np.int64(4)) == "4"
