import json

import pytest

from thetazeros.cli import main
from thetazeros.harness import read_csv


def run(tmp_path, command, cfg, *extra):
    p = tmp_path / f"{command}.json"
    p.write_text(json.dumps(cfg))
    assert main([command, "--config", str(p), "--out-dir", str(tmp_path), *extra]) == 0


def summary(tmp_path, name):
    return json.loads((tmp_path / name).read_text())


@pytest.mark.parametrize("ensemble", ["gaussian", "fsh", "pl"])
def test_sample_then_zeros(tmp_path, ensemble):
    cfg = {"N": 3, "ensemble": ensemble, "samples": 6, "measure": {"kind": "uniform-on-torus", "M": 32}}
    run(tmp_path, "sample", cfg, "--seed", "5")
    rows = read_csv(tmp_path / "sections.csv")
    assert len(rows) == 6
    assert summary(tmp_path, "sample_summary.json")["seed"] == 5
    run(tmp_path, "zeros", {}, "--threads", "2")
    zs = summary(tmp_path, "zeros_summary.json")
    assert zs["failures"] == 0
    assert zs["max_abel_sum_offset"] < 1e-6
    configs = read_csv(tmp_path / "configurations.csv")
    assert len(configs) == 6 and configs[0]["seed"] == 5


def test_sample_seed_reproducible(tmp_path):
    cfg = {"N": 2, "samples": 3, "measure": {"kind": "uniform-on-torus", "M": 16}, "seed": 9}
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    run(a, "sample", cfg)
    run(b, "sample", cfg)
    assert (a / "sections.csv").read_text() == (b / "sections.csv").read_text()


def test_equilibrium(tmp_path):
    cfg = {"grid": 16, "support": {"kind": "uniform-on-disk", "center": [0.5, 0.5], "radius": 0.3}}
    run(tmp_path, "equilibrium", cfg)
    s = summary(tmp_path, "equilibrium.json")
    assert s["converged"] and s["E0"] < 0
    w = read_csv(tmp_path / "equilibrium_weights.csv")
    assert abs(sum(r["weight"] for r in w) - 1) < 1e-12


def test_identity_check(tmp_path):
    cfg = {"N": 4, "sections": 5, "laplacian_grid": 64, "norm_N": 2}
    run(tmp_path, "identity-check", cfg)
    r = summary(tmp_path, "identity_report.json")
    assert r["theta"]["quasi_periodicity"] < 1e-10
    assert r["zeros"]["all_counts_exact"]
    assert r["norm_potential"] < 1e-6


def test_jpc_check(tmp_path):
    run(tmp_path, "jpc-check", {"samples": 2000, "ensembles": ["g0", "fsh"]})
    r = summary(tmp_path, "jpc_report.json")
    assert set(r["cells"]) == {"g0", "fsh"}
    assert max(r["slater"].values()) < 1e-8
    assert len(read_csv(tmp_path / "jpc_cells_fsh.csv")) == 7


def test_ldp_sweep_and_report(tmp_path):
    cfg = {"N": [2, 4], "samples": 100, "measure": {"kind": "uniform-on-torus", "M": 32}, "grid": 16,
           "coarse": 8, "rate_grid": 32, "bracket": False, "delta": 0.3,
           "target": {"kind": "uniform-on-rect", "a0": 0, "a1": 1, "b0": 0, "b1": 0.5},
           "rate_consistency_pairs": 3}
    run(tmp_path, "ldp-sweep", cfg, "--seed", "1")
    s = summary(tmp_path, "ldp_summary.json")
    assert [r["N"] for r in s["rows"]] == [2, 4]
    assert len(s["rate_consistency"]["rows"]) == 2
    assert len(read_csv(tmp_path / "concentration.csv")) == 2
    run(tmp_path, "report", {})
    rep = summary(tmp_path, "report.json")
    assert rep["sweep"]["tables_reverified"]
    assert "ldp_summary" in rep


def test_bad_sweep_config(tmp_path):
    with pytest.raises(ValueError):
        run(tmp_path, "ldp-sweep", {"N": [2], "samples": 100, "colour": 1})
