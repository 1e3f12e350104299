import json
import os

import pytest
import yaml

from geobeam import cli, harness
from geobeam.harness import ConfigError, Scenario, exit_code_for
from geobeam.flow import HorizonError, PreconditionError
from geobeam.quadrature import QuadratureError

TORUS = {
    "schema_version": 1,
    "seed": 5,
    "backend": "flow",
    "model": {"name": "flat_torus", "params": {"dim": 2}},
    "H": {"kind": "point", "x": [1.0, 2.0]},
    "cover": {"tau": 0.5, "r": 0.1, "mc_samples": 200},
    "window": {"t0": 1.5, "T0": 8.0},
    "partition": {"kind": "single_window"},
    "bound": {"h": [0.01, 0.001]},
    "eigen": {"family": "torus", "H": "circle", "modes": [[0, 1], [1, 0]]},
}


def test_unknown_keys_rejected():
    bad = dict(TORUS, cover={"tau": 0.5, "radius": 0.1})
    with pytest.raises(ConfigError, match="radius"):
        Scenario.from_dict(bad)
    with pytest.raises(ConfigError):
        Scenario.from_dict(dict(TORUS, colour="red"))


@pytest.mark.parametrize("patch", [
    {"schema_version": 2},
    {"backend": "quantum"},
    {"partition": {"kind": "triple"}},
    {"cover": {"tau": "half", "r": 0.1}},
])
def test_invalid_values_rejected(patch):
    with pytest.raises(ConfigError):
        Scenario.from_dict(dict(TORUS, **patch))


def test_missing_sections():
    d = dict(TORUS)
    del d["window"]
    with pytest.raises(ConfigError):
        Scenario.from_dict(d)


def test_hash_ignores_output_but_tracks_seed():
    a = Scenario.from_dict(TORUS)
    assert a.hash() == a.with_overrides(out="/elsewhere").hash()
    assert a.hash() != a.with_overrides(seed=6).hash()


def test_resolve_config_search_order(tmp_path, monkeypatch):
    (tmp_path / "mine.yaml").write_text(yaml.safe_dump(TORUS))
    monkeypatch.setenv("GEOBEAM_DATA_DIR", str(tmp_path))
    assert harness.resolve_config("mine") == tmp_path / "mine.yaml"
    assert harness.resolve_config("sphere_point").name == "sphere_point.yaml"
    with pytest.raises(ConfigError):
        harness.resolve_config("absent")


def test_bundled_scenarios_validate():
    names = harness.bundled_scenarios()
    assert {"sphere_point", "sphere_equator", "torus_point", "catmap_ladder"} <= set(names)
    for n in names:
        Scenario.load(n)


def test_run_writes_artifacts_and_is_deterministic(tmp_path):
    sc = Scenario.from_dict(TORUS)
    r1 = harness.run(sc.with_overrides(out=tmp_path / "a"))
    r2 = harness.run(sc.with_overrides(out=tmp_path / "b"), threads=2)
    assert not r1.failed and all(r1.invariants.values())
    names = {os.path.basename(p) for p in r1.artifacts}
    assert {"cover.json", "cover.csv", "loops.csv", "partition.csv", "bound.csv", "ledger.csv",
            "spectrum.csv", "bound.gp"} <= names
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    for n in names - {"cover.json", "bound.gp"}:
        first = (tmp_path / "a" / n).read_text().splitlines()[:2]
        assert first[0] == f"# scenario_hash={r1.scenario_hash}"
        assert all("[" in cell for cell in first[1].split(","))
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert set(rep["timings"]) == {"cover", "loops", "partition", "bound", "spectrum"}


def test_run_upto_stops_early(tmp_path):
    rep = harness.run(Scenario.from_dict(TORUS).with_overrides(out=tmp_path), upto="cover")
    assert set(rep.timings) == {"cover"}
    assert not (tmp_path / "loops.csv").exists()


def test_stage_errors_carry_stage_and_inputs(tmp_path):
    d = dict(TORUS, window={"t0": 0.5, "T0": 8.0})
    with pytest.raises(PreconditionError, match=r"stage loops \(t0=0.5"):
        harness.run(Scenario.from_dict(d).with_overrides(out=tmp_path))


def test_report_append_only():
    rep = harness.RunReport("x")
    rep.check("a", False)
    rep.check("a", True)
    assert rep.invariants["a"] is False and rep.failed


@pytest.mark.parametrize("exc,code", [
    (harness.InvariantFailure("x"), 1),
    (ConfigError("x"), 2),
    (PreconditionError("x"), 2),
    (HorizonError("x"), 3),
    (QuadratureError("x"), 3),
    (FloatingPointError("x"), 3),
])
def test_exit_codes(exc, code):
    assert exit_code_for(exc) == code


def test_verify_unknown_suite():
    with pytest.raises(ConfigError):
        harness.verify("everything")
    assert cli.main(["verify", "everything"]) == 2


def test_verify_eigen_and_ift():
    for suite in ("eigen", "ift", "jacobi"):
        res = harness.verify(suite)
        assert res["passed"], res


def test_cli_run_and_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "t.yaml"
    cfg.write_text(yaml.safe_dump(TORUS))
    assert cli.main(["cover", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "PASS cover_property" in out and "scenario_hash=" in out
    assert cli.main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump(dict(TORUS, cover={"tau": 0.5, "r": 0.1, "D_max": 2})))
    assert cli.main(["cover", "--config", str(bad), "--out", str(tmp_path / "p")]) == 1
    huge = tmp_path / "huge.yaml"
    huge.write_text(yaml.safe_dump(dict(TORUS, window={"t0": 1.5, "T0": 1.0e6})))
    assert cli.main(["loops", "--config", str(huge), "--out", str(tmp_path / "q")]) == 3
    assert cli.main(["run", "--config", str(cfg), "--threads", "0"]) == 2
    assert cli.main([]) == 2


def test_catmap_scenario(tmp_path):
    rep = harness.run(Scenario.load("catmap_ladder").with_overrides(out=tmp_path))
    assert not rep.failed
    assert rep.summary["ratio"] <= 0.55
