import csv
import io
import json

import pytest
import yaml

from isoext import __version__
from isoext.cli import OUT_ENV, PROVENANCE, main
from isoext.config import ExperimentConfig, acceptance_config
from isoext.errors import ValidationError

SMALL = {"sampling": {"n_samples": 4000, "n_orbits": 8, "horizons": [100, 1000], "truncation_N": 4,
                      "omega_grid": 64, "word_len": 20, "cap": 2000, "leaf_pairs": 10, "bundle_points": 6,
                      "base_grid": 2, "fiber_grid": 8}}


def write_cfg(tmp_path, d, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(d), encoding="utf-8")
    return str(p)


def test_round_trip_is_byte_identical():
    cfg = ExperimentConfig().validate()
    text = cfg.dumps()
    again = ExperimentConfig.loads(text)
    assert again.dumps() == text and again.hash() == cfg.hash()
    assert acceptance_config().dumps() == text


def test_round_trip_of_edited_config():
    d = ExperimentConfig().validate().to_dict()
    d["cocycle"] = {"kind": "rotation", "components": [{"a0": 0.4, "terms": [[1, 0, 0.3, 0.0]]},
                                                       {"a0": -0.2, "terms": []}, {"a0": 0.7, "terms": []}],
                    "twist": None}
    d["fiber"] = "sphere"
    d["anchor"]["fiber_point"] = [0.0, 0.6, 0.8]
    d["observable"]["vertical"] = [1, 0]
    text = ExperimentConfig.from_dict(d).dumps()
    assert ExperimentConfig.loads(text).dumps() == text


@pytest.mark.parametrize("patch, field", [
    ({"base": {"roof": {"c0": 0.2, "terms": [[1, 0, 0.3, 0.0]]}}}, "base.roof"),
    ({"base": {"matrix": [[1, 1], [0, 1]]}}, "base.matrix"),
    ({"fiber": "torus"}, "fiber"),
    ({"fiber": "sphere"}, "fiber"),
    ({"tolerances": {"holonomy_tol": -1}}, "tolerances.holonomy_tol"),
    ({"sampling": {"cap": 0}}, "sampling.cap"),
    ({"anchor": {"fiber_point": [0.0, 0.0, 1.0]}}, "anchor.fiber_point"),
    ({"bogus": 1}, "bogus"),
    ({"sampling": {"nsamples": 4}}, "nsamples"),
    ({"version": 7}, "version"),
])
def test_validation_names_the_field(patch, field):
    with pytest.raises(ValidationError, match=field.replace(".", r"\.")):
        ExperimentConfig.from_dict(patch)


def test_cli_roof_not_positive_exits_2(tmp_path, capsys):
    path = write_cfg(tmp_path, {"base": {"roof": {"c0": 0.25, "terms": [[1, 0, 0.3, 0.0]]}}})
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 2
    assert "base.roof" in capsys.readouterr().err


def test_cli_usage_errors(tmp_path, capsys):
    assert main(["no-such-command"]) == 2
    assert main([]) == 2
    assert main(["holonomy", "--config", str(tmp_path / "missing.yaml")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("base: [unclosed", encoding="utf-8")
    assert main(["holonomy", "--config", str(bad)]) == 2
    capsys.readouterr()


def test_cli_print_default_and_version(capsys):
    assert main(["--print-default"]) == 0
    assert capsys.readouterr().out == acceptance_config().dumps()
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def read_csv(path):
    return list(csv.reader(io.StringIO(path.read_text(encoding="utf-8"))))


@pytest.mark.parametrize("op", ["holonomy", "parry", "correlate", "spectrum"])
def test_cli_reports_are_reproducible(tmp_path, op, capsys):
    cfg = write_cfg(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([op, "--config", cfg, "--out", str(a)]) == 0
    assert main([op, "--config", cfg, "--out", str(b)]) == 0
    csvs = sorted(a.glob("*.csv"))
    assert csvs
    for p in csvs:
        assert p.read_bytes() == (b / p.name).read_bytes()
        rows = read_csv(p)
        assert tuple(rows[0][:3]) == PROVENANCE and len(rows) > 1
    doc = json.loads((a / f"{op}.json").read_text())
    h = ExperimentConfig.loads(yaml.safe_dump(SMALL)).hash()
    assert doc["config_hash"] == h and doc["tool_version"] == __version__ and doc["status"] == "ok"
    assert ExperimentConfig.from_dict(doc["config"]).hash() == h
    for p in csvs:
        assert all(r[0] == h and r[2] == op for r in read_csv(p)[1:])
    capsys.readouterr()


def test_cli_seed_override_changes_monte_carlo_only(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["correlate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["correlate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "7"]) == 0
    ra = read_csv(tmp_path / "a" / "correlate_correlation.csv")
    rb = read_csv(tmp_path / "b" / "correlate_correlation.csv")
    assert rb[1][1] == "7" and ra[1][1] != "7"
    assert [r[3:] for r in ra[1:]] != [r[3:] for r in rb[1:]]
    capsys.readouterr()


def test_cli_worker_count_does_not_change_numbers(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["correlate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["correlate", "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    ra = read_csv(tmp_path / "a" / "correlate_correlation.csv")
    rb = read_csv(tmp_path / "b" / "correlate_correlation.csv")
    # the hash covers the worker count; the numbers do not depend on it
    assert [r[3:] for r in ra] == [r[3:] for r in rb]
    capsys.readouterr()


def test_cli_output_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["parry", "--config", cfg, "--format", "json"]) == 0
    assert [p.name for p in (tmp_path / "env").iterdir()] == ["parry.json"]
    capsys.readouterr()


def test_cli_psi_check_rejects_non_invariant_and_accepts_constant(tmp_path, capsys):
    d = dict(SMALL)
    assert main(["psi-check", "--config", write_cfg(tmp_path, d), "--out", str(tmp_path / "o")]) == 2
    d["observable"] = {"char": [0, 0], "vertical": None, "height_mode": 0, "base": {"a0": 1.0, "terms": []}}
    assert main(["psi-check", "--config", write_cfg(tmp_path, d, "c.yaml"), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "psi_check_defects.csv")
    assert {r[3]: float(r[4]) for r in rows[1:]}["path_defect"] == 0
    capsys.readouterr()


def test_cli_all_diagnostics_run(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL)
    for op in ["simulate", "classify-group", "bundle", "counterexample", "anosov-alternative"]:
        assert main([op, "--config", cfg, "--out", str(tmp_path / "o")]) == 0, op
    assert (tmp_path / "o" / "anosov_alternative.json").exists()
    capsys.readouterr()
