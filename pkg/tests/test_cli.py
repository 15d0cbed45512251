import json

import numpy as np
import pytest

from ilrd import acceptance as acc, cli, maps


def test_config_round_trip():
    cfg = cli.parse_config(["limit", "--gamma", "0.6", "--n", "500", "--replicates", "100"])
    assert cli.RunConfig.from_json(cfg.to_json()) == cfg
    assert cfg.to_json() == cli.RunConfig.from_json(cfg.to_json()).to_json()
    assert cfg.stem == "limit_g0.6_n500_s0_w1"


def test_config_file_and_flag_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"gamma": 0.6, "n": 50, "seed": 4}))
    cfg = cli.parse_config(["simulate", "--config", str(path), "--n", "70"])
    assert (cfg.gamma, cfg.n, cfg.seed) == (0.6, 70, 4)
    path.write_text(json.dumps({"colour": 1}))
    with pytest.raises(cli.UsageError):
        cli.parse_config(["simulate", "--config", str(path)])


def test_output_directory_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("ILRD_OUT", str(tmp_path))
    assert cli.parse_config(["simulate"]).out == str(tmp_path)


@pytest.mark.parametrize("argv", [
    ["simulate", "--gamma", "1.5"],
    ["bogus"],
    ["simulate", "--n", "0"],
    ["limit", "--gamma", "0.4"],
    ["limit", "--replicates", "10"],
    ["trend", "--delta", "0.5"],
    ["covdecay", "--n", "1000"],
    ["maxineq", "--x", "4"],
])
def test_usage_errors(tmp_path, argv, capsys):
    out = tmp_path / "run"
    assert cli.run(argv + ["--out", str(out)] if argv != ["bogus"] else argv) == 1
    assert "usage error" in capsys.readouterr().err
    assert not out.exists()


def test_simulate_outputs(tmp_path):
    assert cli.run(["simulate", "--gamma", "0.75", "--n", "200", "--seed", "3", "--plot",
                    "--out", str(tmp_path)]) == 0
    stem = tmp_path / "simulate_g0.75_n200_s3"
    orbit = maps.Orbit.load(f"{stem}.ilrd")
    assert np.array_equal(orbit.values, maps.generate_orbit(0.75, 200, seed=3).values)
    assert (tmp_path / "simulate_g0.75_n200_s3.csv").read_text().startswith("x\n")
    assert (tmp_path / "simulate_g0.75_n200_s3.svg").read_text().startswith("<svg")
    summary = json.loads((tmp_path / "simulate_g0.75_n200_s3.json").read_text())
    assert summary["experiment"] == "simulate" and summary["seed"] == 3
    assert summary["params"]["n"] == 200


def test_simulate_is_reproducible(tmp_path):
    argv = ["simulate", "--n", "100", "--seed", "1"]
    cli.run(argv + ["--out", str(tmp_path / "a")])
    cli.run(argv + ["--out", str(tmp_path / "b")])
    name = "simulate_g0.75_n100_s1"
    for ext in (".csv", ".ilrd"):
        assert (tmp_path / "a" / (name + ext)).read_bytes() == (tmp_path / "b" / (name + ext)).read_bytes()
    a, b = (json.loads((tmp_path / d / (name + ".json")).read_text()) for d in "ab")
    # only the recorded output directory differs
    a["params"].pop("out")
    b["params"].pop("out")
    assert a == b


def test_limit_small_run(tmp_path):
    code = cli.run(["limit", "--n", "1000", "--replicates", "100", "--bins", "16384",
                    "--baseline-n", "100", "--out", str(tmp_path)])
    assert code in (0, 2)
    summary = json.loads((tmp_path / "limit_g0.75_n1000_s0_w1.json").read_text())
    assert "ks_to_reference" in json.dumps(summary["metrics"])
    # not the acceptance configuration, so gates carry no criterion number
    assert all(g["criterion"] == 0 for g in summary["gates"])


def test_report_without_inputs(tmp_path, capsys):
    assert cli.run(["report", "--out", str(tmp_path)]) == 1
    assert "missing inputs" in capsys.readouterr().err
    assert cli.run(["report", "--out", str(tmp_path / "nowhere")]) == 1


def _fabricate(out, failing=None):
    files = cli.expected_files(out)
    for k, paths in files.items():
        for p in paths:
            ok = not (k == failing)
            gate = acc.Gate(k, p.stem, (acc.holds("made_up", ok),))
            p.write_text(json.dumps({"gates": [gate.to_dict()]}))


def test_report_all_passing(tmp_path, capsys):
    _fabricate(tmp_path)
    assert cli.run(["report", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip().endswith("PASS")
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["summary"] == "PASS"
    assert all(doc["criteria"].values())
    assert (tmp_path / "report.md").exists()


def test_report_names_failing_criterion(tmp_path):
    _fabricate(tmp_path, failing=8)
    assert cli.run(["report", "--out", str(tmp_path)]) == 2
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["summary"].startswith("FAIL") and acc.TITLES[8] in doc["summary"]
    assert doc["criteria"]["8"] is False and doc["criteria"]["5"] is True
