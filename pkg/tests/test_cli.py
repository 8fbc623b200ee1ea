import json

import pytest

from delaystack.cli import main

SIM = {"system": "example_1_8", "run": {"horizon": 2, "substeps_per_step": 8}}


def write(tmp_path, doc, name="scn.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_simulate_writes_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", write(tmp_path, SIM), "-o", str(out)]) == 0
    rows = (out / "trajectory.csv").read_text().splitlines()
    assert rows[0] == "t,x1_0,x2_0"
    assert "1.0,1.5,1.5" in rows
    assert (out / "jumps.txt").read_text().split() == ["0.0", "1.0"]
    assert (out / "trajectory.svg").read_text().lstrip().startswith("<?xml")
    run = json.loads((out / "run.json").read_text())
    assert run["status"] == "completed" and run["t_end"] == 2.0


def test_outputs_are_byte_identical(tmp_path):
    scn = write(tmp_path, SIM)
    for d in ("a", "b"):
        assert main(["simulate", scn, "-o", str(tmp_path / d)]) == 0
    for f in ("trajectory.csv", "jumps.txt", "trajectory.svg", "run.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_blow_up_exit_code(tmp_path):
    scn = write(tmp_path, {"system": "riccati", "run": {"horizon": 1, "substeps_per_step": 64}})
    assert main(["simulate", scn, "-o", str(tmp_path / "o")]) == 2
    run = json.loads((tmp_path / "o" / "run.json").read_text())
    assert run["status"] == "blew_up" and 0.45 < run["blowup"]["t"] < 0.55


def test_certificate_failure_exit_code(tmp_path):
    scn = write(tmp_path, {"system": "example_4_19", "r": 0.5})
    assert main(["certify", scn, "-o", str(tmp_path / "o")]) == 3
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["pass"] is False and rep["margin"] < 0


def test_certify_report_is_deterministic(tmp_path):
    scn = write(tmp_path, {"system": "example_4_19", "r": 1.0, "b": 0.2})
    assert main(["certify", scn, "-o", str(tmp_path / "a")]) == 0
    assert main(["certify", scn, "-o", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1
    assert main(["simulate", str(tmp_path / "missing.json"), "-o", str(tmp_path)]) == 1
    assert main(["sweep", write(tmp_path, SIM), "--param", "r", "--values", "", "-o", str(tmp_path)]) == 1
    assert "empty" in capsys.readouterr().err


def test_scenario_error_names_path(tmp_path, capsys):
    scn = write(tmp_path, {"system": "example_1_8", "run": {"horizon": 0}})
    assert main(["simulate", scn, "-o", str(tmp_path / "o")]) == 1
    assert "run.horizon" in capsys.readouterr().err


def test_sweep_simulate_and_certify(tmp_path):
    scn = write(tmp_path, SIM)
    assert main(["sweep", scn, "--param", "r", "--values", "0.5,0.25", "--mode", "simulate",
                 "-o", str(tmp_path / "s")]) == 0
    lines = (tmp_path / "s" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "r,status,t_end,x1_final_norm,x2_final_norm,exit"
    assert len(lines) == 3
    cscn = write(tmp_path, {"system": "example_4_1", "a": 1.0, "r": 0.5,
                            "certify": {"checks": ["small_gain"], "options": {"small_gain": {"n_samples": 50}}}},
                 "c.json")
    assert main(["sweep", cscn, "--param", "c", "--values", "1.5,3", "-o", str(tmp_path / "c")]) == 3
    rows = (tmp_path / "c" / "sweep.csv").read_text().splitlines()[1:]
    assert [r.split(",")[1] for r in rows] == ["false", "true"]


def test_transform_output(tmp_path):
    doc = {"system": {"kind": "neutral", "form": "bellman", "n": 1, "r": 0.5, "tau": 0.5,
                      "f": ["-x_0 + 0.5*y"], "taps": {"y": "xdot_0(-1)"}},
           "run": {"horizon": 1}}
    assert main(["transform", write(tmp_path, doc), "-o", str(tmp_path / "t")]) == 0
    text = (tmp_path / "t" / "transform.txt").read_text()
    assert "x1(t) = x(t),  x2(t) = x'(t)" in text
    assert "n1 = 1, n2 = 1" in text


def test_reproduce_1_8(tmp_path):
    assert main(["reproduce", "ex1_8", "-o", str(tmp_path)]) == 0
    assert (tmp_path / "summary.txt").exists() and (tmp_path / "report.json").exists()
