import json
from pathlib import Path

import pytest

from phaselock.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_equilibria_json(capsys):
    code, out, _ = run(["equilibria", str(CONFIGS / "leadlag_coexist.json")], capsys)
    d = json.loads(out)
    assert code == 0 and len(d["equilibria"]) == 2 and d["hold_in"] == 1000.0


def test_cycles_json(capsys):
    code, out, _ = run(["cycles", str(CONFIGS / "leadlag_coexist.json")], capsys)
    d = json.loads(out)
    assert code == 0
    assert [c["class"] for c in d["cycles"]] == ["Stable", "Unstable"]
    assert set(d["cycles"][0]) == {"s", "x_star", "period", "multiplier", "class"}


def test_simulate_outputs(tmp_path, capsys):
    code, _, _ = run(["simulate", str(CONFIGS / "leadlag_coexist.json"), "--out", str(tmp_path),
                      "--cycles"], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert [t["outcome"] for t in summary["trajectories"]] == ["Cycle", "Lock"]
    svg = (tmp_path / "portrait.svg").read_text()
    assert "stroke-dasharray" in svg and svg.count("<circle") == 2
    header = (tmp_path / "trajectory_0.csv").read_text().splitlines()[0]
    assert header == "t,theta_delta,x_0"


def test_pullin_leadlag(capsys):
    code, out, _ = run(["pullin", "--a", "1.0", "--alpha", "30", "--beta", "30", "--kvco", "100",
                        "--tol", "0.5"], capsys)
    d = json.loads(out)
    assert code == 0 and d["status"] == "Bounded" and 100 - d["omega_pullin"] <= 0.5


def test_pullin_pi_exceeds(capsys):
    code, out, _ = run(["pullin", "--config", str(CONFIGS / "pi.json")], capsys)
    assert code == 0 and json.loads(out)["status"] == "ExceedsSearchLimit"


def test_sweep_csv(tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"schema": 1, "alpha": 40.0, "beta": 40.0, "a_values": [0.2, 1.0],
                                "K_values": [100.0], "rel_tol": 0.01}))
    code, _, _ = run(["sweep", str(grid), "--out", str(tmp_path / "o"), "--svg"], capsys)
    lines = (tmp_path / "o" / "pullin.csv").read_text().splitlines()
    assert code == 0
    assert lines[0] == "a,kvco,omega_pullin,normalized,status"
    assert len(lines) == 3 and lines[2].startswith("1,100,")
    assert (tmp_path / "o" / "pullin.svg").exists()


def test_lyapunov_check(capsys):
    code, out, _ = run(["lyapunov-check", "--grid", "100", "--inits", "3"], capsys)
    d = json.loads(out)
    assert code == 0
    assert set(d) >= {"grid_size", "max_vdot", "violations", "convergence"}
    assert d["convergence"] == "pass" and d["violations"] == []


def test_signal_check(capsys):
    code, out, _ = run(["signal-check", "--samples", "2000"], capsys)
    d = json.loads(out)
    assert code == 0 and d["pass"] and d["max_relative_residual"] <= 1e-12


def test_config_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema": 1, "filter": {"type": "pi", "tau1": 1, "tau2": 1},
                               "K_vco": 1, "omega_free": 0, "bogus": 3}))
    code, _, err = run(["equilibria", str(bad)], capsys)
    assert code == 1 and "bogus" in err
    code, _, err = run(["pullin", "--kvco", "10"], capsys)
    assert code == 1 and "--a" in err
    code, _, _ = run(["simulate", str(CONFIGS / "pi.json"), "--out", str(tmp_path), "--t-end",
                      "-1"], capsys)
    assert code == 1


def test_numerical_failure_exit_2(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "pi.json").read_text())
    cfg["integrator"] = {"rel_tol": 1e-15, "abs_tol": 1e-300}
    cfg["simulate"]["inits"] = [[0.0, 0.2]]
    p = tmp_path / "stiff.json"
    p.write_text(json.dumps(cfg))
    code, _, err = run(["simulate", str(p), "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and "underflow" in err


def test_usage_error_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as info:
        main(["nonsense"])
    assert info.value.code == 2


def test_simulate_twice_identical(tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["simulate", str(CONFIGS / "leadlag_fig3.json"), "--out", str(tmp_path / d)]) == 0
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
