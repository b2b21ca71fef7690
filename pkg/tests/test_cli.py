import json
import subprocess
import sys

import pytest
from hypothesis import given, settings, strategies as st

from bubbling.cli import ConfigError, RunConfig, main


def run(tmp_path, *args):
    rc = main([*args, "--out", str(tmp_path), "--no-cache"])
    files = sorted(p.name for p in tmp_path.iterdir())
    return rc, files


def result(tmp_path, stem):
    (js,) = [p for p in tmp_path.iterdir() if p.name.startswith(stem) and p.suffix == ".json"]
    return json.loads(js.read_text())["result"]


@given(st.floats(0.1, 9.0), st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3), st.integers(1, 64))
@settings(max_examples=30, deadline=None)
def test_config_round_trip(g, q, K):
    c = RunConfig(command="robin", gamma=g, q=q, K=K)
    text = c.to_json()
    back = RunConfig.from_json(text)
    assert back == c
    assert back.to_json() == text


def test_config_key_ignores_output_location():
    a = RunConfig(command="eig", out="a")
    b = RunConfig(command="eig", out="b", jobs=4)
    assert a.key() == b.key()
    assert a.key() != RunConfig(command="eig", K=9).key()
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"command": "eig", "bogus": 1})
    with pytest.raises(ConfigError):
        RunConfig(command="eig", q=[0, 0]).validate()


@pytest.mark.golden
def test_gammastar_ball_centre(tmp_path):
    rc, files = run(tmp_path, "gammastar")
    assert rc == 0
    r = result(tmp_path, "gammastar")
    assert r["gamma_star"] == pytest.approx(2.4674, abs=1e-3)
    assert r["admissible"] is True


def test_eig_cube(tmp_path):
    rc, files = run(tmp_path, "eig", "--set", 'domain={"kind": "box", "resolution": 24}', "--set", "K=2")
    assert rc == 0
    assert result(tmp_path, "eig")["lambda1"] == pytest.approx(29.608, rel=5e-3)
    assert any(f.endswith(".csv") for f in files)


def test_nonlocal_round_trip(tmp_path):
    rc, _ = run(tmp_path, "nonlocal", "--set", "T=2.0")
    assert rc == 0
    assert result(tmp_path, "nonlocal")["rel_error"] <= 0.02


def test_config_file_and_dotted_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"domain": {"kind": "unit-ball", "mode": "radial", "resolution": 201},
                               "gammas": [1.0, 2.0]}))
    out = tmp_path / "out"
    rc = main(["robin", "--config", str(cfg), "--set", "domain.resolution=401", "--out", str(out)])
    assert rc == 0
    (js,) = out.glob("robin-*.json")
    rec = json.loads(js.read_text())
    assert rec["config"]["domain"]["resolution"] == 401
    assert len(rec["result"]["R"]) == 2


def test_deterministic_csv(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["robin", "--set", "method=series", "--out", str(d)]) == 0
    (ca,), (cb,) = a.glob("*.csv"), b.glob("*.csv")
    assert ca.name == cb.name
    assert ca.read_bytes() == cb.read_bytes()


def test_exit_codes(tmp_path, capsys):
    assert main(["eig", "--set", "bogus=1", "--out", str(tmp_path)]) == 2
    assert main(["nope"]) == 2
    assert main(["evolve", "--set", 'evolve={"scheme": "rk4"}', "--out", str(tmp_path)]) == 2
    # resonant gamma is a numerical failure with a diagnostic record
    rc = main(["robin", "--set", "method=series", "--set", "gammas=[12.0]", "--out", str(tmp_path)])
    assert rc == 3
    (err,) = tmp_path.glob("robin-*-error.json")
    assert json.loads(err.read_text())["error"] == "ResonanceError"


def test_module_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "bubbling", "gammastar", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert p.returncode == 0
    assert json.loads(p.stdout)["admissible"] is True
