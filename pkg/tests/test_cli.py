import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import H_EFF_TWO, J1_TWO, J2_TWO, JX_THREE, JY_THREE, JZ_THREE
from traj_embed import fixtures, io
from traj_embed.cli import DEFAULT_SEED, main
from traj_embed.embedding import Lindblad


def embed(tmp_path, name, *extra):
    out = tmp_path / f"{name}.lb.json"
    assert main(["embed", str(fixtures.path(name)), "--out", str(out), *extra]) == 0
    return out


def test_embed_two_channel(tmp_path, capsys):
    out = embed(tmp_path, "two_channel", "--report", str(tmp_path / "rep.json"))
    lb = io.read_lindblad(out)
    np.testing.assert_allclose(lb.H_eff, H_EFF_TWO, atol=1e-6)
    np.testing.assert_allclose(lb.jumps["1"], J1_TWO, atol=1e-6)
    np.testing.assert_allclose(lb.jumps["2"], J2_TWO, atol=1e-6)
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert rep["ladder"] == [0.01, 0.005, 0.0025]
    assert "memory dimension: 2" in capsys.readouterr().out


def test_embed_three_state(tmp_path):
    lb = io.read_lindblad(embed(tmp_path, "three_state", "--rate", "1"))
    np.testing.assert_allclose(lb.jumps["x"], JX_THREE, atol=1e-6)
    np.testing.assert_allclose(lb.jumps["y"], JY_THREE, atol=1e-6)
    np.testing.assert_allclose(lb.jumps["z"], JZ_THREE, atol=1e-6)


def test_malformed_json_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "hsmm", "symbols": [1,}')
    assert main(["embed", str(bad), "--out", str(tmp_path / "o.json")]) == 1
    assert "line 1" in capsys.readouterr().err


def test_invalid_spec_exit_1(tmp_path):
    doc = io.spec_to_dict(fixtures.two_channel())
    doc["branches"][0]["prob"] = 0.9
    p = tmp_path / "s.json"
    p.write_text(json.dumps(doc))
    assert main(["embed", str(p), "--out", str(tmp_path / "o.json")]) == 1


def test_same_input_and_output_refused(tmp_path):
    spec = tmp_path / "s.json"
    spec.write_bytes(fixtures.path("poisson").read_bytes())
    assert main(["embed", str(spec), "--out", str(spec)]) == 1


def test_infinite_memory_refused(tmp_path):
    p = tmp_path / "mix.json"
    io.write_spec(p, fixtures.mixed_renewal())
    assert main(["embed", str(p), "--out", str(tmp_path / "o.json")]) == 1


def test_measures_three_state(tmp_path, capsys):
    js = tmp_path / "m.json"
    assert main(["measures", "--spec", str(fixtures.path("three_state")), "--json", str(js)]) == 0
    out = capsys.readouterr().out
    assert "1.584963" in out
    m = json.loads(js.read_text())
    assert m["quantum"]["C"] == pytest.approx(1.0, abs=1e-9)
    assert m["classical"]["D"] == pytest.approx(np.log2(3), abs=1e-9)


def test_measures_two_channel(capsys):
    assert main(["measures", "--spec", str(fixtures.path("two_channel"))]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1].split()[-1] == "yes"
    assert float(lines[2].split()[2]) == pytest.approx(0.40417, abs=1e-4)


def test_simulate_then_validate(tmp_path, capsys):
    model = embed(tmp_path, "two_channel")
    ev = tmp_path / "ev.jsonl"
    assert main(["simulate", "--model", str(model), "--trajectories", "1", "--events", "1000",
                 "--out", str(ev)]) == 0
    meta = json.loads((tmp_path / "ev.jsonl.meta.json").read_text())
    assert meta["seed"] == DEFAULT_SEED and meta["events"] == 1000
    assert main(["validate", "--spec", str(fixtures.path("two_channel")), "--events", str(ev),
                 "--report", str(tmp_path / "r.json")]) == 0
    assert "verdict: PASS" in capsys.readouterr().out


def test_validate_fail_exit_2(tmp_path):
    model = embed(tmp_path, "two_channel")
    ev = tmp_path / "ev.jsonl"
    assert main(["simulate", "--model", str(model), "--events", "20000", "--out", str(ev)]) == 0
    wrong = tmp_path / "wrong.json"
    io.write_spec(wrong, fixtures.two_channel(0.75))
    assert main(["validate", "--spec", str(wrong), "--events", str(ev)]) == 2


def test_state_path_export(tmp_path):
    model = embed(tmp_path, "three_state")
    sp = tmp_path / "path.csv"
    assert main(["simulate", "--model", str(model), "--events", "20", "--out", str(tmp_path / "e.csv"),
                 "--state-path", str(sp)]) == 0
    assert sp.read_text().splitlines()[0].endswith("bloch_x,bloch_y,bloch_z")
    assert len(sp.read_text().splitlines()) == 22


def test_events_or_time_required(tmp_path):
    model = embed(tmp_path, "poisson")
    assert main(["simulate", "--model", str(model), "--out", str(tmp_path / "e.jsonl")]) == 1


@pytest.mark.parametrize("name", sorted(fixtures.BUILDERS))
def test_full_pipeline_every_fixture(name, tmp_path):
    model = embed(tmp_path, name)
    ev = tmp_path / "ev.jsonl"
    assert main(["simulate", "--model", str(model), "--events", "2000", "--out", str(ev)]) == 0
    assert main(["validate", "--spec", str(fixtures.path(name)), "--events", str(ev)]) == 0


def test_reverse_two_channel(tmp_path):
    model = embed(tmp_path, "two_channel")
    out = tmp_path / "rev.json"
    assert main(["reverse", "--model", str(model), "--out", str(out)]) == 0
    spec = io.read_spec(out)
    assert spec.branch("1", "1").prob == pytest.approx(0.25, abs=1e-6)
    assert spec.branch("1", "2").dwell.rate == pytest.approx(1.0, abs=1e-6)


def test_reverse_refuses_non_erasing(tmp_path, capsys):
    model = tmp_path / "id.json"
    io.write_lindblad(model, Lindblad(-0.5j * np.eye(2), {"a": np.eye(2)}))
    assert main(["reverse", "--model", str(model), "--out", str(tmp_path / "o.json")]) == 3
    assert "not erasing" in capsys.readouterr().out


def test_non_convergent_exit_4(tmp_path):
    # ladder too coarse for the rates: the rung differences grow
    p = tmp_path / "fast.json"
    io.write_spec(p, fixtures.two_channel(0.25, 400.0, 1.0))
    code = main(["embed", str(p), "--out", str(tmp_path / "o.json"), "--ladder", "0.04", "0.02", "0.01"])
    assert code == 4


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "traj_embed.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("embed", "simulate", "validate", "measures", "reverse"):
        assert cmd in res.stdout
