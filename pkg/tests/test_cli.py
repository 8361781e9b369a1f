import json
import shutil
import subprocess
import sys

import pytest

from vrdlab import cli
from vrdlab.mitigation import random_trace


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def model(tmp_path):
    p = tmp_path / "model.json"
    p.write_text(json.dumps([{"row": 3, "family": "DiscreteNormal", "mean": 60, "stddev": 6,
                              "grid": {"min": 20, "max": 200, "step": 1}}]))
    return p


def test_esttime(capsys):
    code, out, _ = run(capsys, "esttime", "--hammers", 1000, "--taggon", "tras", "--measurements", 94467)
    assert code == 0
    d = json.loads(out)
    assert d["per_measurement_ns"] == 100631.13 and d["human_readable"] == "9.51 seconds"
    code, out, _ = run(capsys, "esttime", "--hammers", 1000, "--rows", 262144, "--banks", 32, "--parallel", 16,
                       "--measurements", 1000)
    assert json.loads(out)["human_readable"].endswith("hours")


def test_esttime_bad_taggon(capsys):
    code, _, err = run(capsys, "esttime", "--hammers", 10, "--taggon", "soon")
    assert code == 3 and "error" in err


def test_ecc_modes(capsys, tmp_path):
    code, out, _ = run(capsys, "ecc", "--code", "secded", "--ber", 7.6e-5)
    assert code == 0 and set(json.loads(out)) == {"uncorrectable", "undetectable", "detectable_uncorrectable"}
    code, out, _ = run(capsys, "ecc", "--bitflips", 5)
    assert set(json.loads(out)) == {"sec", "secded", "ssc"}
    batch = tmp_path / "b.json"
    batch.write_text(json.dumps([{"name": "a", "ber": 1e-4}, {"name": "b", "bitflips": 5}]))
    code, out, _ = run(capsys, "ecc", "--code", "ssc", "--batch", batch)
    res = json.loads(out)
    assert [r["name"] for r in res] == ["a", "b"] and "ssc" in res[1]["ecc"]
    assert run(capsys, "ecc")[0] == 3


def test_profile_analyze_report(capsys, tmp_path, model):
    out_dir = tmp_path / "camp"
    code, out, _ = run(capsys, "profile", "--model", model, "--out", out_dir, "--iterations", 120,
                       "--seed", 4, "--temps", "C50,C80", "--jobs", 2)
    assert code == 0
    manifest = out_dir / "manifest.json"
    assert out.strip() == str(manifest)
    code, out, _ = run(capsys, "analyze", "--manifest", manifest, "--which", "stats,acf")
    assert code == 0 and set(json.loads(out)) == {"stats", "acf"}
    code, out, _ = run(capsys, "report", "--manifest", manifest)
    figs = json.loads(out)["figures"]
    assert code == 0 and figs and all(f.endswith(".png") for f in figs)
    series = sorted((out_dir / "series").glob("*.csv"))[0]
    code, out, _ = run(capsys, "sample", "--series", series, "--n", "1,10", "--margin", "0.1", "--mc", 200)
    lines = out.strip().splitlines()
    assert lines[0] == "row,N,metric,exact,mc_estimate,mc_stderr" and len(lines) == 7


def test_profile_config_file(capsys, tmp_path, model):
    (tmp_path / "c.json").write_text(json.dumps({"model_file": "model.json", "out": "o", "iterations": 5}))
    code, out, _ = run(capsys, "profile", "--config", tmp_path / "c.json", "--out", tmp_path / "o")
    assert code == 0 and (tmp_path / "o" / "manifest.json").exists()


def test_mitigate(capsys, tmp_path, model):
    trace = tmp_path / "t.csv"
    random_trace(3000, 16, seed=1, hot_rows=2, hot_fraction=0.7).write_csv(trace)
    code, out, _ = run(capsys, "mitigate", "--technique", "para", "--rdt", 1024, "--guardband", 0.5,
                       "--trace", trace, "--seed", 7)
    d = json.loads(out)
    assert code == 0 and d["technique"] == "para" and d["effective_threshold"] == 512
    code, out, _ = run(capsys, "mitigate", "--technique", "prac", "--rdt", 60, "--guardband", "0,0.5",
                       "--trace", trace, "--model", model, "--param", "backoff_refreshes=1")
    outs = json.loads(out)
    assert [o["guardband"] for o in outs] == [0.0, 0.5]
    assert outs[0]["preventive_refreshes"] <= outs[1]["preventive_refreshes"]


def test_exit_codes(capsys, tmp_path, model):
    assert run(capsys, "analyze", "--manifest", tmp_path / "missing.json")[0] == 8
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "analyze", "--manifest", bad)[0] == 6
    assert run(capsys, "profile", "--model", bad, "--out", tmp_path / "x")[0] == 3
    # replay list shorter than the 10-draw bootstrap
    flat = tmp_path / "flat.json"
    flat.write_text(json.dumps([{"row": 0, "family": "Replay", "replay_values": [5] * 3}]))
    assert run(capsys, "profile", "--model", flat, "--out", tmp_path / "y", "--iterations", 5)[0] == 3
    with pytest.raises(SystemExit) as exc:
        cli.main(["esttime"])
    assert exc.value.code == 2


def test_no_bitflip_exit(capsys, tmp_path, model, monkeypatch):
    from vrdlab import campaign
    from vrdlab.errors import NoBitflipError

    def never_flips(state, *a, **k):
        raise NoBitflipError(f"row {state.row_address}: no bitflip")

    monkeypatch.setattr(campaign, "profile_row", never_flips)
    assert run(capsys, "profile", "--model", model, "--out", tmp_path / "o", "--iterations", 3)[0] == 4


@pytest.mark.skipif(shutil.which("vrdlab") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["vrdlab", "ecc", "--code", "sec", "--bitflips", "5"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["detectable_uncorrectable"] is None


def test_module_invocation():
    res = subprocess.run([sys.executable, "-m", "vrdlab.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "esttime" in res.stdout
