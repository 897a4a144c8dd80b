import json

import pytest

from hyperfractal_dtn.cli import main
from hyperfractal_dtn.fitting import hyperfractal_table, write_segments_csv


def _read_json(path):
    return json.loads(path.read_text())


def test_bounds_json(tmp_path, capsys):
    assert main(["bounds", "--d-F", "3", "--n", "200", "--h", "0.06", "--speed-kmh", "40"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["bounds"]["upper_direct"]["value"] == pytest.approx(96.0)
    assert doc["config"]["n"] == 200 and doc["config"]["command"] == "bounds"


def test_generate_counts_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["generate", "--d-F", "3", "--n", "1200", "--seed", "7", "--out", str(a)]) == 0
    census = json.loads(capsys.readouterr().out)
    assert main(["generate", "--d-F", "3", "--n", "1200", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert len(lines) == 1201 and "config" in json.loads(lines[0])
    assert census["records"] == 1200
    assert census["census"]["total_busy"] <= 2 * (2 ** 6 - 1)


def test_simulate_same_street_and_snapshots(tmp_path):
    pop = tmp_path / "pop.jsonl"
    pop.write_text('{"id": 0, "orientation": "H", "level": 0, "index": 0, "position": 0.2, "direction": 1, "speed": 0.01}\n'
                   '{"id": 1, "orientation": "H", "level": 0, "index": 0, "position": 0.6, "direction": 1, "speed": 0.01}\n')
    out = tmp_path / "sim"
    assert main(["simulate", "--population", str(pop), "--source", "0", "--h", "0.06",
                 "--snapshot-times", "0.01,0.1", "--out-dir", str(out)]) == 0
    doc = _read_json(out / "result.json")
    assert doc["summary"]["broadcast_time"] == pytest.approx(0.06)
    rows = [l for l in (out / "snapshots.csv").read_text().splitlines() if not l.startswith("#")]
    assert rows[0] == "t,id,orientation,level,index,position,infected"
    assert len(rows) - 1 == 2 * 2


def test_simulate_rerun_identical(tmp_path):
    args = ["simulate", "--d-F", "3", "--n", "300", "--seed", "3", "--snapshot-times", "1,2"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    for name in ("result.json", "infection_times.csv", "snapshots.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d_F": 3.0, "n": 400, "h": 0.06}))
    assert main(["bounds", "--config", str(cfg), "--n", "200"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["config"]["n"] == 200
    assert doc["bounds"]["upper_direct"]["value"] == pytest.approx(96.0)


def test_fit_fixture_and_curve(tmp_path, capsys):
    src = tmp_path / "t.csv"
    src.write_text(write_segments_csv(hyperfractal_table(3.0, levels=8)))
    curve = tmp_path / "curve.csv"
    assert main(["fit", "--input", str(src), "--curve-out", str(curve)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["fit"]["d_F_hat"] == pytest.approx(3.0, abs=0.05)
    assert curve.read_text().splitlines()[0] == "xi,lambda"


def test_input_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("segment_id,street_hint,length_km,density_veh_per_km\na,,1,2\nb,,oops,3\n")
    assert main(["fit", "--input", str(bad)]) == 2
    assert "line 3" in capsys.readouterr().err
    assert main(["generate", "--d-F", "1.5"]) == 2
    assert main(["bounds", "--config", str(tmp_path / "missing.json")]) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text('{"bogus": 1}')
    assert main(["bounds", "--config", str(cfg)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--n-list", "a,b"])
    assert exc.value.code == 2


def test_sweep_csv(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--d-F-list", "3,2.5", "--n-list", "200,100", "--replications", "3",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# config=")
    assert lines[1].split(",")[:4] == ["d_F", "n", "replications", "mean_T"]
    keys = [(float(l.split(",")[0]), int(l.split(",")[1])) for l in lines[2:]]
    assert keys == sorted(keys)


def test_snapshots_command(tmp_path):
    out = tmp_path / "snap"
    assert main(["snapshots", "--d-F", "5.33", "--n", "300", "--seed", "1", "--snapshot-times", "2,4",
                 "--out-dir", str(out)]) == 0
    assert (out / "snapshots.csv").exists()
    assert _read_json(out / "teleport.json")["teleport"]
