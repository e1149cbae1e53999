import csv
import json
import subprocess
import sys

import pytest

from trimix.chain import EventLog
from trimix.cli import main


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_simulate_deterministic(tmp_path):
    args = ["simulate", "--n", "4", "--m", "5", "--horizon", "20", "--replicas", "3", "--seed", "9"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for r in range(3):
        name = f"log_{r:04d}.jsonl"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    log = EventLog.from_jsonl((tmp_path / "a" / "log_0001.jsonl").read_text())
    assert log.config.replica == 1 and log.config.seed == 9


def test_missing_required_is_usage_error(capsys):
    assert main(["simulate", "--n", "4", "--horizon", "3"]) == 2
    assert "usage" in capsys.readouterr().err
    assert main(["no-such-command"]) == 2


def test_size_cap_is_usage_error(capsys):
    assert main(["exact-tv", "--n", "5", "--m", "5", "--t-max", "3"]) == 2
    assert "exceeds" in capsys.readouterr().err


def test_exact_tv_series(tmp_path):
    assert main(["exact-tv", "--n", "3", "--m", "3", "--t-max", "100", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "tv.csv")
    assert len(rows) == 101
    assert float(rows[0]["tv"]) == pytest.approx(1 - 1 / 27)
    tv = [float(r["tv"]) for r in rows]
    assert all(b <= a + 1e-15 for a, b in zip(tv, tv[1:]))


def test_exact_tv_continuous(tmp_path):
    assert main(["exact-tv", "--n", "3", "--m", "3", "--t-max", "2", "--dt", "0.5", "--variant", "continuous",
                 "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "tv.csv")
    assert [float(r["t"]) for r in rows] == [0, 0.5, 1, 1.5, 2]


def test_tmix_list(tmp_path):
    assert main(["tmix", "--n", "3", "--m", "3,5,7", "--out", str(tmp_path)]) == 0
    assert [int(r["t_mix"]) for r in read_csv(tmp_path / "tmix.csv")] == [8, 12, 18]


def test_bounds_integral(tmp_path):
    assert main(["bounds", "--lemma", "integral", "--m-max", "40", "--out", str(tmp_path)]) == 0
    assert all(r["ok"] == "1" for r in read_csv(tmp_path / "integral.csv"))


def test_bounds_q(tmp_path):
    assert main(["bounds", "--lemma", "q", "--n", "4", "--m", "5", "--out", str(tmp_path)]) == 0
    assert len(read_csv(tmp_path / "q_terms.csv")) == 8
    assert json.loads((tmp_path / "schedule.json").read_text())["schema_version"] == 1


def test_observe_backwards_identity(tmp_path):
    code = main(["observe", "--check", "backwards-identity", "--n", "4", "--m", "3", "--replicas", "200",
                 "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "checks.csv")
    assert len(rows) == 200 * 3 and all(r["ok"] == "1" for r in rows)


def test_observe_on_stored_log(tmp_path):
    assert main(["simulate", "--n", "3", "--m", "3", "--horizon", "0.01", "--seed", "1", "--out", str(tmp_path)]) == 0
    log = str(tmp_path / "log_0000.jsonl")
    out = tmp_path / "obs"
    assert main(["observe", "--log", log, "--observable", "hitting", "--y", "0,0,1", "--i", "2",
                 "--out", str(out)]) == 0
    text = (out / "hitting.json").read_text()
    assert "Infinity" not in text
    assert json.loads(text)["T"] is None
    assert main(["observe", "--log", log, "--observable", "corner", "--out", str(out)]) == 0


def test_spectral_ws(capsys):
    assert main(["spectral", "--n", "3", "--m", "3", "--ws", "0,1,0"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["tv"] == pytest.approx(7 / 9) and out["dominated"] is False


def test_config_file_and_env_seed(tmp_path, monkeypatch):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"n": 3, "m": 4, "horizon": 5.0}))
    monkeypatch.setenv("TRIMIX_SEED", "123")
    assert main(["simulate", "--config", str(conf), "--out", str(tmp_path / "o")]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["seeds"]["seed"] == 123 and man["config"]["m"] == 4
    # an explicit flag beats the config file
    assert main(["simulate", "--config", str(conf), "--m", "5", "--out", str(tmp_path / "p")]) == 0
    log = EventLog.from_jsonl((tmp_path / "p" / "log_0000.jsonl").read_text())
    assert log.config.m == 5 and log.config.seed == 123
    conf.write_text(json.dumps({"bogus": 1}))
    assert main(["simulate", "--config", str(conf)]) == 2


def test_manifest_fields(tmp_path):
    assert main(["tmix", "--n", "3", "--m", "4", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert {"command", "argv", "config", "seeds", "code_version", "started", "finished", "outputs", "ok"} <= set(man)
    assert man["ok"] is True and set(man["outputs"]) == {"tmix.csv"}


def test_replay_golden(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--n", "4", "--m", "3", "--horizon", "10", "--replicas", "2", "--seed", "5",
                 "--out", str(out)]) == 0
    assert main(["replay", "--manifest", str(out / "manifest.json"), "--out", str(tmp_path / "r")]) == 0
    rows = read_csv(tmp_path / "r" / "replay.csv")
    assert len(rows) == 2 and all(r["match"] == "1" for r in rows)

    man = json.loads((out / "manifest.json").read_text())
    man["outputs"]["log_0000.jsonl"] = "0" * 64
    (out / "manifest.json").write_text(json.dumps(man))
    assert main(["replay", "--manifest", str(out / "manifest.json"), "--out", str(tmp_path / "s")]) == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "trimix.cli", "tmix", "--n", "2", "--m", "5"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == "n,m,eps,t_mix"
