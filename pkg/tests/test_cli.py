import json
import subprocess
import sys

import pytest

from memlab.cli import main

SMALL = {"d": 128, "q": 64, "m": 20, "activation": {"kind": "abs"}, "sign_mode": "balanced",
         "seed": 2, "replicates": 2, "n_holdout": 2}


@pytest.fixture
def config(tmp_path, monkeypatch):
    monkeypatch.delenv("MEMLAB_SEED", raising=False)

    def make(**kw):
        raw = dict(SMALL)
        raw.update(kw)
        p = tmp_path / f"cfg{len(list(tmp_path.iterdir()))}.json"
        p.write_text(json.dumps(raw))
        return str(p)

    return make


class TestRun:
    def test_writes_csv_and_report(self, config, tmp_path, capsys):
        out, rep = tmp_path / "o.csv", tmp_path / "r.json"
        code = main(["run", "--config", config(), "--out", str(out), "--json-report", str(rep)])
        assert code in (0, 1)
        lines = out.read_text().splitlines()
        assert len(lines) == 3 and lines[0].startswith("config_hash,seed,replicate")
        assert len(json.loads(rep.read_text())["replicates"]) == 2
        assert "replicate 1:" in capsys.readouterr().out

    def test_zero_step_fails(self, config, tmp_path):
        cfg = config(eta_override=0.0, n_holdout=0, m=200)
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "o.csv")]) == 1

    def test_byte_identical_without_timing(self, config, tmp_path):
        cfg = config()
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["run", "--config", cfg, "--out", str(a), "--no-timing"])
        main(["run", "--config", cfg, "--out", str(b), "--no-timing", "--threads", "2"])
        assert a.read_bytes() == b.read_bytes()

    def test_env_seed(self, config, tmp_path, monkeypatch):
        out = tmp_path / "o.csv"
        monkeypatch.setenv("MEMLAB_SEED", "99")
        main(["run", "--config", config(), "--out", str(out)])
        assert out.read_text().splitlines()[1].split(",")[1] == "99"

    def test_relu_refused_then_allowed(self, config, tmp_path):
        cfg = config(activation={"kind": "relu"})
        out = str(tmp_path / "o.csv")
        assert main(["run", "--config", cfg, "--out", out]) == 2
        assert main(["run", "--config", cfg, "--out", out, "--allow-invalid-activation"]) in (0, 1)

    def test_unknown_key_is_usage_error(self, config, tmp_path, capsys):
        assert main(["run", "--config", config(lr=1), "--out", str(tmp_path / "o.csv")]) == 2
        assert "lr" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o.csv")]) == 2

    def test_violated_assumptions_reported(self, config, tmp_path, capsys):
        main(["run", "--config", config(), "--out", str(tmp_path / "o.csv")])
        assert "q_ge_log4d" in capsys.readouterr().err

    def test_needs_a_source(self):
        with pytest.raises(SystemExit) as info:
            main(["run", "--out", "x.csv"])
        assert info.value.code == 2


class TestSweep:
    def test_grid(self, tmp_path):
        spec = tmp_path / "s.json"
        spec.write_text(json.dumps({"base": dict(SMALL, n_holdout=0), "grid": {"seed": [1, 2]}}))
        out = tmp_path / "o.csv"
        assert main(["sweep", "--config", str(spec), "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 5

    def test_empty(self, tmp_path):
        spec = tmp_path / "s.json"
        spec.write_text(json.dumps({"configs": []}))
        out = tmp_path / "o.csv"
        assert main(["sweep", "--config", str(spec), "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 1

    def test_bad_entry_is_a_failure_row(self, tmp_path):
        spec = tmp_path / "s.json"
        spec.write_text(json.dumps({"configs": [dict(SMALL, q=1000)]}))
        out = tmp_path / "o.csv"
        assert main(["sweep", "--config", str(spec), "--out", str(out)]) == 1
        assert "ConfigError" in out.read_text()


class TestOthers:
    def test_check_lemmas(self, config, tmp_path):
        out = tmp_path / "r.json"
        code = main(["check-lemmas", "--config", config(), "--out", str(out)])
        doc = json.loads(out.read_text())
        assert code == (0 if doc["passed"] else 1)
        assert doc["assumptions"]["q_le_d"] is True

    def test_grad_check_default(self, capsys):
        assert main(["grad-check"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_grad_check_fails_on_coarse_step(self):
        assert main(["grad-check", "--h", "0.5"]) == 1

    def test_plot(self, config, tmp_path):
        csv_path, svg = tmp_path / "o.csv", tmp_path / "o.svg"
        main(["run", "--config", config(), "--out", str(csv_path)])
        assert main(["plot", "--in", str(csv_path), "--x", "replicate", "--y", "mean_margin",
                     "--out", str(svg)]) == 0
        assert svg.read_text().startswith("<?xml")

    def test_plot_missing_column(self, tmp_path):
        p = tmp_path / "o.csv"
        p.write_text("d,y\n1,2\n")
        assert main(["plot", "--in", str(p), "--x", "d", "--y", "zz", "--out", str(tmp_path / "o.svg")]) == 2

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "memlab", "grad-check"], capture_output=True, text=True)
        assert proc.returncode == 0 and "PASS" in proc.stdout
