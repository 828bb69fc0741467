import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from qlinode import data_path
from qlinode.cli import ExperimentConfig, main, run_experiment, validate_problem

RELAX = str(data_path("problems", "diagonal_relaxation.json"))


def write(tmp_path: Path, name: str, obj) -> Path:
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return path


class TestMethodsCommand:
    def test_analyze_json(self, tmp_path):
        out = tmp_path / "bdf2.json"
        assert main(["methods", "analyze", "bdf2", "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["order"] == 2
        assert rep["stable_at_infinity"] is True

    def test_raster_files(self, tmp_path):
        ppm = tmp_path / "euler.ppm"
        csv = tmp_path / "euler.csv"
        assert main(["methods", "analyze", "euler", "--raster", str(ppm), "--resolution", "20", "--out", str(tmp_path / "a.json")]) == 0
        assert ppm.read_bytes().startswith(b"P")
        assert main(["methods", "analyze", "euler", "--raster", str(csv), "--resolution", "20", "--out", str(tmp_path / "b.json")]) == 0
        assert len(csv.read_text().splitlines()) >= 20

    def test_method_file(self, tmp_path):
        out = tmp_path / "ab2.json"
        assert main(["methods", "analyze", str(data_path("methods", "adams_bashforth2.json")), "--out", str(out)]) == 0
        assert json.loads(out.read_text())["order"] == 2

    def test_unknown_method(self, capsys):
        assert main(["methods", "analyze", "rk4"]) == 1
        assert "rk4" in capsys.readouterr().err


class TestSolveCommands:
    def test_encode(self, tmp_path):
        out = tmp_path / "enc.json"
        assert main(["encode", "--problem", RELAX, "--method", "euler", "--nt", "4", "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["block_pattern"][1][:2] == ["M", "I"]
        assert rep["block_pattern"][3][2:4] == ["-I", "I"]

    def test_encode_odd_nt(self, capsys):
        assert main(["encode", "--problem", RELAX, "--method", "bdf2", "--nt", "7"]) == 1

    def test_reference_solve(self, tmp_path):
        out = tmp_path / "hist.csv"
        assert main(["reference", "solve", "--problem", RELAX, "--method", "bdf2", "--nt", "8", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 10
        assert lines[1].split(",")[1:] == ["1", "1"]

    def test_qlsa_run_needs_seed(self):
        with pytest.raises(SystemExit):
            main(["qlsa", "run", "--problem", RELAX, "--method", "bdf2", "--epsilon", "1e-2"])

    def test_qlsa_run_deterministic(self, tmp_path):
        outs = [tmp_path / "a.json", tmp_path / "b.json"]
        for o in outs:
            argv = ["qlsa", "run", "--problem", RELAX, "--method", "bdf2", "--epsilon", "1e-2", "--seed", "7", "--nt", "32", "--trials", "10", "--out", str(o)]
            assert main(argv) == 0
        assert outs[0].read_bytes() == outs[1].read_bytes()
        rep = json.loads(outs[0].read_text())
        assert 0 <= rep["p_time"] <= 1

    def test_qlsa_estimate(self, tmp_path):
        out = tmp_path / "est.json"
        assert main(["qlsa", "estimate", "--problem", RELAX, "--method", "bdf3", "--epsilon", "1e-3", "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["final_calls"] > 0 and rep["N_t"] % 2 == 0


class TestAnalyzeCommand:
    def test_kappa(self, tmp_path):
        assert main(["analyze", "kappa", "--problem", RELAX, "--method", "euler", "--nt-sweep", "16,32,64", "--out-dir", str(tmp_path)]) == 0
        fit = json.loads((tmp_path / "kappa_fit.json").read_text())["fit"]
        assert 0.7 <= fit["exponent"] <= 1.3
        assert (tmp_path / "kappa.csv").read_text().startswith("N_t,dt,value,bound,ratio")

    def test_probe_needs_seed(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["analyze", "probe", "--problem", RELAX, "--method", "euler", "--out-dir", str(tmp_path)])

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("QLINODE_OUTPUT_DIR", str(tmp_path / "env"))
        assert main(["analyze", "norm", "--problem", RELAX, "--method", "bdf2", "--nt-sweep", "16,32,64"]) == 0
        assert (tmp_path / "env" / "norm.csv").exists()


class TestValidate:
    def test_ok(self, capsys):
        assert main(["validate", RELAX]) == 0
        assert "ok:" in capsys.readouterr().out

    def test_sparsity_violation(self, tmp_path):
        path = write(tmp_path, "p.json", {"A": [[-1, 1], [0, -1]], "b": [0, 0], "x_in": [1, 0], "delta_t": 1, "s": 1})
        res = validate_problem(path)
        assert not res.ok
        assert any("row 0" in e for e in res.errors)

    def test_defective_advisory(self, tmp_path):
        path = write(tmp_path, "p.json", {"A": [[-1, 10], [0, -1]], "b": [0, 0], "x_in": [1, 0], "delta_t": 1})
        res = validate_problem(path)
        assert res.ok
        assert any("diagonalisable" in a for a in res.advisories)

    def test_parse_error_line(self, tmp_path, capsys):
        path = write(tmp_path, "p.json", '{\n  "A": [[-1]],\n  "b": [0]\n  "x_in": [1]\n}')
        assert main(["validate", str(path)]) == 1
        assert "p.json:4:" in capsys.readouterr().out

    def test_missing_keys(self, tmp_path):
        res = validate_problem(write(tmp_path, "p.json", {"A": [[-1]]}))
        assert len(res.errors) == 3


class TestRunConfig:
    def _copy_config(self, tmp_path, name):
        cfg = json.loads(data_path("configs", name).read_text())
        prob = tmp_path / "problem.json"
        shutil.copy(data_path("configs", cfg["problem"]).resolve(), prob)
        cfg["problem"] = "problem.json"
        return write(tmp_path, "config.json", cfg)

    @pytest.mark.parametrize("name", ["euler_small.json", "error_sweep.json"])
    def test_shipped_configs(self, tmp_path, name):
        cfg_path = self._copy_config(tmp_path, name)
        assert main(["run", str(cfg_path), "--out-dir", str(tmp_path / "out")]) == 0
        assert any((tmp_path / "out").iterdir())

    def test_repeat_is_byte_identical(self, tmp_path):
        cfg_path = self._copy_config(tmp_path, "euler_small.json")
        for d in ("a", "b"):
            assert main(["run", str(cfg_path), "--out-dir", str(tmp_path / d)]) == 0
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert "qlsa.json" in names and "encode.json" in names
        for n in names:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n

    def test_hash_tracks_tolerances(self):
        base = ExperimentConfig(problem=RELAX, method="bdf2", seed=1)
        other = ExperimentConfig(problem=RELAX, method="bdf2", seed=1, tolerances={"fit_window": 0.25})
        moved = ExperimentConfig(problem=RELAX, method="bdf2", seed=1, output_dir="elsewhere")
        assert base.config_hash() != other.config_hash()
        assert base.config_hash() == moved.config_hash()

    def test_stochastic_needs_seed(self, tmp_path):
        cfg = ExperimentConfig(problem=RELAX, method="bdf2", pipeline="probe", output_dir=str(tmp_path))
        with pytest.raises(ValueError, match="seed"):
            run_experiment(cfg)

    def test_bad_sweep(self, tmp_path):
        cfg = ExperimentConfig(problem=RELAX, method="bdf3", nt_sweep=(4, 8, 16), pipeline="norm", output_dir=str(tmp_path))
        with pytest.raises(ValueError, match="nt_sweep"):
            run_experiment(cfg)


def test_console_script(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "qlinode.cli", "methods", "analyze", "trapezoidal"],
        capture_output=True,
        text=True,
        check=True,
    )
    assert json.loads(proc.stdout)["order"] == 2
