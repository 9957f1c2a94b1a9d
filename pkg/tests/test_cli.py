import io
import json
import subprocess
import sys

import pytest

from coopt import __version__
from coopt.cli import main

from conftest import FIXTURES

SIMPLE5 = str(FIXTURES / "simple5.ncop")


def run_cli(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


class TestExitCodes:
    def test_solve_fixture(self):
        code, out = run_cli("solve", "--input", SIMPLE5, "--form", "basic", "--lambda", "0.5")
        assert code == 0
        lines = out.splitlines()
        assert lines[0].startswith("# config: form=basic")
        assert lines[1] == "iter,energy,lower_bound,consensus,delta_inf,certified"
        assert any(line.startswith("energy ") for line in lines)

    def test_missing_input_file(self, capsys):
        code, _ = run_cli("solve", "--input", "no/such/file.ncop")
        assert code == 2
        assert "No such file" in capsys.readouterr().err

    def test_usage_error(self, capsys):
        code, _ = run_cli("solve")
        assert code == 1
        assert "--input" in capsys.readouterr().err

    def test_no_subcommand(self):
        assert run_cli()[0] == 1

    def test_invalid_lambda_is_runtime_error(self):
        code, _ = run_cli("solve", "--input", SIMPLE5, "--lambda", "1.5")
        assert code == 2

    def test_version(self):
        code, out = run_cli("--version")
        assert code == 0 and out.startswith(f"coopt {__version__} (python ")


class TestCommands:
    def test_oracle(self):
        code, out = run_cli("oracle", "--input", SIMPLE5)
        assert code == 0
        assert out == "energy 32.0\nassignment 0 2 2 0 2\nvisited 243\n"

    def test_decompose(self):
        code, out = run_cli("decompose", "--input", SIMPLE5, "--kind", "spanning-tree")
        assert code == 0 and "valid" in out

    def test_propagation_matches_fixture(self):
        code, out = run_cli("propagation", "--input", SIMPLE5, "--dump")
        printed = [l for l in (FIXTURES / "simple5_w.txt").read_text().splitlines() if not l.startswith("#")]
        assert code == 0 and out.splitlines() == printed

    def test_weights_file(self):
        code, out = run_cli("solve", "--input", SIMPLE5, "--weights", str(FIXTURES / "simple5_w.txt"),
                            "--lambda", "harmonic")
        assert code == 0
        default = run_cli("solve", "--input", SIMPLE5, "--lambda", "harmonic")[1]
        assert out == default

    def test_bench(self):
        code, out = run_cli("bench", "--suite", "small", "--seed", "7")
        lines = out.splitlines()
        assert code == 0
        assert lines[1] == "instance,n,configurations,energy,oracle,gap,certified"
        assert len(lines) == 22
        for row in lines[2:]:
            _, _, _, energy, oracle, gap, _ = row.split(",")
            assert float(gap) >= 0 and float(energy) >= float(oracle)

    def test_trace_to_file(self, tmp_path):
        path = tmp_path / "trace.csv"
        code, out = run_cli("solve", "--input", SIMPLE5, "--trace", str(path), "--max-iter", "4")
        assert code == 0
        assert path.read_text().count("\n") == 5
        assert "iter,energy" not in out

    def test_stereo_synthetic(self):
        code, out = run_cli("stereo", "--synthetic", "32x32", "--dmax", "8")
        assert code == 0
        energy, bad, _, _ = out.splitlines()[-1].split(",")
        assert float(bad) < 5.0

    def test_stereo_needs_images(self):
        assert run_cli("stereo")[0] == 1


class TestConfig:
    def test_file_defaults_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"max_iter": 3, "lam": "0.25"}))
        code, out = run_cli("solve", "--input", SIMPLE5, "--config", str(cfg))
        assert code == 0
        assert "lambda=constant(0.25)" in out and "max_iter=3" in out
        code, out = run_cli("solve", "--input", SIMPLE5, "--config", str(cfg), "--max-iter", "5")
        assert "max_iter=5" in out

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert run_cli("solve", "--input", SIMPLE5, "--config", str(cfg))[0] == 1


class TestDeterminism:
    @pytest.mark.parametrize(
        "argv",
        [
            ["solve", "--input", SIMPLE5, "--lambda", "harmonic", "--decomposition", "spanning-tree"],
            ["bench", "--suite", "small", "--seed", "3"],
        ],
    )
    def test_repeat_runs_byte_identical(self, argv):
        assert run_cli(*argv)[1] == run_cli(*argv)[1]

    def test_threads_do_not_change_results(self):
        base = ["solve", "--input", SIMPLE5, "--decomposition", "spanning-tree"]
        one = run_cli(*base, "--threads", "1")[1].splitlines()[1:]
        four = run_cli(*base, "--threads", "4")[1].splitlines()[1:]
        assert one == four

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "coopt", "oracle", "--input", SIMPLE5],
            capture_output=True, text=True, check=False,
        )
        assert proc.returncode == 0 and proc.stdout.startswith("energy 32.0")
