import json
from pathlib import Path

import pytest

from flames import cli


def run_cli(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture()
def event_file(tmp_path):
    path = tmp_path / "input.evt"
    assert (
        run_cli(
            "gen", "--poisson", 30, "--duration", 0.4, "--channels", 16,
            "--geometry", "4x4", "--seed", 5, "--out", path,
        )
        == 0
    )
    return path


class TestGen:
    def test_periodic_four_events(self, tmp_path):
        out = tmp_path / "a.evt"
        assert run_cli("gen", "--periodic", 0.005, "--duration", 0.02, "--out", out) == 0
        lines = [
            line for line in out.read_text().splitlines() if not line.startswith("#")
        ]
        assert len(lines) == 4

    def test_manifest_written(self, tmp_path):
        out = tmp_path / "a.evt"
        run_cli("gen", "--periodic", 0.01, "--duration", 0.05, "--seed", 9, "--out", out)
        manifest = json.loads((tmp_path / "a.evt.manifest.json").read_text())
        assert manifest["command"] == "gen"
        assert manifest["seed"] == 9
        assert manifest["outputs"] == [str(out)]

    def test_generator_flag_required(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("gen", "--duration", 0.02, "--out", tmp_path / "a.evt")
        assert exc.value.code == 2

    def test_byte_determinism(self, tmp_path):
        a, b = tmp_path / "a.evt", tmp_path / "b.evt"
        run_cli("gen", "--poisson", 50, "--duration", 1.0, "--seed", 3, "--out", a)
        run_cli("gen", "--poisson", 50, "--duration", 1.0, "--seed", 3, "--out", b)
        assert a.read_bytes() == b.read_bytes()


class TestRun:
    def test_basic_run(self, event_file, tmp_path):
        out = tmp_path / "runout"
        assert run_cli("run", "--input", event_file, "--out", out, "--seed", 1) == 0
        assert (out / "scores.csv").exists()
        assert (out / "diagnostics.csv").exists()
        assert (out / "diagnostics.png").exists()
        assert (out / "manifest.json").exists()

    def test_missing_input_exit_1(self, tmp_path):
        code = run_cli(
            "run", "--input", tmp_path / "nope.evt", "--out", tmp_path / "o"
        )
        assert code == 1

    def test_invalid_config_exit_2_names_field(self, event_file, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"variant": "tiny", "mode": "sideways"}))
        code = run_cli(
            "run", "--input", event_file, "--config", cfg, "--out", tmp_path / "o"
        )
        assert code == 2
        assert "mode" in capsys.readouterr().err

    def test_ablation_flags_in_diagnostics(self, event_file, tmp_path):
        out = tmp_path / "ablate"
        assert (
            run_cli(
                "run", "--input", event_file, "--variant", "tiny",
                "--no-sa-hippo", "--no-dendrite", "--out", out,
            )
            == 0
        )
        header = (out / "diagnostics.csv").read_text().splitlines()[0]
        assert "f_identity=1" in header
        assert "dendrite_branches=1" in header

    def test_config_file_round_trip(self, event_file, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"variant": "tiny", "num_ssm_blocks": 1}))
        out = tmp_path / "cfgout"
        assert run_cli("run", "--input", event_file, "--config", cfg, "--out", out) == 0
        resolved = json.loads((out / "config_resolved.json").read_text())
        assert resolved["num_ssm_blocks"] == 1

    def test_rerun_byte_identical(self, event_file, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert run_cli("run", "--input", event_file, "--out", out, "--seed", 2) == 0
        for name in (
            "scores.csv",
            "diagnostics.csv",
            "diagnostics.png",
            "config_resolved.json",
        ):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


class TestVerify:
    def test_taylor_suite_passes(self, tmp_path):
        out = tmp_path / "v"
        code = run_cli(
            "verify", "--suite", "taylor", "--trials", 30, "--out", out
        )
        assert code == 0
        report = json.loads((out / "taylor_bound.json").read_text())
        assert report["violations"] == 0
        assert (out / "taylor_bound.png").exists()

    def test_fault_injection_exit_1(self, tmp_path):
        code = run_cli(
            "verify", "--suite", "taylor", "--trials", 30,
            "--inject-fault", "taylor-order", "--out", tmp_path / "v",
        )
        assert code == 1

    def test_all_suites_four_reports(self, tmp_path):
        out = tmp_path / "vall"
        code = run_cli(
            "verify", "--suite", "all", "--n", 6, "--trials", 12, "--out", out
        )
        assert code == 0
        reports = sorted(p.name for p in out.glob("*.json") if p.name != "manifest.json")
        assert reports == [
            "lyapunov.json",
            "norm_bound.json",
            "taylor_bound.json",
            "ultimate_bound.json",
        ]

    def test_unknown_suite_exit_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("verify", "--suite", "bogus", "--out", tmp_path / "v")
        assert exc.value.code == 2

    def test_verify_byte_identical(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            run_cli("verify", "--suite", "norm", "--trials", 10, "--out", out)
        assert (out_a / "norm_bound.json").read_bytes() == (
            out_b / "norm_bound.json"
        ).read_bytes()
        assert (out_a / "norm_bound.png").read_bytes() == (
            out_b / "norm_bound.png"
        ).read_bytes()


class TestBench:
    def test_small_bench(self, tmp_path):
        out = tmp_path / "b"
        code = run_cli(
            "bench", "--sizes", "64,128", "--rank", 8, "--reps", 3, "--out", out
        )
        assert code == 0
        text = (out / "bench.csv").read_text()
        assert "# warning" in text  # reps below 31
        data_rows = [
            line for line in text.splitlines() if line and not line.startswith("#")
        ]
        assert data_rows[0] == "op,N,r,median_ns"
        assert len(data_rows) == 7  # header + 2 sizes x 3 ops
        assert (out / "bench.png").exists()

    def test_no_warning_at_full_reps(self, tmp_path):
        out = tmp_path / "b31"
        run_cli("bench", "--sizes", "64", "--reps", 31, "--out", out)
        assert "# warning" not in (out / "bench.csv").read_text()


class TestRecall:
    def test_small_recall(self, tmp_path):
        out = tmp_path / "r"
        code = run_cli(
            "recall", "--delays", "0", "--trials", 32, "--out", out
        )
        assert code == 0
        text = (out / "recall.csv").read_text()
        assert text.splitlines()[0].startswith("delay,")
        assert (out / "recall.png").exists()
        assert (out / "manifest.json").exists()

    def test_recall_byte_identical(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            run_cli("recall", "--delays", "0", "--trials", 16, "--out", out)
            outs.append((out / "recall.csv").read_bytes())
        assert outs[0] == outs[1]


class TestNoFigures:
    def test_flag_suppresses_png(self, event_file, tmp_path):
        out = tmp_path / "nofig"
        run_cli("run", "--input", event_file, "--out", out, "--no-figures")
        assert not (out / "diagnostics.png").exists()
        assert (out / "scores.csv").exists()


class TestEnvironment:
    def test_thread_cap_env(self, event_file, tmp_path, monkeypatch):
        monkeypatch.setenv("FLAMES_THREADS", "1")
        out = tmp_path / "threads"
        assert run_cli("run", "--input", event_file, "--out", out) == 0
        assert (out / "scores.csv").exists()

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli("--version")
        assert exc.value.code == 0
        assert capsys.readouterr().out.strip()
