import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from mrof import Field, make_grid, parse_manifold, read_field, write_field
from mrof.cli import run
from mrof.solver import SolveReport, TRACE_HEADER
from mrof.verify import StudyReport


@pytest.fixture
def sphere_input(tmp_path):
    rng = np.random.default_rng(0)
    S = parse_manifold("sphere:2")
    g = make_grid("interval:48")
    t = 0.6 * g.coords[:, 0]
    arc = np.column_stack([np.cos(t), np.sin(t), np.zeros_like(t)])
    f = S.exp(arc, 0.05 * S.random_tangent(rng, arc))
    path = tmp_path / "f.json"
    write_field(path, Field(S, g, f))
    return path


def denoise(inp, out, *extra):
    return run(["denoise", "--manifold", "sphere:2", "--grid", "interval:48", "--input", str(inp),
                "--lambda", "4", "--schedule", "default", "--out", str(out), *extra])


class TestDenoise:
    def test_writes_outputs(self, sphere_input, tmp_path):
        out = tmp_path / "u.json"
        assert denoise(sphere_input, out) == 0
        u = read_field(out)
        assert u.grid.spec == "interval:48"
        doc = json.loads((tmp_path / "u.report.json").read_text())
        assert len(doc["stages"]) == 6
        reps = [SolveReport.from_json(s) for s in doc["stages"]]
        assert all(r.converged for r in reps)
        assert (tmp_path / "u.trace.csv").read_text().splitlines()[0] == ",".join(TRACE_HEADER)

    def test_byte_identical_reruns(self, sphere_input, tmp_path):
        for d in ("a", "b"):
            (tmp_path / d).mkdir()
            assert denoise(sphere_input, tmp_path / d / "u.json", "--threads", "1") == 0
        for name in ("u.json", "u.report.json", "u.trace.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_floats_round_trip(self, sphere_input, tmp_path):
        out = tmp_path / "u.json"
        denoise(sphere_input, out)
        doc = json.loads((tmp_path / "u.report.json").read_text())
        again = json.loads(json.dumps(doc))
        assert again == doc
        u = read_field(out)
        write_field(tmp_path / "v.json", u)
        assert (tmp_path / "v.json").read_bytes() == out.read_bytes()

    def test_inline_and_file_schedules(self, sphere_input, tmp_path):
        sched = '[[0.1, 0.0, 0.0], {"eps": 0.01}]'
        assert denoise(sphere_input, tmp_path / "a.json", "--schedule", sched) == 0
        (tmp_path / "s.json").write_text(sched)
        assert denoise(sphere_input, tmp_path / "b.json", "--schedule", str(tmp_path / "s.json")) == 0
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_single_stage_without_schedule(self, sphere_input, tmp_path):
        args = ["denoise", "--input", str(sphere_input), "--lambda", "2", "--eps", "0.05",
                "--out", str(tmp_path / "u.json"), "--report", str(tmp_path / "r.json"),
                "--trace", str(tmp_path / "t.csv")]
        assert run(args) == 0
        assert len(json.loads((tmp_path / "r.json").read_text())["stages"]) == 1

    @pytest.mark.parametrize("extra", [
        ["--manifold", "hyperbolic:2"],
        ["--grid", "interval:10"],
        ["--schedule", "[[0.01, 0, 0], [0.1, 0, 0]]"],
        ["--schedule", "[[0.0, 0, 0]]"],
        ["--schedule", "not-a-file.json"],
        ["--schedule", "[oops"],
    ])
    def test_usage_errors(self, sphere_input, tmp_path, extra, capsys):
        args = ["denoise", "--input", str(sphere_input), "--lambda", "4", "--out", str(tmp_path / "u.json")]
        assert run(args + extra) == 2
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and err[0].startswith("mrof: error:")

    def test_missing_and_bad_input(self, tmp_path):
        assert run(["denoise", "--input", str(tmp_path / "nope.json"), "--lambda", "1", "--out", "x"]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert run(["denoise", "--input", str(bad), "--lambda", "1", "--out", "x"]) == 2
        bad.write_text('{"manifold": "sphere:2"}')
        assert run(["denoise", "--input", str(bad), "--lambda", "1", "--out", "x"]) == 2

    def test_negative_lambda(self, sphere_input, tmp_path):
        assert run(["denoise", "--input", str(sphere_input), "--lambda", "-1", "--out", str(tmp_path / "u")]) == 2


class TestVerify:
    def test_convexity_exit_zero(self, tmp_path):
        out = tmp_path / "r.json"
        code = run(["verify", "convexity", "--manifold", "hyperbolic:2", "--grid", "circle:16", "--trials", "20",
                    "--seed", "7", "--out", str(out), "--csv", str(tmp_path / "r.csv")])
        assert code == 0
        rep = StudyReport.from_json(json.loads(out.read_text()))
        assert rep.passed and len(rep.cases) == 20
        assert (tmp_path / "r.csv").read_text().startswith("case,")

    def test_failing_study_exits_one(self, tmp_path):
        code = run(["verify", "lipschitz", "--sizes", "32,128", "--lambda", "8", "--out", str(tmp_path / "r.json")])
        assert code == 1

    def test_unknown_study(self, capsys):
        assert run(["verify", "nonsense"]) == 2

    def test_sweep_needs_npc_target(self):
        assert run(["verify", "convexity", "--manifold", "sphere:2", "--trials", "1"]) == 2

    def test_env_threads(self, tmp_path, monkeypatch):
        outs = []
        for threads in ("1", "2"):
            monkeypatch.setenv("MROF_THREADS", threads)
            out = tmp_path / f"r{threads}.json"
            assert run(["verify", "retraction", "--trials", "10", "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        monkeypatch.setenv("MROF_THREADS", "many")
        assert run(["verify", "ellipticity", "--trials", "10"]) == 2

    def test_stdout_report(self, capsys):
        assert run(["verify", "ellipticity", "--trials", "100", "--seed", "2"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["study"] == "ellipticity" and doc["passed"]


class TestOracleCompare:
    def test_gap(self, tmp_path):
        out = tmp_path / "o.json"
        assert run(["oracle-compare", "--grid", "interval:64", "--lambda", "8", "--seed", "1", "--signals", "4",
                    "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["max_gap"] <= 1e-3 and len(doc["cases"]) == 4

    def test_needs_interval(self):
        assert run(["oracle-compare", "--grid", "circle:8", "--lambda", "8"]) == 2


def test_console_script(tmp_path):
    exe = shutil.which("mrof")
    cmd = [exe] if exe else [sys.executable, "-m", "mrof.cli"]
    out = subprocess.run(cmd + ["verify", "ellipticity", "--trials", "50"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "verify ellipticity: PASS" in out.stderr
    out = subprocess.run(cmd + ["denoise"], capture_output=True, text=True)
    assert out.returncode == 2
