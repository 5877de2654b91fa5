from __future__ import annotations

import json
import subprocess
import sys

import jsonschema
import pytest

from typeforge.cli import EXIT_CONFIG, EXIT_DEADLOCK, EXIT_FAIL, EXIT_IO, EXIT_OK, main
from typeforge.schema import METRICS_SCHEMA, REPORT_SCHEMA

DEADLOCK = "var a : Int :: allocated[single[on[1]]];\nif (pid() == 0) {\n  (a :: channel[0, 1]) := 3;\n};\n"


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return _write


# -- check ------------------------------------------------------------------------


def test_check_ok(capsys):
    assert main(["check", "listing3"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "listing3.msh: ok"


def test_check_errors(write, capsys):
    assert main(["check", write("bad.msh", "var a : Int :: const;\na := 1;\n")]) == EXIT_FAIL
    assert "read-only" in capsys.readouterr().err
    assert main(["check", write("worse.msh", "var a : Int := ;\n")]) == EXIT_FAIL


def test_check_missing_file(tmp_path, capsys):
    assert main(["check", str(tmp_path / "nope.msh")]) == EXIT_IO
    assert "cannot read" in capsys.readouterr().err


# -- run --------------------------------------------------------------------------


def test_run_listing1_metrics(tmp_path):
    out = tmp_path / "m.json"
    assert main(["run", "listing1", "--procs", "4", "--metrics", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, METRICS_SCHEMA)
    assert doc["procs"] == 4
    assert doc["messages"]["one_sided"]["messages"] == 1


def test_run_on_one_process_sends_nothing(write, capsys):
    text = "var a : Int :: allocated[single[on[0]]];\nvar b : Int := 2;\na := b * 3;\n"
    assert main(["run", write("local.msh", text), "--procs", "1"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert all(v == {"messages": 0, "bytes": 0} for v in doc["messages"].values())


def test_run_deadlock(write, capsys):
    assert main(["run", write("dl.msh", DEADLOCK), "--procs", "2"]) == EXIT_DEADLOCK
    err = capsys.readouterr().err
    assert "deadlock" in err and "deadlock: deadlock" not in err


def test_run_bad_inputs(tmp_path, write, capsys):
    assert main(["run", str(tmp_path / "missing.msh")]) == EXIT_IO
    assert main(["run", "listing1", "--procs", "0"]) == EXIT_IO
    assert main(["run", write("t.msh", "var a : Int := 1 / 0;\n")]) == EXIT_FAIL
    assert main(["run", "listing1"]) == EXIT_FAIL  # on[3] needs four processes
    assert main(["run", "listing1", "--procs", "4", "--metrics", str(tmp_path / "no" / "dir" / "m.json")]) == EXIT_IO


def test_trace_and_metrics_are_reproducible(tmp_path):
    runs = []
    for n in range(2):
        m, t = tmp_path / f"m{n}.json", tmp_path / f"t{n}.log"
        argv = ["run", "listing4", "--procs", "2", "--seed", "5", "--no-timing", "--metrics", str(m), "--trace", str(t)]
        assert main(argv) == EXIT_OK
        runs.append((m.read_bytes(), t.read_bytes()))
    assert runs[0] == runs[1]
    lines = runs[0][1].decode().splitlines()
    assert lines and all(len(line.split()) == 6 for line in lines)


def test_seed_from_environment(tmp_path, monkeypatch):
    def trace(seed_env, flag=()):
        monkeypatch.setenv("TYPEFORGE_SEED", seed_env)
        t = tmp_path / "t.log"
        assert main(["run", "listing5", "--procs", "2", "--no-timing", "--metrics", str(tmp_path / "m.json"),
                     "--trace", str(t), *flag]) == EXIT_OK
        return t.read_text()

    assert trace("7") == trace("0", ["--seed", "7"])
    monkeypatch.setenv("TYPEFORGE_SEED", "x")
    assert main(["run", "listing1"]) == EXIT_IO


def test_dump_field(tmp_path):
    csv = tmp_path / "f.csv"
    assert main(["run", "listing3", "--procs", "2", "--dump-field", str(csv), "--metrics", str(tmp_path / "m")]) == 0
    rows = csv.read_text().splitlines()
    assert len(rows) == 8 * 8 * 8
    assert rows[0] == "0,0,0,0.0"  # later faces overwrite shared edges
    i, j, k, v = rows[3 * 8 + 3].split(",")
    assert (i, j, k) == ("0", "3", "3") and float(v) == 1.0


# -- bench jacobi ----------------------------------------------------------------------


def test_bench_converges(tmp_path, capsys):
    out = tmp_path / "r.json"
    argv = ["bench", "jacobi", "--nx", "8", "--ny", "8", "--nz", "8", "--px", "2", "--mode", "async",
            "--check-versions", "--out", str(out)]
    assert main(argv) == EXIT_OK
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, REPORT_SCHEMA)
    assert doc["config"]["mode"] == "async" and doc["result"]["converged"]
    assert "converged" in capsys.readouterr().err


def test_bench_not_converged(capsys):
    assert main(["bench", "jacobi", "--nx", "6", "--ny", "6", "--nz", "6", "--max-iters", "3"]) == EXIT_FAIL
    assert json.loads(capsys.readouterr().out)["result"]["converged"] is False


@pytest.mark.parametrize(
    "argv",
    [
        ["--mode", "chaotic"],
        ["--px", "0"],
        ["--bc", "x-1"],
        ["--bc", "q-=1"],
        ["--mode", "racy", "--no-halo"],
    ],
)
def test_bench_config_errors(argv, capsys):
    assert main(["bench", "jacobi", *argv]) == EXIT_CONFIG
    assert capsys.readouterr().err


def test_bench_bad_int_exits_with_config_code():
    with pytest.raises(SystemExit) as info:
        main(["bench", "jacobi", "--nx", "eight"])
    assert info.value.code == EXIT_CONFIG


def test_bench_bc_and_dump(tmp_path):
    csv = tmp_path / "f.csv"
    argv = ["bench", "jacobi", "--nx", "5", "--ny", "5", "--nz", "5", "--bc", "y+=2", "--bc", "x-=0",
            "--no-timing", "--out", str(tmp_path / "r.json"), "--dump-field", str(csv)]
    assert main(argv) == EXIT_OK
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["config"]["bc"]["y+"] == 2.0 and doc["config"]["bc"]["x-"] == 0.0
    assert doc["result"]["wall_time_s"] == 0.0
    assert len(csv.read_text().splitlines()) == 125


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "typeforge", "check", "listing1"], capture_output=True, text=True)
    assert proc.returncode == 0 and "ok" in proc.stdout

