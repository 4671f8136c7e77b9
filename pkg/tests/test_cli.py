"""Command-line interface: emit / run / sweep.

Most tests call ``main(argv)`` in-process and inspect captured stdout and
stderr; one test goes through a real subprocess to cover the module entry
point. Emitted text is cross-checked by re-parsing it and by byte-comparing
a second emission (emission must be idempotent).
"""

from __future__ import annotations

import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from dynoptc.bench.sweep import CSV_COLUMNS
from dynoptc.cli import main
from dynoptc.lang import parse

CORPUS = Path(__file__).parent / "corpus"

TALLY_COUNTS = [1, 0, 3, 7, 0, 2, 5, 0]
TALLY_OUT = [c * (c + 1) // 2 for c in TALLY_COUNTS]


@pytest.fixture
def tally(tmp_path):
    """A runnable program plus a dataset for its extern-free globals."""
    src = tmp_path / "tally.mk"
    shutil.copy(CORPUS / "tally.mk", src)
    ds = tmp_path / "counts.ds"
    ds.write_text("counts int 8\n" + " ".join(map(str, TALLY_COUNTS)) + "\n")
    return src, ds


def run_cli(*argv):
    return main([str(a) for a in argv])


def buffer_line(out: str, name: str) -> list[int] | None:
    for line in out.splitlines():
        if line.startswith(f"buffer {name} = "):
            return [int(v) for v in line.split(" = ", 1)[1].split()]
    return None


# ---------------------------------------------------------------------------
# emit
# ---------------------------------------------------------------------------


def test_emit_writes_default_output_path(tally, capsys):
    src, _ = tally
    assert run_cli("emit", src, "--threshold", "4") == 0
    err = capsys.readouterr().err
    out_path = src.with_name("tally.out.mk")
    assert out_path.exists()
    assert f"wrote {out_path}" in err
    text = out_path.read_text()
    assert "const _THRESHOLD = 4;" in text
    assert "site=main:25 pass=threshold action=transformed" in err


def test_emit_to_stdout_reparses(tally, capsys):
    src, _ = tally
    assert run_cli("emit", src, "--cfactor", "2", "--emit", "-") == 0
    out = capsys.readouterr().out
    program = parse(out)
    assert program.has_kernel("child")
    assert "_CFACTOR" in out


def test_emission_is_idempotent(tally, tmp_path, capsys):
    src, _ = tally
    first = tmp_path / "first.mk"
    assert run_cli("emit", src, "--threshold", "4", "--cfactor", "2",
                   "--agg", "block", "--emit", first) == 0
    capsys.readouterr()
    second = tmp_path / "second.mk"
    assert run_cli("emit", first, "--emit", second) == 0
    capsys.readouterr()
    assert first.read_bytes() == second.read_bytes()


def test_emit_prints_glue_description(tally, capsys):
    src, _ = tally
    assert run_cli("emit", src, "--agg", "multiblock", "--group-size", "2",
                   "--emit", "-") == 0
    err = capsys.readouterr().err
    assert "glue: aggregate child -> child_agg in main (multiblock, group=2)" \
        in err
    assert "pass=aggregate action=transformed (granularity=multiblock, " \
        "group=2)" in err


def test_explain_analysis_lists_sites(tally, capsys):
    src, _ = tally
    assert run_cli("emit", src, "--explain-analysis", "--emit", "-") == 0
    err = capsys.readouterr().err
    assert "main:25: launch child" in err
    assert "threads = counts[" in err


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def test_run_reports_and_buffers(tally, capsys):
    src, ds = tally
    assert run_cli("run", src, "--dataset", ds, "--buffers") == 0
    out = capsys.readouterr().out
    assert "num_launches=5" in out       # one child per nonzero count
    assert "host_launches=1" in out
    assert "memory_digest=" in out
    assert buffer_line(out, "out") == TALLY_OUT


@pytest.mark.parametrize("knobs", [
    (),
    ("--threshold", "4"),
    ("--threshold", "inf"),
    ("--cfactor", "2"),
    ("--agg", "block"),
    ("--agg", "multiblock", "--group-size", "2"),
    ("--agg", "grid"),
    ("--threshold", "4", "--cfactor", "2", "--agg", "grid"),
    ("--checked", "--agg", "multiblock"),
    ("--schedule-seed", "9", "--agg", "block"),
])
def test_run_output_invariant_under_knobs(tally, capsys, knobs):
    src, ds = tally
    assert run_cli("run", src, "--dataset", ds, "--buffers", *knobs) == 0
    assert buffer_line(capsys.readouterr().out, "out") == TALLY_OUT


def test_run_without_dataset_uses_zeroed_globals(tally, capsys):
    src, _ = tally
    assert run_cli("run", src, "--buffers") == 0
    out = capsys.readouterr().out
    assert "num_launches=0" in out
    assert buffer_line(out, "out") == [0] * 8


def test_run_threshold_inf_serializes_every_launch(tally, capsys):
    src, ds = tally
    assert run_cli("run", src, "--dataset", ds, "--threshold", "inf") == 0
    assert "num_launches=0" in capsys.readouterr().out


def test_run_emits_alongside(tally, tmp_path, capsys):
    src, ds = tally
    emitted = tmp_path / "transformed.mk"
    assert run_cli("run", src, "--dataset", ds, "--threshold", "4",
                   "--emit", emitted) == 0
    assert "const _THRESHOLD = 4;" in emitted.read_text()


def test_run_appends_csv_rows(tally, tmp_path, capsys):
    src, ds = tally
    report = tmp_path / "runs.csv"
    for _ in range(2):
        assert run_cli("run", src, "--dataset", ds,
                       "--report", report) == 0
    lines = report.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3
    assert lines[1] == lines[2]
    assert lines[1].startswith("tally,")


def test_run_cost_override_changes_makespan(tally, capsys):
    src, ds = tally

    def makespan(*extra):
        assert run_cli("run", src, "--dataset", ds, *extra) == 0
        out = capsys.readouterr().out
        return int(next(l for l in out.splitlines()
                        if l.startswith("makespan=")).split("=")[1])

    assert makespan("--cost", "launch_latency=0,launch_service=1") \
        < makespan()


def test_run_schedule_seed_keeps_outputs(tally, capsys):
    src, ds = tally
    outs = set()
    for seed in (1, 2, 3):
        assert run_cli("run", src, "--dataset", ds, "--buffers",
                       "--schedule-seed", str(seed)) == 0
        outs.add(tuple(buffer_line(capsys.readouterr().out, "out")))
    assert outs == {tuple(TALLY_OUT)}


# ---------------------------------------------------------------------------
# run-mode conventions and failures
# ---------------------------------------------------------------------------


def test_run_rejects_entry_with_parameters(capsys):
    rc = run_cli("run", CORPUS / "rowsum.mk")
    assert rc == 1
    err = capsys.readouterr().err
    assert "parameter-less entry kernel" in err
    assert "'main' takes 4 parameter(s)" in err


def test_run_rejects_missing_entry(tally, capsys):
    src, _ = tally
    assert run_cli("run", src, "--entry", "nosuch") == 1
    assert "no kernel named 'nosuch'" in capsys.readouterr().err


def test_unreadable_file_fails(capsys):
    assert run_cli("run", "/nonexistent/prog.mk") == 1
    assert "cannot read" in capsys.readouterr().err


def test_validation_failure_prints_diagnostics(tmp_path, capsys):
    bad = tmp_path / "bad.mk"
    bad.write_text("kernel void main() { launch nosuch<<<1, 1>>>(); }\n")
    assert run_cli("run", bad) == 1
    err = capsys.readouterr().err
    assert f"{bad}:1:22: error: launch of undefined kernel 'nosuch'" in err
    assert "failed validation" in err


def test_syntax_error_prints_location(tmp_path, capsys):
    bad = tmp_path / "bad.mk"
    bad.write_text("kernel void main( {\n")
    assert run_cli("run", bad) == 1
    assert f"{bad}:1:" in capsys.readouterr().err


def test_unknown_flag_exits_nonzero(tally, capsys):
    src, _ = tally
    assert run_cli("run", src, "--bogus") == 2
    assert "--bogus" in capsys.readouterr().err


def test_agg_threshold_requires_block(tally, capsys):
    src, _ = tally
    assert run_cli("emit", src, "--agg", "multiblock",
                   "--agg-threshold", "4", "--emit", "-") == 1
    assert "aggregation threshold requires block granularity" in \
        capsys.readouterr().err


def test_bad_cost_override(tally, capsys):
    src, ds = tally
    assert run_cli("run", src, "--dataset", ds, "--cost", "warp=1") == 1
    assert "unknown cost parameter 'warp'" in capsys.readouterr().err


def test_dataset_kind_mismatch(tally, tmp_path, capsys):
    src, _ = tally
    ds = tmp_path / "bad.ds"
    ds.write_text("counts float 2\n1.0 2.0\n")
    assert run_cli("run", src, "--dataset", ds) == 1
    assert "is float but the program declares int" in \
        capsys.readouterr().err


def test_dataset_unknown_buffer(tally, tmp_path, capsys):
    src, _ = tally
    ds = tmp_path / "bad.ds"
    ds.write_text("mystery int 1\n7\n")
    assert run_cli("run", src, "--dataset", ds) == 1
    assert "dataset buffer 'mystery' has no matching global" in \
        capsys.readouterr().err


def test_unbound_extern_rejected_before_running(tmp_path, capsys):
    prog = tmp_path / "ext.mk"
    prog.write_text(
        "global int data[];\n"
        "kernel void main() { int x = data[0]; }\n")
    ds = tmp_path / "empty.ds"
    ds.write_text("")
    assert run_cli("run", prog, "--dataset", ds) == 1
    assert "extern buffers never bound by the dataset: data" in \
        capsys.readouterr().err


def test_bad_threshold_flag_value(tally, capsys):
    src, _ = tally
    assert run_cli("run", src, "--threshold", "many") == 2
    assert "integer or 'inf'" in capsys.readouterr().err


def test_bad_agg_flag_value(tally, capsys):
    src, _ = tally
    assert run_cli("run", src, "--agg", "warp") == 2
    assert "granularity" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def test_sweep_stdout_default_grid(capsys):
    assert run_cli("sweep", "--bench", "bfs", "--dataset", "hand") == 0
    out = capsys.readouterr().out
    lines = out.splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 13
    assert all(line.endswith(",") for line in lines[1:])  # empty error col


def test_sweep_report_file_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert run_cli("sweep", "--bench", "manylaunch",
                       "--dataset", "sizes:48:seed2",
                       "--thresholds", "0,32,inf", "--cfactors", "1,4",
                       "--aggs", "none,grid", "--report", path) == 0
    err = capsys.readouterr().err
    assert f"wrote {a} (12 rows)" in err
    assert a.read_bytes() == b.read_bytes()


def test_sweep_custom_grid_row_count(capsys):
    assert run_cli("sweep", "--bench", "manylaunch",
                   "--dataset", "sizes:32:seed1",
                   "--thresholds", "0", "--aggs", "none,block") == 0
    assert len(capsys.readouterr().out.splitlines()) == 3


def test_sweep_unknown_bench(capsys):
    assert run_cli("sweep", "--bench", "mst", "--dataset", "hand") == 1
    assert "unknown benchmark 'mst'" in capsys.readouterr().err


def test_sweep_bad_dataset_spec(capsys):
    assert run_cli("sweep", "--bench", "bfs", "--dataset", "zzz:1:seed1") == 1
    assert "unknown dataset kind 'zzz'" in capsys.readouterr().err


def test_sweep_failing_row_sets_exit_code(capsys):
    rc = run_cli("sweep", "--bench", "manylaunch",
                 "--dataset", "sizes:32:seed1", "--thresholds", "0",
                 "--aggs", "multiblock", "--agg-threshold", "4")
    assert rc == 1
    captured = capsys.readouterr()
    assert "aggregation threshold requires block granularity" in captured.out
    assert "row 0/1/multiblock" in captured.err


def test_module_entry_point(tally):
    src, ds = tally
    proc = subprocess.run(
        [sys.executable, "-m", "dynoptc.cli", "run", str(src),
         "--dataset", str(ds)],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "num_launches=5" in proc.stdout
