"""Command-line front end.

Three subcommands share the transformation knobs:

* ``emit``  — parse a ``.mk`` file, apply the enabled passes, and write the
  transformed source (manifest and host-glue notes go to stderr).
* ``run``   — transform, then simulate.  The program must define a
  parameter-less entry kernel (``main`` by default); the launch
  configuration is taken from the integer constants ``_GRID`` and
  ``_BLOCK`` when present.  The report is printed as ``key=value`` lines
  and can be appended to a CSV.
* ``sweep`` — run a benchmark across a grid of configurations and emit the
  sweep CSV (one row per configuration, errors isolated per row).

All failures (unreadable files, validation errors, bad knob combinations,
simulation traps, output mismatches) print a diagnostic to stderr and
return a nonzero exit status.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .analysis import explain_sites
from .bench import BenchConfig, sweep as bench_sweep
from .bench.sweep import CSV_COLUMNS, render_csv, write_csv
from .lang import LangError, parse, print_program, validate
from .passes import GRANULARITIES, INF_THRESHOLD
from .pipeline import CANONICAL_ORDER, GlueRunner, TransformResult, transform
from .sim import CostParams, SimTrap, load_dataset, parse_cost_overrides

DEFAULT_GRID = 1
DEFAULT_BLOCK = 32


class CliError(Exception):
    """User-facing failure; the message is printed and the exit code is 1."""


# -- shared flag plumbing --------------------------------------------------------


def _threshold_value(text: str) -> int:
    if text.strip().lower() in ("inf", "infinity"):
        return INF_THRESHOLD
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"threshold must be an integer or 'inf', got {text!r}") from None


def _int_list(text: str) -> list[int]:
    return [_threshold_value(t) for t in text.split(",") if t.strip()]


def _agg_value(text: str) -> str | None:
    value = text.strip().lower()
    if value in ("", "none"):
        return None
    if value not in GRANULARITIES:
        raise argparse.ArgumentTypeError(
            f"aggregation granularity must be one of "
            f"{', '.join(GRANULARITIES)} or 'none', got {text!r}")
    return value


def _agg_list(text: str) -> list[str | None]:
    return [_agg_value(t) for t in text.split(",") if t.strip()]


def _add_pass_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("transformation knobs")
    g.add_argument("--threshold", type=_threshold_value, default=0,
                   metavar="N",
                   help="serialize child grids smaller than N threads "
                        "(0 disables, 'inf' serializes everything)")
    g.add_argument("--cfactor", type=int, default=1, metavar="F",
                   help="thread-coarsening factor for child kernels "
                        "(1 disables)")
    g.add_argument("--agg", type=_agg_value, default=None,
                   metavar="GRANULARITY",
                   help="aggregate child launches at 'block', 'multiblock' "
                        "or 'grid' granularity ('none' disables)")
    g.add_argument("--group-size", type=int, default=4, metavar="G",
                   help="blocks per aggregation group for multiblock "
                        "granularity (default 4)")
    g.add_argument("--agg-threshold", type=int, default=0, metavar="N",
                   help="launch children of at least N threads directly "
                        "instead of aggregating (block granularity only)")
    g.add_argument("--product-fallback", action="store_true",
                   help="when the child-count heuristic misses, fall back "
                        "to grid*block as the thread count")
    g.add_argument("--entry", default="main", metavar="KERNEL",
                   help="host-launched entry kernel (default 'main')")
    g.add_argument("--pass-order", default=CANONICAL_ORDER,
                   help=argparse.SUPPRESS)
    p.add_argument("--explain-analysis", action="store_true",
                   help="print per-launch-site analysis results to stderr")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynoptc",
        description="Optimize and simulate kernels that use dynamic "
                    "parallelism.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_emit = sub.add_parser(
        "emit", help="transform a source file and write the result")
    p_emit.add_argument("source", help="input .mk file")
    _add_pass_flags(p_emit)
    p_emit.add_argument("--emit", metavar="PATH", default=None,
                        help="output path ('-' for stdout; default: "
                             "<source stem>.out.mk next to the input)")

    p_run = sub.add_parser(
        "run", help="transform a source file and simulate it")
    p_run.add_argument("source", help="input .mk file")
    _add_pass_flags(p_run)
    p_run.add_argument("--dataset", metavar="PATH", default=None,
                       help="buffer-initializer file bound to globals "
                            "before the run")
    p_run.add_argument("--cost", metavar="K=V,...", default="",
                       help="cost-model overrides, e.g. launch_latency=800")
    p_run.add_argument("--checked", action="store_true",
                       help="enable the fence/publication checker")
    p_run.add_argument("--schedule-seed", type=int, default=None, metavar="S",
                       help="randomize the block/thread interleaving")
    p_run.add_argument("--buffers", action="store_true",
                       help="include final buffer contents in the report")
    p_run.add_argument("--emit", metavar="PATH", default=None,
                       help="also write the transformed source to PATH")
    p_run.add_argument("--report", metavar="CSV", default=None,
                       help="append the run as a CSV row (sweep schema)")

    p_sweep = sub.add_parser(
        "sweep", help="run a benchmark across a configuration grid")
    p_sweep.add_argument("--bench", required=True,
                         help="benchmark name (bfs, sssp, manylaunch)")
    p_sweep.add_argument("--dataset", required=True, metavar="SPEC",
                         help="dataset spec, e.g. powerlaw:10000:seed1")
    p_sweep.add_argument("--report", metavar="CSV", default=None,
                         help="write the CSV here instead of stdout")
    p_sweep.add_argument("--thresholds", type=_int_list,
                         default=[0, 32, INF_THRESHOLD], metavar="N,...",
                         help="threshold values to sweep (default 0,32,inf)")
    p_sweep.add_argument("--cfactors", type=_int_list, default=[1],
                         metavar="F,...",
                         help="coarsening factors to sweep (default 1)")
    p_sweep.add_argument("--aggs", type=_agg_list,
                         default=[None, "block", "multiblock", "grid"],
                         metavar="G,...",
                         help="aggregation granularities to sweep "
                              "(default none,block,multiblock,grid)")
    p_sweep.add_argument("--group-size", type=int, default=4, metavar="G")
    p_sweep.add_argument("--agg-threshold", type=int, default=0, metavar="N")
    p_sweep.add_argument("--cost", metavar="K=V,...", default="",
                         help="cost-model overrides for every row")
    p_sweep.add_argument("--no-verify", action="store_true",
                         help="skip checking outputs against the serial "
                              "reference")
    return parser


# -- shared steps ----------------------------------------------------------------


def _load_program(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise CliError(f"cannot read '{path}': {e.strerror or e}") from None
    program = parse(text, source_name=path)
    diags = validate(program)
    for d in diags:
        print(d.render(), file=sys.stderr)
    if any(d.severity == "error" for d in diags):
        raise CliError(f"'{path}' failed validation")
    return program


def _transform(program, args) -> TransformResult:
    result = transform(program,
                       threshold=args.threshold,
                       cfactor=args.cfactor,
                       agg=args.agg,
                       group_size=args.group_size,
                       agg_threshold=args.agg_threshold,
                       entry=args.entry,
                       order=args.pass_order,
                       product_fallback=args.product_fallback)
    for entry in result.manifest:
        print(entry.render(), file=sys.stderr)
    for glue in result.glues:
        print(f"glue: {glue.describe()}", file=sys.stderr)
    return result


def _explain(program) -> None:
    lines = explain_sites(program)
    if not lines:
        lines = ["no launch sites"]
    for line in lines:
        print(line, file=sys.stderr)


def _write_emitted(text: str, path: str | None, source: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    if path is None:
        src = Path(source)
        path = str(src.with_name(src.stem + ".out.mk"))
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise CliError(f"cannot write '{path}': {e.strerror or e}") from None
    print(f"wrote {path}", file=sys.stderr)


def _parse_cost(text: str) -> CostParams:
    try:
        return parse_cost_overrides(text)
    except ValueError as e:
        raise CliError(str(e)) from None


# -- subcommands -----------------------------------------------------------------


def _cmd_emit(args) -> int:
    program = _load_program(args.source)
    if args.explain_analysis:
        _explain(program)
    result = _transform(program, args)
    _write_emitted(print_program(result.program), args.emit, args.source)
    return 0


def _glue_table_names(glues) -> set[str]:
    names = set()
    for g in glues:
        b = g.buffers
        names.update(n for n in (b.ctr, b.done, b.maxb, b.gdim, b.bdim) if n)
        names.update(n for n, _kind in b.args)
    return names


def _bind_dataset(machine, path: str, armed: set[str]) -> None:
    data = load_dataset(path)
    for name, (kind, values) in data.items():
        declared = machine.buffer_kinds.get(name)
        if declared is None:
            raise CliError(
                f"dataset buffer '{name}' has no matching global")
        if declared != kind:
            raise CliError(
                f"dataset buffer '{name}' is {kind} but the program "
                f"declares {declared}")
        machine.set_buffer(name, values)
    # glue tables are armed per host launch, so they are allowed to be
    # unbound here
    unbound = [g.name for g in machine.program.globals
               if g.extent is None and g.name not in machine.buffers
               and g.name not in armed]
    if unbound:
        raise CliError(
            "extern buffers never bound by the dataset: "
            + ", ".join(unbound))


def _cmd_run(args) -> int:
    from .sim import Machine

    program = _load_program(args.source)
    if args.explain_analysis:
        _explain(program)
    if not program.has_kernel(args.entry):
        raise CliError(f"no kernel named '{args.entry}' to run")
    entry_def = program.kernel(args.entry)
    if entry_def.params:
        raise CliError(
            f"run mode needs a parameter-less entry kernel, but "
            f"'{args.entry}' takes {len(entry_def.params)} parameter(s); "
            f"pass data through globals and a --dataset file")

    result = _transform(program, args)
    if args.emit is not None:
        _write_emitted(print_program(result.program), args.emit, args.source)

    cost = _parse_cost(args.cost)
    machine = Machine(result.program, cost, checked=args.checked,
                      schedule_seed=args.schedule_seed)
    if args.dataset is not None:
        _bind_dataset(machine, args.dataset, _glue_table_names(result.glues))

    consts = result.program.const_map()
    grid = consts.get("_GRID", DEFAULT_GRID)
    block = consts.get("_BLOCK", DEFAULT_BLOCK)
    runner = GlueRunner(machine, result.glues)
    runner.launch(args.entry, grid, block, ())
    machine.drain()
    report = machine.report()

    sys.stdout.write(report.to_text(include_buffers=args.buffers))
    if args.report is not None:
        _append_report_row(args, report)
    return 0


def _append_report_row(args, report) -> None:
    row = {c: "" for c in CSV_COLUMNS}
    row.update({
        "bench": Path(args.source).stem,
        "dataset": args.dataset or "",
        "threshold": args.threshold,
        "cfactor": args.cfactor,
        "agg": args.agg or "none",
        "group_size": args.group_size,
        "agg_threshold": args.agg_threshold,
        "num_launches": report.num_launches,
        "host_launches": report.host_launches,
        "blocks_scheduled": report.blocks_scheduled,
        "instructions": report.instructions,
        "makespan": report.makespan,
        **{f"t_{ph}": t for ph, t in report.phase_time.items()},
    })
    path = Path(args.report)
    text = render_csv([row])
    header, _, body = text.partition("\n")
    try:
        if path.exists() and path.stat().st_size > 0:
            with path.open("a", encoding="utf-8") as f:
                f.write(body)
        else:
            path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise CliError(
            f"cannot write '{args.report}': {e.strerror or e}") from None


def _cmd_sweep(args) -> int:
    configs = [BenchConfig(threshold=t, cfactor=c, agg=a,
                           group_size=args.group_size,
                           agg_threshold=args.agg_threshold)
               for t in args.thresholds
               for c in args.cfactors
               for a in args.aggs]
    cost = _parse_cost(args.cost)
    try:
        rows = bench_sweep(args.bench, args.dataset, configs=configs,
                           cost=cost, verify=not args.no_verify)
    except ValueError as e:
        raise CliError(str(e)) from None
    if args.report is not None:
        write_csv(args.report, rows)
        print(f"wrote {args.report} ({len(rows)} rows)", file=sys.stderr)
    else:
        sys.stdout.write(render_csv(rows))
    failed = [r for r in rows if r["error"]]
    for r in failed:
        print(f"row {r['threshold']}/{r['cfactor']}/{r['agg']}: "
              f"{r['error']}", file=sys.stderr)
    return 1 if failed else 0


_COMMANDS = {"emit": _cmd_emit, "run": _cmd_run, "sweep": _cmd_sweep}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except CliError as e:
        print(f"dynoptc: error: {e}", file=sys.stderr)
        return 1
    except LangError as e:
        print(e.render(), file=sys.stderr)
        return 1
    except (SimTrap, ValueError) as e:
        print(f"dynoptc: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
