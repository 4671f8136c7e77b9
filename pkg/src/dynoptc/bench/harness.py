"""Benchmark runner: transform, simulate, and compare against the serial
reference.

The correctness contract is dual-route: the dynamic variant of a benchmark
(optionally transformed by any pass combination) and the serial variant must
leave the benchmark's output buffers element-exact equal. ``run_reference``
produces the serial side, ``run_config`` the dynamic side, and
``verify_outputs`` raises with the first divergent element if they disagree.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..lang import check, parse
from ..pipeline import CANONICAL_ORDER, GlueRunner, TransformResult, transform
from ..sim import CostParams, Machine, SimReport
from .benchmarks import Benchmark, Workload, get_benchmark


@dataclass(frozen=True)
class BenchConfig:
    """One point in the transformation space."""
    threshold: int = 0
    cfactor: int = 1
    agg: str | None = None
    group_size: int = 4
    agg_threshold: int = 0
    order: str = CANONICAL_ORDER

    def describe(self) -> str:
        return (f"threshold={self.threshold} cfactor={self.cfactor} "
                f"agg={self.agg or 'none'} group_size={self.group_size} "
                f"agg_threshold={self.agg_threshold}")


class EquivalenceError(AssertionError):
    pass


def load(bench_name: str, dataset: str) -> tuple[Benchmark, Workload]:
    bench = get_benchmark(bench_name)
    return bench, bench.workload(dataset)


def _machine_for(source: str, cost, checked, schedule_seed,
                 wl: Workload) -> Machine:
    program = parse(source)
    check(program)
    m = Machine(program, cost or CostParams(), checked=checked,
                schedule_seed=schedule_seed)
    for name, values in wl.buffers.items():
        m.set_buffer(name, values)
    return m


def run_reference(bench: Benchmark, wl: Workload, cost: CostParams | None = None,
                  checked: bool = False) -> SimReport:
    """Simulate the serial (No-CDP) variant untransformed."""
    m = _machine_for(bench.nocdp_source, cost, checked, None, wl)
    bench.drive(m, m.launch_host, wl)
    return m.report(bench.outputs)


def run_config(bench: Benchmark, wl: Workload, cfg: BenchConfig,
               cost: CostParams | None = None, checked: bool = False,
               schedule_seed: int | None = None
               ) -> tuple[SimReport, TransformResult]:
    """Transform the dynamic variant per ``cfg`` and simulate it."""
    program = parse(bench.cdp_source)
    result = transform(program, threshold=cfg.threshold, cfactor=cfg.cfactor,
                       agg=cfg.agg, group_size=cfg.group_size,
                       agg_threshold=cfg.agg_threshold, order=cfg.order)
    m = Machine(result.program, cost or CostParams(), checked=checked,
                schedule_seed=schedule_seed)
    for name, values in wl.buffers.items():
        m.set_buffer(name, values)
    runner = GlueRunner(m, result.glues)
    bench.drive(m, runner.launch, wl)
    return m.report(bench.outputs), result


def verify_outputs(bench: Benchmark, wl: Workload, got: SimReport,
                   ref: SimReport, label: str = "") -> None:
    """Raise EquivalenceError at the first divergent output element."""
    for name in bench.outputs:
        g, r = got.buffers[name], ref.buffers[name]
        if len(g) != len(r):
            raise EquivalenceError(
                f"{bench.name}/{wl.spec.text}{label}: buffer '{name}' has "
                f"{len(g)} elements, reference has {len(r)}")
        for i, (gv, rv) in enumerate(zip(g, r)):
            if gv != rv:
                raise EquivalenceError(
                    f"{bench.name}/{wl.spec.text}{label}: '{name}'[{i}] = "
                    f"{gv} differs from reference {rv}")


def run_benchmark(bench_name: str, dataset: str,
                  cfg: BenchConfig = BenchConfig(),
                  cost: CostParams | None = None, checked: bool = False,
                  verify: bool = True) -> SimReport:
    """One-shot: run ``cfg`` on a benchmark and verify against the reference."""
    bench, wl = load(bench_name, dataset)
    report, _ = run_config(bench, wl, cfg, cost=cost, checked=checked)
    if verify:
        ref = run_reference(bench, wl, cost=cost)
        verify_outputs(bench, wl, report, ref, label=f" ({cfg.describe()})")
    return report
