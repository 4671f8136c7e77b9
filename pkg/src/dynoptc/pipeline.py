"""End-to-end transformation pipeline and glue-aware launching.

The canonical pass order is threshold, then coarsen, then aggregate:
thresholding rewrites launch sites while their grid expressions are still in
the programmer's shape, coarsening then shrinks the surviving dynamic
launches, and aggregation if-converts whatever launches remain. Each pass is
independently optional. A different order can be forced with ``order`` for
experiments, at the cost of weaker analysis (for example, thresholding after
coarsening no longer recognizes the ceil-divided grid expression).

Transformed programs that aggregate need host-side cooperation: fresh tables
before every launch of a rewritten parent and, at grid granularity, a
completion hook that performs the aggregated launch. ``GlueRunner`` wraps a
machine so that hosts can stay oblivious:

    result = transform(program, threshold=64, agg="block")
    machine = Machine(result.program, cost)
    runner = GlueRunner(machine, result.glues)
    runner.launch("main", grid, block, args)
    machine.drain()
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .lang.ast import Program
from .lang.validate import check
from .passes import (AggGlue, ManifestEntry, apply_aggregate, apply_coarsen,
                     apply_threshold)

CANONICAL_ORDER = "TCA"


@dataclass(slots=True)
class TransformResult:
    program: Program
    manifest: list[ManifestEntry] = field(default_factory=list)
    glues: list[AggGlue] = field(default_factory=list)

    def manifest_text(self) -> str:
        return "\n".join(e.render() for e in self.manifest)


def transform(program: Program, threshold: int = 0, cfactor: int = 1,
              agg: str | None = None, group_size: int = 4,
              agg_threshold: int = 0, entry: str = "main",
              order: str = CANONICAL_ORDER,
              product_fallback: bool = False) -> TransformResult:
    """Apply the enabled passes in ``order`` and revalidate the result.

    ``threshold=0``, ``cfactor<=1`` and ``agg=None`` each disable the
    corresponding pass. ``entry`` names the host-launched kernel, which
    coarsening must leave alone (host launch sites cannot be rewritten to
    pass the logical grid size).
    """
    result = TransformResult(program)
    for step in order.upper():
        if step == "T":
            if threshold == 0:
                continue
            result.program, entries = apply_threshold(
                result.program, threshold, use_product=product_fallback)
            result.manifest += entries
        elif step == "C":
            if cfactor <= 1:
                continue
            result.program, entries = apply_coarsen(
                result.program, cfactor, exclude={entry})
            result.manifest += entries
        elif step == "A":
            if agg is None:
                continue
            result.program, entries, glues = apply_aggregate(
                result.program, agg, group_size, agg_threshold)
            result.manifest += entries
            result.glues += glues
        else:
            raise ValueError(f"unknown pass step {step!r} in order")
    check(result.program)
    return result


class GlueRunner:
    """Launches host kernels, arming aggregation glue transparently.

    Before every host launch of an aggregating parent, the glue's extern
    tables are re-armed (zeroed and sized to the launch configuration); for
    grid-granularity glue the completion hook is registered on the new grid.
    Kernels without glue pass straight through.
    """

    def __init__(self, machine, glues: list[AggGlue]):
        self.machine = machine
        self._by_parent: dict[str, list[AggGlue]] = {}
        for g in glues:
            self._by_parent.setdefault(g.parent, []).append(g)

    def launch(self, kernel: str, grid: int, block: int,
               args=()) -> int | None:
        glues = self._by_parent.get(kernel, ())
        for g in glues:
            g.arm(self.machine, grid, block, args)
        gid = self.machine.launch_host(kernel, grid, block, args)
        if gid is not None:
            for g in glues:
                if g.granularity == "grid":
                    self.machine.on_grid_complete(gid,
                                                  g.completion_hook(args))
        return gid
