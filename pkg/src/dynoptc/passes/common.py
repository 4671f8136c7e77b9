"""Shared plumbing for the source-to-source passes."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..lang.ast import (Dim3, Expr, KernelDef, LocalDecl, Param, Program,
                        Var, NameGen, collect_local_names)

INF_THRESHOLD = 2147483647  # "always serialize" sentinel


def scalar_config(e: Expr) -> Expr:
    """Unwrap a single-component dim3 so the config can live in an int temp."""
    if isinstance(e, Dim3) and len(e.components) == 1:
        return e.components[0]
    return e


@dataclass(slots=True)
class ManifestEntry:
    site: str       # "<kernel>:<line>"
    pass_name: str
    action: str     # "transformed" or "skipped:<reason>"

    def render(self) -> str:
        return f"site={self.site} pass={self.pass_name} action={self.action}"

    @property
    def transformed(self) -> bool:
        return self.action == "transformed"


def skipped(site: str, pass_name: str, reason: str) -> ManifestEntry:
    return ManifestEntry(site, pass_name, f"skipped:{reason}")


def transformed(site: str, pass_name: str) -> ManifestEntry:
    return ManifestEntry(site, pass_name, "transformed")


def kernel_namegen(program: Program, kernel: KernelDef) -> NameGen:
    taken = set(collect_local_names(kernel))
    taken |= {c.name for c in program.consts}
    taken |= {g.name for g in program.globals}
    taken |= {k.name for k in program.kernels}
    return NameGen(taken)


def program_namegen(program: Program) -> NameGen:
    taken = {c.name for c in program.consts}
    taken |= {g.name for g in program.globals}
    taken |= {k.name for k in program.kernels}
    return NameGen(taken)


def hoist_args(site_stmt, callee: KernelDef, gen: NameGen,
               suffix: str = "") -> tuple[list, list[Expr]]:
    """Hoist a launch's scalar arguments into fresh temps.

    Returns (decl statements, replacement argument expressions). Buffer
    arguments pass through unchanged; scalars are evaluated once into
    ``_a<i>`` locals in argument order.
    """
    decls: list = []
    new_args: list[Expr] = []
    for i, (param, arg) in enumerate(zip(callee.params, site_stmt.args)):
        if param.is_buffer:
            new_args.append(arg)
        else:
            name = gen.fresh(f"_a{suffix}{i}")
            decls.append(LocalDecl(param.kind, name, arg))
            new_args.append(Var(name))
    return decls, new_args


@dataclass(slots=True)
class AggBuffers:
    """Names of the extern tables backing one aggregated child."""
    ctr: str
    done: str          # empty for granularities that don't need it
    maxb: str
    gdim: str
    bdim: str
    args: list[tuple[str, str]] = field(default_factory=list)  # (name, kind)


@dataclass(slots=True)
class AggGlue:
    """Host-side companion of an aggregated launch site.

    Arms fresh tables before every host launch of the parent and, at grid
    granularity, registers the completion hook that performs the aggregated
    launch from the host.
    """
    parent: str
    child: str
    agg_child: str
    granularity: str           # "block" | "multiblock" | "grid"
    group_size: int
    buffers: AggBuffers
    # how to resolve the original buffer arguments of the site when the
    # aggregated launch happens host-side: ("param", index) into the parent's
    # launch arguments or ("global", name)
    buffer_args: list[tuple[str, object]] = field(default_factory=list)

    def describe(self) -> str:
        return (f"aggregate {self.child} -> {self.agg_child} in {self.parent} "
                f"({self.granularity}"
                + (f", group={self.group_size}" if self.granularity ==
                   "multiblock" else "") + ")")

    def num_groups(self, parent_grid: int) -> int:
        if self.granularity == "block":
            return parent_grid
        if self.granularity == "multiblock":
            return -(-parent_grid // self.group_size)
        return 1

    def arm(self, machine, parent_grid: int, parent_block: int,
            parent_args) -> None:
        groups = self.num_groups(parent_grid)
        rows = parent_grid * parent_block
        b = self.buffers
        machine.set_buffer(b.ctr, [0] * groups)
        machine.set_buffer(b.maxb, [0] * groups)
        if b.done:
            machine.set_buffer(b.done, [0] * groups)
        machine.set_buffer(b.gdim, [0] * rows)
        machine.set_buffer(b.bdim, [0] * rows)
        for name, kind in b.args:
            fill = 0.0 if kind == "float" else 0
            machine.set_buffer(name, [fill] * rows)

    def resolve_buffer_args(self, machine, parent_args) -> list:
        out = []
        for how, key in self.buffer_args:
            if how == "param":
                out.append(parent_args[key])
            else:
                out.append(machine.buffer(key))
        return out

    def completion_hook(self, parent_args):
        """Hook for grid granularity: scan and launch from the host."""
        b = self.buffers

        def hook(machine):
            ctr = machine.buffer(b.ctr)[0]
            np_ = ctr >> 32
            total = ctr & 0xFFFFFFFF
            if total <= 0:
                return
            gdim = machine.buffer(b.gdim)
            acc = 0
            for p in range(np_):
                acc, gdim[p] = acc + gdim[p], acc
            maxb = machine.buffer(b.maxb)[0]
            args = self.resolve_buffer_args(machine, parent_args)
            args += [machine.buffer(n) for n, _ in b.args]
            args += [machine.buffer(b.gdim), machine.buffer(b.bdim), 0, np_]
            machine.launch_host(self.agg_child, total, maxb, tuple(args))

        return hook
