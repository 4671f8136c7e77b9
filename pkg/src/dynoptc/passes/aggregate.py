"""Launch aggregation: fuse many small dynamic launches into one large one.

Instead of every parent thread launching its own child grid, threads record
the launch they *would have* made — configuration plus scalar arguments —
into extern tables, and one representative performs a single launch of an
aggregated clone of the child that covers all recorded logical grids.

The rewrite has three parts.

**If-conversion.** The launch statement is replaced, in place, by
assignments to zero-initialized temporaries declared at the top of the
parent (``_gd``/``_bd``/``_a<i>``). A thread participates in aggregation
when ``_gd > 0``; a non-positive grid is treated as the empty launch it
would have been. Control flow around the site is otherwise untouched, so
every thread reaches the protocol below regardless of whether it launched.

**Recording protocol.** Inserted after the outermost top-level statement
enclosing the site and attributed to the ``agg`` phase. Participants
reserve a table slot and add their block count with one fused atomic on a
64-bit counter (participants in the high half, total blocks in the low
half), store their configuration and arguments at the slot, and raise a
running maximum of the block sizes:

    long _old = atomic_add(_agg_C_ctr, <group>, 4294967296L + (long)_gd);
    int _slot = (int)(_old >> 32);
    _agg_C_gdim[<base> + _slot] = _gd;   ... bdim, args ...
    atomic_max(_agg_C_max, <group>, _bd);

Who launches depends on the granularity:

* ``block`` — each parent block is a group (``base = blockIdx.x *
  blockDim.x``). After a barrier, thread 0 turns the group's gdim segment
  into an exclusive prefix sum (upgrading slot numbers to block offsets)
  and launches the aggregated child once per block.
* ``multiblock`` — ``_AGG_GROUP`` consecutive blocks share a group.
  Participants publish their table rows with a fence; thread 0 of every
  block then bumps the group's done-counter, and the last block to arrive
  scans and launches. One launch per group.
* ``grid`` — the kernel only records (group 0, base 0). The host glue
  scans the tables when the parent grid completes and performs the one
  aggregated launch from the host (`AggGlue.completion_hook`).

**Aggregated clone.** ``C_agg`` takes the child's buffer parameters plus
the argument tables, the scanned gdim table, the bdim table, and the group's
``_base``/``_np``. Each block binary-searches the scanned segment for its
logical grid (attributed to the ``disagg`` phase), rebuilds the child's
scalar parameters from the tables under their original names, and runs the
unmodified body — ``blockIdx.x``/``gridDim.x``/``blockDim.x`` mapped to the
logical values — under a ``threadIdx.x < _bd`` guard, since the physical
block is as wide as the *largest* recorded launch.

With ``--agg-threshold N`` (block granularity only) the parent counts
participants in a shared cell first and falls back to plain per-thread
launches of the original child when fewer than N threads of the block would
aggregate; the original child definition is kept for exactly this path.

A site is skipped — with the reason recorded in the manifest — when the
launch is multi-dimensional or inside a loop (one recorded launch per
thread), when the parent is device-launched (the glue must size tables from
the host launch configuration) or contains an early return (every thread
must reach the protocol), when the child uses barriers (the block-size
guard would leave them divergent), or when the child was already aggregated
at an earlier site (first site wins).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..analysis import (LaunchSite, device_launched_kernels, find_context,
                        find_sites, kernel_has_return)
from ..lang.ast import (Assign, Atomic, Barrier, Binary, BufRead, Builtin,
                        Cast, ConstDef, Expr, Fence, FloatLit, For,
                        GlobalDecl, If, IntLit, KernelDef, LaunchStmt,
                        LocalDecl, NameGen, Param, PhaseMarker, Program,
                        SharedDecl, Stmt, Store, Var, While,
                        collect_local_names, recompute_program_flags,
                        substitute_builtins)
from .common import (AggBuffers, AggGlue, ManifestEntry, kernel_namegen,
                     program_namegen, scalar_config, skipped)
from .threshold import _splice

PASS = "aggregate"
GRANULARITIES = ("block", "multiblock", "grid")
GROUP_CONST = "_AGG_GROUP"
AGG_THRESHOLD_CONST = "_AGG_THRESHOLD"

_TID0 = Binary("==", Builtin("threadIdx", "x"), IntLit(0))


def _zero(kind: str) -> Expr:
    if kind == "float":
        return FloatLit(0.0)
    return IntLit(0, kind="long" if kind == "long" else "int")


def _row(base: Expr, idx: Expr) -> Expr:
    if isinstance(base, IntLit) and base.value == 0:
        return idx
    return Binary("+", base, idx)


@dataclass(slots=True)
class _Tables:
    """Program-level artifacts backing one aggregated child."""
    agg_name: str
    ctr: str
    done: str  # "" unless multiblock
    maxb: str
    gdim: str
    bdim: str
    args: list[tuple[str, str]]  # (global name, element kind) per scalar

    def globals(self) -> list[GlobalDecl]:
        out = [GlobalDecl(self.ctr, "long", None)]
        if self.done:
            out.append(GlobalDecl(self.done, "int", None))
        out += [GlobalDecl(self.maxb, "int", None),
                GlobalDecl(self.gdim, "int", None),
                GlobalDecl(self.bdim, "int", None)]
        out += [GlobalDecl(n, k, None) for n, k in self.args]
        return out


def _make_tables(child: KernelDef, granularity: str, pgen: NameGen) -> _Tables:
    c = child.name
    return _Tables(
        agg_name=pgen.fresh(f"{c}_agg"),
        ctr=pgen.fresh(f"_agg_{c}_ctr"),
        done=pgen.fresh(f"_agg_{c}_done") if granularity == "multiblock" else "",
        maxb=pgen.fresh(f"_agg_{c}_max"),
        gdim=pgen.fresh(f"_agg_{c}_gdim"),
        bdim=pgen.fresh(f"_agg_{c}_bdim"),
        args=[(pgen.fresh(f"_agg_{c}_args{i}"), p.kind)
              for i, p in enumerate(child.params) if not p.is_buffer],
    )


@dataclass(slots=True)
class _Plan:
    """One accepted site: everything needed to rewrite its parent."""
    site: LaunchSite
    tables: _Tables
    top_index: int
    gd: str = ""
    bd: str = ""
    scalars: list[str] = field(default_factory=list)
    buffer_args: list[Expr] = field(default_factory=list)  # site order
    shared_cnt: str = ""  # participant counter, agg-threshold only
    top_decls: list[Stmt] = field(default_factory=list)
    assigns: list[Stmt] = field(default_factory=list)
    protocol: Stmt | None = None


def aggregation_blocker(site: LaunchSite, parent: KernelDef,
                        child: KernelDef, device_launched: set[str],
                        seen_children: set[str]) -> str | None:
    if site.multi_dim:
        return "multi-dimensional launch"
    if site.callee in seen_children:
        return "child already aggregated at an earlier site"
    if parent.name in device_launched:
        return "parent is device-launched"
    if kernel_has_return(parent):
        return "parent contains return"
    if child.uses_barrier:
        return "child uses barriers"
    return None


def apply_aggregate(program: Program, granularity: str, group_size: int = 4,
                    agg_threshold: int = 0
                    ) -> tuple[Program, list[ManifestEntry], list[AggGlue]]:
    if granularity not in GRANULARITIES:
        raise ValueError(f"unknown aggregation granularity {granularity!r}")
    if agg_threshold > 0 and granularity != "block":
        raise ValueError("aggregation threshold requires block granularity")
    if granularity == "multiblock" and group_size < 1:
        raise ValueError("group size must be at least 1")

    all_sites = find_sites(program)
    launched = device_launched_kernels(program)
    entries: list[ManifestEntry] = []
    glues: list[AggGlue] = []
    pgen = program_namegen(program)
    group_const = pgen.fresh(GROUP_CONST) if granularity == "multiblock" \
        else ""
    thresh_const = pgen.fresh(AGG_THRESHOLD_CONST) if agg_threshold > 0 \
        else ""

    plans_by_parent: dict[str, list[_Plan]] = {}
    seen_children: set[str] = set()
    for site in all_sites:
        parent = program.kernel(site.kernel)
        child = program.kernel(site.callee)
        why = aggregation_blocker(site, parent, child, launched,
                                  seen_children)
        if why is None:
            ctx = find_context(parent, site.stmt)
            if ctx.in_loop:
                why = "launch inside a loop"
        if why is not None:
            entries.append(skipped(site.label, PASS, why))
            continue
        seen_children.add(site.callee)
        tables = _make_tables(child, granularity, pgen)
        plans_by_parent.setdefault(parent.name, []).append(
            _Plan(site=site, tables=tables, top_index=ctx.top_index))
        detail = {"block": "granularity=block",
                  "multiblock": f"granularity=multiblock, group={group_size}",
                  "grid": "granularity=grid"}[granularity]
        if agg_threshold > 0:
            detail += f", direct-launch threshold={agg_threshold}"
        entries.append(ManifestEntry(site.label, PASS,
                                     f"transformed ({detail})"))

    if not plans_by_parent:
        return program, entries, glues

    new_globals = list(program.globals)
    new_consts = list(program.consts)
    if group_const:
        new_consts.append(ConstDef(group_const, group_size))
    if thresh_const:
        new_consts.append(ConstDef(thresh_const, agg_threshold))

    new_kernels: list[KernelDef] = []
    agg_clones: list[KernelDef] = []
    for kernel in program.kernels:
        plans = plans_by_parent.get(kernel.name)
        if not plans:
            new_kernels.append(kernel)
            continue
        gen = kernel_namegen(program, kernel)
        rewrites: dict[int, list[Stmt]] = {}
        for idx, plan in enumerate(plans):
            child = program.kernel(plan.site.callee)
            _fill_plan(plan, child, gen, idx, granularity, group_const,
                       thresh_const, program)
            rewrites[id(plan.site.stmt)] = plan.assigns
            new_globals.extend(plan.tables.globals())
            agg_clones.append(_make_agg_clone(child, plan.tables))
            glues.append(_make_glue(kernel, plan, granularity, group_size))
        new_top: list[Stmt] = []
        for i, s in enumerate(kernel.body):
            new_top.extend(_splice((s,), rewrites))
            for plan in plans:
                if plan.top_index == i:
                    new_top.append(plan.protocol)
        decls: list[Stmt] = []
        for plan in plans:
            decls.extend(plan.top_decls)
        new_kernels.append(replace(kernel, body=tuple(decls) + tuple(new_top)))

    out = replace(program, consts=tuple(new_consts),
                  globals=tuple(new_globals),
                  kernels=tuple(new_kernels) + tuple(agg_clones))
    return recompute_program_flags(out), entries, glues


# -- parent-side construction --------------------------------------------------


def _fill_plan(plan: _Plan, child: KernelDef, gen: NameGen, idx: int,
               granularity: str, group_const: str, thresh_const: str,
               program: Program) -> None:
    suffix = "" if idx == 0 else str(idx)
    site = plan.site
    plan.gd = gen.fresh(f"_gd{suffix}")
    plan.bd = gen.fresh(f"_bd{suffix}")
    plan.top_decls = [LocalDecl("int", plan.gd, IntLit(0)),
                      LocalDecl("int", plan.bd, IntLit(0))]
    plan.assigns = [Assign(plan.gd, scalar_config(site.stmt.grid)),
                    Assign(plan.bd, scalar_config(site.stmt.block))]
    scalar_params = [p for p in child.params if not p.is_buffer]
    scalar_args = [a for p, a in zip(child.params, site.stmt.args)
                   if not p.is_buffer]
    plan.buffer_args = [a for p, a in zip(child.params, site.stmt.args)
                        if p.is_buffer]
    for i, (p, a) in enumerate(zip(scalar_params, scalar_args)):
        name = gen.fresh(f"_a{suffix}{i}")
        plan.scalars.append(name)
        plan.top_decls.append(LocalDecl(p.kind, name, _zero(p.kind)))
        plan.assigns.append(Assign(name, a))
    if thresh_const:
        plan.shared_cnt = gen.fresh(f"_agg_cnt{suffix}")
        plan.top_decls.insert(0, SharedDecl(plan.shared_cnt, IntLit(1)))

    if granularity == "block":
        proto = _block_protocol(plan, child, gen, thresh_const)
    elif granularity == "multiblock":
        proto = _multiblock_protocol(plan, gen, group_const)
    else:
        proto = _grid_protocol(plan, gen)
    plan.protocol = PhaseMarker("agg", tuple(proto))


def _record_stmts(plan: _Plan, gen: NameGen, grp: Expr, base: Expr,
                  fence: bool) -> list[Stmt]:
    """Participant side: reserve a slot, store the launch, raise the max."""
    t = plan.tables
    old = gen.fresh("_old")
    slot = gen.fresh("_slot")
    row = _row(base, Var(slot))
    stmts: list[Stmt] = [
        Atomic("add", t.ctr, grp,
               (Binary("+", IntLit(1 << 32, kind="long"),
                       Cast("long", Var(plan.gd))),),
               result=old, result_kind="long"),
        LocalDecl("int", slot, Cast("int", Binary(">>", Var(old),
                                                  IntLit(32)))),
        Store(t.gdim, row, Var(plan.gd)),
        Store(t.bdim, row, Var(plan.bd)),
    ]
    stmts += [Store(name, row, Var(a))
              for (name, _), a in zip(t.args, plan.scalars)]
    stmts.append(Atomic("max", t.maxb, grp, (Var(plan.bd),)))
    if fence:
        stmts.append(Fence())
    return stmts


def _scan_and_launch(plan: _Plan, gen: NameGen, grp: Expr, base: Expr,
                     np_var: str) -> list[Stmt]:
    """Representative side: exclusive-scan the gdim segment, then launch."""
    t = plan.tables
    acc = gen.fresh("_acc")
    p = gen.fresh("_p")
    g = gen.fresh("_g")
    row = _row(base, Var(p))
    args = (tuple(plan.buffer_args)
            + tuple(Var(n) for n, _ in t.args)
            + (Var(t.gdim), Var(t.bdim), base, Var(np_var)))
    return [
        LocalDecl("int", acc, IntLit(0)),
        For(p, IntLit(0), Var(np_var), IntLit(1), (
            LocalDecl("int", g, BufRead(t.gdim, row)),
            Store(t.gdim, row, Var(acc)),
            Assign(acc, Binary("+", Var(acc), Var(g))),
        )),
        PhaseMarker("launch", (
            LaunchStmt(t.agg_name, Var(acc), BufRead(t.maxb, grp), args),)),
    ]


def _representative(plan: _Plan, gen: NameGen, grp: Expr, base: Expr
                    ) -> list[Stmt]:
    """Thread-0 tail shared by block and multiblock: read count, scan, launch."""
    t = plan.tables
    c = gen.fresh("_c")
    np_ = gen.fresh("_np")
    return [
        LocalDecl("long", c, BufRead(t.ctr, grp)),
        LocalDecl("int", np_, Cast("int", Binary(">>", Var(c), IntLit(32)))),
        If(Binary(">", Var(np_), IntLit(0)),
           tuple(_scan_and_launch(plan, gen, grp, base, np_))),
    ]


def _block_protocol(plan: _Plan, child: KernelDef, gen: NameGen,
                    thresh_const: str) -> list[Stmt]:
    grp = Builtin("blockIdx", "x")
    sb = gen.fresh("_sb")
    participates = Binary(">", Var(plan.gd), IntLit(0))
    full: list[Stmt] = [
        If(participates, tuple(_record_stmts(plan, gen, grp, Var(sb),
                                             fence=False))),
        Barrier(),
        If(_TID0, tuple(_representative(plan, gen, grp, Var(sb)))),
    ]
    head: list[Stmt] = [
        LocalDecl("int", sb, Binary("*", grp, Builtin("blockDim", "x")))]
    if not thresh_const:
        return head + full

    # count participants in shared memory; small blocks launch directly
    cnt = plan.shared_cnt
    direct_args = []
    scalars = iter(plan.scalars)
    for p, a in zip(child.params, plan.site.stmt.args):
        direct_args.append(a if p.is_buffer else Var(next(scalars)))
    direct = If(participates, (PhaseMarker("launch", (
        LaunchStmt(child.name, Var(plan.gd), Var(plan.bd),
                   tuple(direct_args)),)),))
    return head + [
        If(_TID0, (Store(cnt, IntLit(0), IntLit(0)),)),
        Barrier(),
        If(participates, (Atomic("add", cnt, IntLit(0), (IntLit(1),)),)),
        Barrier(),
        If(Binary("<", BufRead(cnt, IntLit(0)), Var(thresh_const)),
           then=(direct,), els=tuple(full)),
    ]


def _multiblock_protocol(plan: _Plan, gen: NameGen,
                         group_const: str) -> list[Stmt]:
    t = plan.tables
    grp = gen.fresh("_grp")
    sb = gen.fresh("_sb")
    nblk = gen.fresh("_nblk")
    d = gen.fresh("_d")
    return [
        LocalDecl("int", grp, Binary("/", Builtin("blockIdx", "x"),
                                     Var(group_const))),
        LocalDecl("int", sb, Binary("*", Binary("*", Var(grp),
                                                Var(group_const)),
                                    Builtin("blockDim", "x"))),
        If(Binary(">", Var(plan.gd), IntLit(0)),
           tuple(_record_stmts(plan, gen, Var(grp), Var(sb), fence=True))),
        Barrier(),
        If(_TID0, (
            LocalDecl("int", nblk, Binary("-", Builtin("gridDim", "x"),
                                          Binary("*", Var(grp),
                                                 Var(group_const)))),
            If(Binary(">", Var(nblk), Var(group_const)),
               (Assign(nblk, Var(group_const)),)),
            Atomic("add", t.done, Var(grp), (IntLit(1),),
                   result=d, result_kind="int"),
            If(Binary("==", Var(d), Binary("-", Var(nblk), IntLit(1))),
               tuple(_representative(plan, gen, Var(grp), Var(sb)))),
        )),
    ]


def _grid_protocol(plan: _Plan, gen: NameGen) -> list[Stmt]:
    # recording only; the host glue scans and launches at grid completion
    return [If(Binary(">", Var(plan.gd), IntLit(0)),
               tuple(_record_stmts(plan, gen, IntLit(0), IntLit(0),
                                   fence=False)))]


# -- aggregated clone ----------------------------------------------------------


def _make_agg_clone(child: KernelDef, t: _Tables) -> KernelDef:
    gen = NameGen(collect_local_names(child))
    scalar_params = [p for p in child.params if not p.is_buffer]
    tab_params = [Param(gen.fresh(f"_tab{i}"), p.kind, is_buffer=True)
                  for i, p in enumerate(scalar_params)]
    scan = gen.fresh("_scan")
    bdims = gen.fresh("_bdims")
    base = gen.fresh("_base")
    np_ = gen.fresh("_np")
    params = tuple(p for p in child.params if p.is_buffer) \
        + tuple(tab_params) \
        + (Param(scan, "int", True), Param(bdims, "int", True),
           Param(base, "int"), Param(np_, "int"))

    lo = gen.fresh("_lo")
    hi = gen.fresh("_hi")
    mid = gen.fresh("_mid")
    myscan = gen.fresh("_myscan")
    lb = gen.fresh("_lb")
    gdp = gen.fresh("_gdp")
    bd = gen.fresh("_bd")

    def at(buf: str, idx: Expr) -> BufRead:
        return BufRead(buf, Binary("+", Var(base), idx))

    bx = Builtin("blockIdx", "x")
    prologue: list[Stmt] = [
        LocalDecl("int", lo, IntLit(0)),
        LocalDecl("int", hi, Var(np_)),
        While(Binary("<", Binary("+", Var(lo), IntLit(1)), Var(hi)), (
            LocalDecl("int", mid, Binary("/", Binary("+", Var(lo), Var(hi)),
                                         IntLit(2))),
            If(Binary("<=", at(scan, Var(mid)), bx),
               (Assign(lo, Var(mid)),), (Assign(hi, Var(mid)),)),
        )),
        LocalDecl("int", myscan, at(scan, Var(lo))),
        LocalDecl("int", lb, Binary("-", bx, Var(myscan))),
        LocalDecl("int", gdp, IntLit(0)),
        If(Binary("<", Binary("+", Var(lo), IntLit(1)), Var(np_)),
           (Assign(gdp, Binary("-", at(scan, Binary("+", Var(lo), IntLit(1))),
                               Var(myscan))),),
           (Assign(gdp, Binary("-", Builtin("gridDim", "x"),
                               Var(myscan))),)),
        LocalDecl("int", bd, at(bdims, Var(lo))),
    ]
    prologue += [LocalDecl(p.kind, p.name, at(tp.name, Var(lo)))
                 for p, tp in zip(scalar_params, tab_params)]

    shared = [s for s in child.body if isinstance(s, SharedDecl)]
    rest = tuple(s for s in child.body if not isinstance(s, SharedDecl))
    body = substitute_builtins(rest, {
        ("blockIdx", "x"): Var(lb),
        ("gridDim", "x"): Var(gdp),
        ("blockDim", "x"): Var(bd),
    })
    guard = If(Binary("<", Builtin("threadIdx", "x"), Var(bd)),
               (PhaseMarker("child", body),))
    wrapped = PhaseMarker("disagg",
                          tuple(shared) + tuple(prologue) + (guard,))
    return KernelDef(name=t.agg_name, kind="kernel", params=params,
                     body=(wrapped,), pos=child.pos)


# -- glue ----------------------------------------------------------------------


def _make_glue(parent: KernelDef, plan: _Plan,
               granularity: str, group_size: int) -> AggGlue:
    t = plan.tables
    param_index = {p.name: i for i, p in enumerate(parent.params)}
    buffer_args: list[tuple[str, object]] = []
    for a in plan.buffer_args:
        assert isinstance(a, Var)
        if a.name in param_index:
            buffer_args.append(("param", param_index[a.name]))
        else:
            buffer_args.append(("global", a.name))
    return AggGlue(
        parent=parent.name, child=plan.site.callee, agg_child=t.agg_name,
        granularity=granularity, group_size=group_size,
        buffers=AggBuffers(ctr=t.ctr, done=t.done, maxb=t.maxb, gdim=t.gdim,
                           bdim=t.bdim, args=list(t.args)),
        buffer_args=buffer_args)
