"""Launch thresholding: serialize small child grids in the parent thread.

Each eligible dynamic launch is rewritten to evaluate its thread count once
and branch on it:

    int _gd = <grid>;            // configuration and arguments are
    int _bd = <block>;           // hoisted so both branches see identical
    int _a0 = <scalar arg>;      // values evaluated exactly once
    int _threads = <recovered child count>;
    if (_threads >= _THRESHOLD) {
        launch child<<<_gd, _bd>>>(buf, _a0);
    } else {
        child_serial(buf, _a0, _gd, _bd);
    }

``child_serial`` is a device-function clone of the child that runs the whole
grid in the calling thread: a block-outer, thread-inner loop pair with the
launch builtins substituted by the loop variables and the appended
``_gDim``/``_bDim`` parameters.

A threshold of 0 disables the pass (nothing is ever serialized); the
sentinel 2147483647 serializes every eligible site. Sites are skipped — with
the reason recorded in the manifest — when the child count cannot be
recovered from the grid expression, when the launch is multi-dimensional, or
when the child cannot run as a device function (barriers, nested launches,
shared memory, or an early return).
"""

from __future__ import annotations

from dataclasses import replace

from ..analysis import (extract_child_count, find_sites, product_fallback,
                        single_assignment_env)
from ..lang.ast import (Binary, CallStmt, ConstDef, For, If, IntLit,
                        KernelDef, LocalDecl, NameGen, Param, PhaseMarker,
                        Program, Return, Stmt, Var, While,
                        collect_local_names, recompute_program_flags,
                        substitute_builtins, walk_stmts)
from .common import (INF_THRESHOLD, ManifestEntry, hoist_args, kernel_namegen,
                     program_namegen, scalar_config, skipped, transformed)

PASS = "threshold"
THRESHOLD_CONST = "_THRESHOLD"


def serializable(child: KernelDef) -> str | None:
    """Reason the child cannot be cloned into a device function, or None."""
    if child.uses_barrier:
        return "child uses barriers"
    if child.contains_launch:
        return "child launches dynamically"
    if child.uses_shared:
        return "child uses shared memory"
    if any(isinstance(s, Return) for s in walk_stmts(child.body)):
        return "child contains return"
    return None


def make_serial_clone(child: KernelDef, name: str) -> KernelDef:
    """Device function running the child's whole grid in the caller."""
    gen = NameGen(collect_local_names(child))
    b = gen.fresh("_b")
    t = gen.fresh("_t")
    gdim = gen.fresh("_gDim")
    bdim = gen.fresh("_bDim")
    body = substitute_builtins(child.body, {
        ("blockIdx", "x"): Var(b), ("blockIdx", "y"): IntLit(0),
        ("blockIdx", "z"): IntLit(0),
        ("threadIdx", "x"): Var(t), ("threadIdx", "y"): IntLit(0),
        ("threadIdx", "z"): IntLit(0),
        ("gridDim", "x"): Var(gdim), ("gridDim", "y"): IntLit(1),
        ("gridDim", "z"): IntLit(1),
        ("blockDim", "x"): Var(bdim), ("blockDim", "y"): IntLit(1),
        ("blockDim", "z"): IntLit(1),
    })
    loop = For(var=b, init=IntLit(0), bound=Var(gdim), step=IntLit(1),
               body=(For(var=t, init=IntLit(0), bound=Var(bdim),
                         step=IntLit(1), body=body),))
    params = tuple(child.params) + (Param(gdim, "int", False),
                                    Param(bdim, "int", False))
    return KernelDef(name=name, kind="device", params=params, body=(loop,),
                     pos=child.pos)


def apply_threshold(program: Program, threshold: int,
                    use_product: bool = False
                    ) -> tuple[Program, list[ManifestEntry]]:
    all_sites = find_sites(program)
    if threshold == 0:
        return program, [skipped(s.label, PASS, "threshold-zero")
                         for s in all_sites]

    entries: list[ManifestEntry] = []
    pgen = program_namegen(program)
    tname = pgen.fresh(THRESHOLD_CONST)
    serial_names: dict[str, str] = {}
    new_consts = list(program.consts)
    new_kernels = {k.name: k for k in program.kernels}
    any_transformed = False

    for kernel in program.kernels:
        if kernel.kind != "kernel":
            continue
        sites = [s for s in all_sites if s.kernel == kernel.name]
        if not sites:
            continue
        env = single_assignment_env(kernel)
        gen = kernel_namegen(program, kernel)
        rewrites: dict[int, list[Stmt]] = {}

        for idx, site in enumerate(sites):
            if site.multi_dim:
                entries.append(skipped(site.label, PASS,
                                       "multi-dimensional launch"))
                continue
            child = program.kernel(site.callee)
            why = serializable(child)
            if why is not None:
                entries.append(skipped(site.label, PASS, why))
                continue
            got = extract_child_count(site, kernel, env)
            if not got.ok:
                if use_product:
                    threads_expr = product_fallback(site, kernel, env)
                    entries.append(ManifestEntry(
                        site.label, PASS,
                        f"transformed (product fallback: {got.reason})"))
                else:
                    entries.append(skipped(site.label, PASS, got.reason))
                    continue
            else:
                threads_expr = got.threads
                entries.append(transformed(site.label, PASS))

            suffix = "" if idx == 0 else str(idx)
            gd = gen.fresh(f"_gd{suffix}")
            bd = gen.fresh(f"_bd{suffix}")
            th = gen.fresh(f"_threads{suffix}")
            arg_decls, new_args = hoist_args(site.stmt, child, gen, suffix)
            if site.callee not in serial_names:
                serial_names[site.callee] = pgen.fresh(f"{site.callee}_serial")
            serial = serial_names[site.callee]
            block: list[Stmt] = [
                LocalDecl("int", gd, scalar_config(site.stmt.grid)),
                LocalDecl("int", bd, scalar_config(site.stmt.block)),
                *arg_decls,
                LocalDecl("int", th, threads_expr),
                If(cond=Binary(">=", Var(th), Var(tname)),
                   then=(replace(site.stmt, grid=Var(gd), block=Var(bd),
                                 args=tuple(new_args)),),
                   els=(CallStmt(callee=serial,
                                 args=tuple(new_args) + (Var(gd), Var(bd))),)),
            ]
            rewrites[id(site.stmt)] = block
            any_transformed = True

        if rewrites:
            new_kernels[kernel.name] = replace(
                kernel, body=_splice(kernel.body, rewrites))

    if not any_transformed:
        return program, entries

    new_consts.append(ConstDef(tname, threshold))
    for child_name, serial_name in serial_names.items():
        new_kernels[serial_name] = make_serial_clone(
            program.kernel(child_name), serial_name)

    out = replace(program, consts=tuple(new_consts),
                  kernels=tuple(new_kernels.values()))
    return recompute_program_flags(out), entries


def _splice(stmts: tuple[Stmt, ...],
            rewrites: dict[int, list[Stmt]]) -> tuple[Stmt, ...]:
    """Replace statements (by identity) with blocks, recursing everywhere."""
    out: list[Stmt] = []
    for s in stmts:
        if id(s) in rewrites:
            out.extend(rewrites[id(s)])
            continue
        out.append(_map_blocks(s, rewrites))
    return tuple(out)


def _map_blocks(s: Stmt, rewrites) -> Stmt:
    if isinstance(s, If):
        return replace(s, then=_splice(s.then, rewrites),
                       els=_splice(s.els, rewrites))
    if isinstance(s, (While, For, PhaseMarker)):
        return replace(s, body=_splice(s.body, rewrites))
    return s
