"""Block coarsening: fold several child blocks into one launched block.

Every kernel that is launched from device code has its body wrapped in a
chunk loop so that one physical block performs the work of ``_CFACTOR``
logical blocks:

    for (int _b = blockIdx.x * _CFACTOR; _b < (blockIdx.x + 1) * _CFACTOR;
         _b += 1) {
        if (_b < _gDim) {
            <body with blockIdx.x -> _b, gridDim.x -> _gDim>
        }
    }

``int _gDim`` — the logical grid size — is appended as the last parameter,
and every launch site of the kernel is rewritten to shrink its grid and pass
the original size through:

    int _gd = <grid>;
    int _bd = <block>;
    int _a0 = <scalar arg>;
    launch k<<<(_gd + _CFACTOR - 1) / _CFACTOR, _bd>>>(_a0, ..., _gd);

The tail chunk is handled by the ``_b < _gDim`` guard, which is uniform
across the block (it does not depend on the thread index), so barriers in
the body still rendezvous. A factor of 1 or less disables the pass.

Kernels are skipped — with the reason recorded in the manifest — when they
use shared memory (per-block state cannot be shared across logical blocks),
contain an early return (it would abandon the remaining chunks), or are
launched somewhere with a multi-dimensional configuration (the logical grid
size would not be a single axis). Host-entry kernels are excluded by the
caller, since host launch sites are outside the program and cannot be
rewritten to pass ``_gDim``.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Iterable

from ..analysis import device_launched_kernels, find_sites
from ..lang.ast import (Binary, Builtin, ConstDef, For, If, IntLit, KernelDef,
                        LocalDecl, Param, Program, Return, Stmt, Var,
                        recompute_program_flags, substitute_builtins,
                        walk_stmts)
from .common import (ManifestEntry, hoist_args, kernel_namegen,
                     program_namegen, scalar_config, skipped)
from .threshold import _splice

PASS = "coarsen"
CFACTOR_CONST = "_CFACTOR"


def coarsenable(kernel: KernelDef, multi_dim_launched: bool) -> str | None:
    """Reason the kernel cannot be chunk-looped, or None."""
    if kernel.uses_shared:
        return "kernel uses shared memory"
    if any(isinstance(s, Return) for s in walk_stmts(kernel.body)):
        return "kernel contains return"
    if multi_dim_launched:
        return "launched with a multi-dimensional configuration"
    return None


def apply_coarsen(program: Program, factor: int,
                  exclude: Iterable[str] = ()
                  ) -> tuple[Program, list[ManifestEntry]]:
    excluded = set(exclude)
    candidates = [k for k in program.kernels
                  if k.name in device_launched_kernels(program)
                  and k.name not in excluded]
    if factor <= 1:
        return program, [skipped(k.name, PASS, "coarsening-factor-one")
                         for k in candidates]

    all_sites = find_sites(program)
    entries: list[ManifestEntry] = []
    eligible: set[str] = set()
    for k in candidates:
        multi = any(s.multi_dim for s in all_sites if s.callee == k.name)
        why = coarsenable(k, multi)
        if why is None:
            eligible.add(k.name)
            entries.append(ManifestEntry(
                k.name, PASS, f"transformed (factor={factor})"))
        else:
            entries.append(skipped(k.name, PASS, why))

    if not eligible:
        return program, entries

    pgen = program_namegen(program)
    cf = pgen.fresh(CFACTOR_CONST)

    new_kernels: list[KernelDef] = []
    for kernel in program.kernels:
        gen = kernel_namegen(program, kernel)
        rewrites: dict[int, list[Stmt]] = {}
        sites = [s for s in all_sites
                 if s.kernel == kernel.name and s.callee in eligible]
        for idx, site in enumerate(sites):
            suffix = "" if idx == 0 else str(idx)
            gd = gen.fresh(f"_gd{suffix}")
            bd = gen.fresh(f"_bd{suffix}")
            callee = program.kernel(site.callee)
            arg_decls, new_args = hoist_args(site.stmt, callee, gen, suffix)
            shrunk = Binary("/", Binary("-", Binary("+", Var(gd), Var(cf)),
                                        IntLit(1)), Var(cf))
            rewrites[id(site.stmt)] = [
                LocalDecl("int", gd, scalar_config(site.stmt.grid)),
                LocalDecl("int", bd, scalar_config(site.stmt.block)),
                *arg_decls,
                replace(site.stmt, grid=shrunk, block=Var(bd),
                        args=tuple(new_args) + (Var(gd),)),
            ]
        body = _splice(kernel.body, rewrites) if rewrites else kernel.body

        if kernel.name in eligible:
            b = gen.fresh("_b")
            gdim = gen.fresh("_gDim")
            body = substitute_builtins(body, {
                ("blockIdx", "x"): Var(b),
                ("gridDim", "x"): Var(gdim),
            })
            chunk = For(
                var=b,
                init=Binary("*", Builtin("blockIdx", "x"), Var(cf)),
                bound=Binary("*", Binary("+", Builtin("blockIdx", "x"),
                                         IntLit(1)), Var(cf)),
                step=IntLit(1),
                body=(If(cond=Binary("<", Var(b), Var(gdim)),
                         then=body),))
            new_kernels.append(replace(
                kernel, params=tuple(kernel.params) + (Param(gdim, "int"),),
                body=(chunk,)))
        elif rewrites:
            new_kernels.append(replace(kernel, body=body))
        else:
            new_kernels.append(kernel)

    out = replace(program,
                  consts=tuple(program.consts) + (ConstDef(cf, factor),),
                  kernels=tuple(new_kernels))
    return recompute_program_flags(out), entries
