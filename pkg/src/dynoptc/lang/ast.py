"""AST for the mini kernel language.

All nodes are immutable dataclasses. Structural equality ignores source
positions (``pos`` fields compare as equal regardless of value) so that a
parse -> print -> parse round trip yields an equal tree. Transformation
passes build new nodes instead of mutating.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Literal, Optional, Union

ScalarKind = Literal["int", "long", "float"]

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1

PHASE_NAMES = ("parent", "launch", "agg", "disagg", "child")


@dataclass(frozen=True, slots=True)
class Pos:
    line: int
    col: int

    def __eq__(self, other: object) -> bool:  # positions never affect equality
        return isinstance(other, Pos)

    def __hash__(self) -> int:
        return 0


NOPOS = Pos(0, 0)


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class IntLit:
    value: int
    kind: ScalarKind = "int"  # "int" or "long"
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class FloatLit:
    value: float
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class Var:
    name: str
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class BufRead:
    buf: str
    index: "Expr"
    pos: Pos = NOPOS


BINARY_OPS = (
    "+", "-", "*", "/", "%",
    "<<", ">>", "&", "|", "^",
    "<", "<=", ">", ">=", "==", "!=",
    "&&", "||",
)


@dataclass(frozen=True, slots=True)
class Binary:
    op: str
    lhs: "Expr"
    rhs: "Expr"
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class Unary:
    op: Literal["-", "!"]
    operand: "Expr"
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class Cast:
    kind: ScalarKind
    operand: "Expr"
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class Ceil:
    """Ceiling applied to a (float) division, e.g. ceil(n / (float) b)."""
    operand: "Expr"
    pos: Pos = NOPOS


BUILTIN_BASES = ("blockIdx", "threadIdx", "gridDim", "blockDim")


@dataclass(frozen=True, slots=True)
class Builtin:
    base: str  # blockIdx | threadIdx | gridDim | blockDim
    axis: Literal["x", "y", "z"]
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class Dim3:
    components: tuple["Expr", ...]  # 1..3 entries
    pos: Pos = NOPOS


WARP_PRIMS = ("ballot", "shfl")


@dataclass(frozen=True, slots=True)
class WarpPrim:
    """Recognized so usesWarpPrimitive can be computed; never executable."""
    name: str
    args: tuple["Expr", ...]
    pos: Pos = NOPOS


Expr = Union[IntLit, FloatLit, Var, BufRead, Binary, Unary, Cast, Ceil,
             Builtin, Dim3, WarpPrim]


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class LocalDecl:
    kind: ScalarKind
    name: str
    init: Optional[Expr]
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class Assign:
    name: str
    value: Expr
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class Store:
    buf: str
    index: Expr
    value: Expr
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class If:
    cond: Expr
    then: tuple["Stmt", ...]
    els: tuple["Stmt", ...] = ()
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class While:
    cond: Expr
    body: tuple["Stmt", ...]
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class For:
    """Counted loop: for (int var = init; var < bound; var += step)."""
    var: str
    init: Expr
    bound: Expr
    step: Expr
    body: tuple["Stmt", ...]
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class Barrier:
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class Fence:
    pos: Pos = NOPOS


ATOMIC_OPS = ("add", "max", "cas")


@dataclass(frozen=True, slots=True)
class Atomic:
    """Atomic read-modify-write on a buffer element.

    op "add" is 32- or 64-bit depending on the target buffer's element kind;
    "max" and "cas" are 32-bit only. ``result``, when set, declares a fresh
    local of ``result_kind`` holding the old value.
    """
    op: str  # add | max | cas
    buf: str
    index: Expr
    operands: tuple[Expr, ...]  # add/max: 1; cas: (compare, new)
    result: Optional[str] = None
    result_kind: ScalarKind = "int"
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class LaunchStmt:
    callee: str
    grid: Expr
    block: Expr
    args: tuple[Expr, ...]
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class CallStmt:
    callee: str
    args: tuple[Expr, ...]
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class Return:
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class SharedDecl:
    """Per-block shared int array: shared name[extent];"""
    name: str
    extent: Expr  # integer literal or const name
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class PhaseMarker:
    """Region marker attributing contained work to a named timing phase."""
    phase: str  # one of PHASE_NAMES
    body: tuple["Stmt", ...]
    pos: Pos = NOPOS


Stmt = Union[LocalDecl, Assign, Store, If, While, For, Barrier, Fence,
             Atomic, LaunchStmt, CallStmt, Return, SharedDecl, PhaseMarker]


# ---------------------------------------------------------------------------
# Definitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Param:
    name: str
    kind: ScalarKind  # scalar kind, or element kind when is_buffer
    is_buffer: bool = False
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class KernelDef:
    name: str
    kind: Literal["kernel", "device"]
    params: tuple[Param, ...]
    body: tuple[Stmt, ...]
    uses_barrier: bool = False
    uses_shared: bool = False
    uses_warp: bool = False
    contains_launch: bool = False
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class GlobalDecl:
    """Global buffer. extent None means sized externally (dataset/glue)."""
    name: str
    elem: ScalarKind
    extent: Optional[int]
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class ConstDef:
    name: str
    value: int
    pos: Pos = NOPOS


@dataclass(frozen=True, slots=True)
class Program:
    consts: tuple[ConstDef, ...]
    globals: tuple[GlobalDecl, ...]
    kernels: tuple[KernelDef, ...]
    source_name: str = "<input>"

    def kernel(self, name: str) -> KernelDef:
        for k in self.kernels:
            if k.name == name:
                return k
        raise KeyError(name)

    def kernel_names(self) -> list[str]:
        return [k.name for k in self.kernels]

    def has_kernel(self, name: str) -> bool:
        return any(k.name == name for k in self.kernels)

    def const_map(self) -> dict[str, int]:
        return {c.name: c.value for c in self.consts}

    def global_map(self) -> dict[str, GlobalDecl]:
        return {g.name: g for g in self.globals}


# ---------------------------------------------------------------------------
# Traversal helpers
# ---------------------------------------------------------------------------

def walk_stmts(stmts: tuple[Stmt, ...]) -> Iterator[Stmt]:
    """Yield every statement in pre-order, descending into nested blocks."""
    for s in stmts:
        yield s
        if isinstance(s, If):
            yield from walk_stmts(s.then)
            yield from walk_stmts(s.els)
        elif isinstance(s, (While, For, PhaseMarker)):
            yield from walk_stmts(s.body)


def stmt_exprs(s: Stmt) -> Iterator[Expr]:
    """Yield the immediate expressions of one statement (not recursive)."""
    if isinstance(s, LocalDecl):
        if s.init is not None:
            yield s.init
    elif isinstance(s, Assign):
        yield s.value
    elif isinstance(s, Store):
        yield s.index
        yield s.value
    elif isinstance(s, If):
        yield s.cond
    elif isinstance(s, While):
        yield s.cond
    elif isinstance(s, For):
        yield s.init
        yield s.bound
        yield s.step
    elif isinstance(s, Atomic):
        yield s.index
        yield from s.operands
    elif isinstance(s, LaunchStmt):
        yield s.grid
        yield s.block
        yield from s.args
    elif isinstance(s, CallStmt):
        yield from s.args
    elif isinstance(s, SharedDecl):
        yield s.extent


def walk_exprs(e: Expr) -> Iterator[Expr]:
    """Yield an expression and all of its subexpressions, pre-order."""
    yield e
    if isinstance(e, BufRead):
        yield from walk_exprs(e.index)
    elif isinstance(e, Binary):
        yield from walk_exprs(e.lhs)
        yield from walk_exprs(e.rhs)
    elif isinstance(e, (Unary, Cast, Ceil)):
        yield from walk_exprs(e.operand)
    elif isinstance(e, Dim3):
        for c in e.components:
            yield from walk_exprs(c)
    elif isinstance(e, WarpPrim):
        for a in e.args:
            yield from walk_exprs(a)


def all_exprs(stmts: tuple[Stmt, ...]) -> Iterator[Expr]:
    for s in walk_stmts(stmts):
        for e in stmt_exprs(s):
            yield from walk_exprs(e)


def scan_flags(body: tuple[Stmt, ...],
               callees: Optional[dict[str, "KernelDef"]] = None,
               _seen: Optional[set[str]] = None) -> dict[str, bool]:
    """Recompute the four kernel feature flags from a body.

    Flags propagate transitively through serial calls so that e.g. a kernel
    calling a barrier-using device function is itself marked as using
    barriers. ``callees`` maps names to definitions; unknown callees are
    ignored (validation reports them separately).
    """
    flags = {"uses_barrier": False, "uses_shared": False,
             "uses_warp": False, "contains_launch": False}
    seen = _seen if _seen is not None else set()
    for s in walk_stmts(body):
        if isinstance(s, Barrier):
            flags["uses_barrier"] = True
        elif isinstance(s, SharedDecl):
            flags["uses_shared"] = True
        elif isinstance(s, LaunchStmt):
            flags["contains_launch"] = True
        elif isinstance(s, CallStmt) and callees is not None:
            target = callees.get(s.callee)
            if target is not None and target.name not in seen:
                seen.add(target.name)
                sub = scan_flags(target.body, callees, seen)
                for key, val in sub.items():
                    flags[key] = flags[key] or val
        for e in stmt_exprs(s):
            for sub_e in walk_exprs(e):
                if isinstance(sub_e, WarpPrim):
                    flags["uses_warp"] = True
    return flags


def with_flags(kernel: KernelDef, program_kernels: dict[str, KernelDef]) -> KernelDef:
    """Return a copy of ``kernel`` with flags recomputed from its body."""
    flags = scan_flags(kernel.body, program_kernels)
    return replace(kernel, **flags)


def recompute_program_flags(program: Program) -> Program:
    by_name = {k.name: k for k in program.kernels}
    new_kernels = tuple(with_flags(k, by_name) for k in program.kernels)
    return replace(program, kernels=new_kernels)


def expr_eq(a: Expr, b: Expr) -> bool:
    """Structural equality (positions already excluded by Pos.__eq__)."""
    return a == b


def replace_expr(e: Expr, old: Expr, new: Expr) -> Expr:
    """Return ``e`` with every subexpression equal to ``old`` replaced."""
    if expr_eq(e, old):
        return new
    if isinstance(e, BufRead):
        return replace(e, index=replace_expr(e.index, old, new))
    if isinstance(e, Binary):
        return replace(e, lhs=replace_expr(e.lhs, old, new),
                       rhs=replace_expr(e.rhs, old, new))
    if isinstance(e, (Unary, Cast, Ceil)):
        return replace(e, operand=replace_expr(e.operand, old, new))
    if isinstance(e, Dim3):
        return replace(e, components=tuple(replace_expr(c, old, new)
                                           for c in e.components))
    if isinstance(e, WarpPrim):
        return replace(e, args=tuple(replace_expr(a, old, new) for a in e.args))
    return e


def map_expr(e: Expr, fn) -> Expr:
    """Apply ``fn`` to ``e``; where it returns the node unchanged, rebuild
    the node with its children mapped. A replacement is returned as-is
    (callers recurse inside ``fn`` if they need to rewrite within it)."""
    out = fn(e)
    if out is not e:
        return out
    if isinstance(e, BufRead):
        return replace(e, index=map_expr(e.index, fn))
    if isinstance(e, Binary):
        return replace(e, lhs=map_expr(e.lhs, fn), rhs=map_expr(e.rhs, fn))
    if isinstance(e, (Unary, Cast, Ceil)):
        return replace(e, operand=map_expr(e.operand, fn))
    if isinstance(e, Dim3):
        return replace(e, components=tuple(map_expr(c, fn)
                                           for c in e.components))
    if isinstance(e, WarpPrim):
        return replace(e, args=tuple(map_expr(a, fn) for a in e.args))
    return e


def map_exprs_in_stmt(s: Stmt, fn) -> Stmt:
    """Rebuild a statement with ``fn`` applied to each contained expression,
    recursing into nested statement blocks."""
    def rec(stmts: tuple[Stmt, ...]) -> tuple[Stmt, ...]:
        return tuple(map_exprs_in_stmt(x, fn) for x in stmts)

    if isinstance(s, LocalDecl):
        return replace(s, init=None if s.init is None else fn(s.init))
    if isinstance(s, Assign):
        return replace(s, value=fn(s.value))
    if isinstance(s, Store):
        return replace(s, index=fn(s.index), value=fn(s.value))
    if isinstance(s, If):
        return replace(s, cond=fn(s.cond), then=rec(s.then), els=rec(s.els))
    if isinstance(s, While):
        return replace(s, cond=fn(s.cond), body=rec(s.body))
    if isinstance(s, For):
        return replace(s, init=fn(s.init), bound=fn(s.bound), step=fn(s.step),
                       body=rec(s.body))
    if isinstance(s, Atomic):
        return replace(s, index=fn(s.index),
                       operands=tuple(fn(o) for o in s.operands))
    if isinstance(s, LaunchStmt):
        return replace(s, grid=fn(s.grid), block=fn(s.block),
                       args=tuple(fn(a) for a in s.args))
    if isinstance(s, CallStmt):
        return replace(s, args=tuple(fn(a) for a in s.args))
    if isinstance(s, SharedDecl):
        return replace(s, extent=fn(s.extent))
    if isinstance(s, PhaseMarker):
        return replace(s, body=rec(s.body))
    return s


def substitute_builtins(stmts: tuple[Stmt, ...],
                        mapping: dict[tuple[str, str], Expr]) -> tuple[Stmt, ...]:
    """Replace builtin index/dimension reads per ``mapping`` (base, axis) -> expr."""
    def on_expr(e: Expr) -> Expr:
        if isinstance(e, Builtin):
            repl = mapping.get((e.base, e.axis))
            return repl if repl is not None else e
        if isinstance(e, BufRead):
            return replace(e, index=on_expr(e.index))
        if isinstance(e, Binary):
            return replace(e, lhs=on_expr(e.lhs), rhs=on_expr(e.rhs))
        if isinstance(e, (Unary, Cast, Ceil)):
            return replace(e, operand=on_expr(e.operand))
        if isinstance(e, Dim3):
            return replace(e, components=tuple(on_expr(c) for c in e.components))
        if isinstance(e, WarpPrim):
            return replace(e, args=tuple(on_expr(a) for a in e.args))
        return e

    return tuple(map_exprs_in_stmt(s, on_expr) for s in stmts)


def collect_local_names(kernel: KernelDef) -> set[str]:
    names = {p.name for p in kernel.params}
    for s in walk_stmts(kernel.body):
        if isinstance(s, LocalDecl):
            names.add(s.name)
        elif isinstance(s, For):
            names.add(s.var)
        elif isinstance(s, SharedDecl):
            names.add(s.name)
        elif isinstance(s, Atomic) and s.result is not None:
            names.add(s.result)
    return names


class NameGen:
    """Fresh-name generator avoiding collisions with existing identifiers."""

    def __init__(self, taken: set[str]):
        self._taken = set(taken)

    def fresh(self, base: str) -> str:
        if base not in self._taken:
            self._taken.add(base)
            return base
        i = 1
        while f"{base}{i}" in self._taken:
            i += 1
        name = f"{base}{i}"
        self._taken.add(name)
        return name
