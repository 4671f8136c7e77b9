"""Compiles kernels to Python thread functions.

Each kernel becomes a factory producing per-block thread closures. Locals map
to Python locals (mangled ``u_<name>``), global buffers to ``g_<name>``. All
trap-capable operations (buffer access, division, atomics, launches) go
through helper functions supplied by the machine, so the same generated code
runs in fast mode and in fence-checking mode.

Cost accounting: every executed statement bumps one slot of a per-thread
counter list ``C`` — slots 0..4 are the timing phases (parent, launch, agg,
disagg, child), chosen statically from enclosing ``phase`` markers with the
kernel's base phase as default, and slot 5 accumulates launch latency.
Integer arithmetic wraps to 32 bits; ``long`` values use Python's unbounded
integers (64-bit overflow is unreachable at supported problem scales) and are
truncated to 32 bits at ``(int)`` casts.

Kernels containing barriers compile to generator functions that yield the
barrier's identity; barrier-free kernels compile to plain functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from ..lang.ast import (Assign, Atomic, Barrier, Binary, BufRead, Builtin,
                        CallStmt, Cast, Ceil, Dim3, Expr, Fence, FloatLit,
                        For, If, IntLit, KernelDef, LaunchStmt, LocalDecl,
                        PhaseMarker, Program, Return, SharedDecl, Stmt, Store,
                        Unary, Var, WarpPrim, While, walk_stmts)

PHASE_INDEX = {"parent": 0, "launch": 1, "agg": 2, "disagg": 3, "child": 4}
LAT_SLOT = 5


def _w32(expr: str) -> str:
    return f"((({expr}) + 2147483648 & 4294967295) - 2147483648)"


@dataclass(slots=True)
class CompiledKernel:
    name: str
    tier: str  # "plain" | "barrier"
    contains_launch: bool
    param_names: tuple[str, ...]
    global_reads: tuple[str, ...]
    factory: Callable  # factory(H) -> make_block(GID, bx, gdim, bdim, args, BUF, B) -> thread fn
    source: str


class _KernelCompiler:
    def __init__(self, program: Program, kernel: KernelDef):
        self.p = program
        self.k = kernel
        self.consts = program.const_map()
        self.globals = program.global_map()
        self.kernels = {kd.name: kd for kd in program.kernels}
        self.lines: list[str] = []
        self.kinds: dict[str, str] = {}  # mangled python name -> scalar kind
        self.buf_kinds: dict[str, str] = {}  # mangled name -> elem kind
        self.barrier_ids: dict[int, int] = {}
        self.has_barrier = any(isinstance(s, Barrier)
                               for s in walk_stmts(kernel.body))
        self.used_globals: list[str] = []
        self.dev_callees: list[str] = []

    # -- name handling --------------------------------------------------------

    def ref(self, name: str) -> str:
        """Python expression for a scalar or buffer name in kernel scope."""
        if name in self.consts:
            return str(self.consts[name])
        if name in self.globals:
            g = f"g_{name}"
            if name not in self.used_globals:
                self.used_globals.append(name)
            return g
        return f"u_{name}"

    def kind(self, name: str) -> str:
        if name in self.consts:
            return "int"
        if name in self.globals:
            return f"buffer:{self.globals[name].elem}"
        return self.kinds.get(f"u_{name}", "int")

    def buf_elem(self, name: str) -> str:
        if name in self.globals:
            return self.globals[name].elem
        return self.buf_kinds.get(self.ref(name), "int")

    # -- expression codegen ----------------------------------------------------

    def expr_kind(self, e: Expr) -> str:
        if isinstance(e, IntLit):
            return e.kind
        if isinstance(e, FloatLit):
            return "float"
        if isinstance(e, Var):
            k = self.kind(e.name)
            return "int" if k.startswith("buffer:") else k
        if isinstance(e, Builtin):
            return "int"
        if isinstance(e, BufRead):
            return self.buf_elem(e.buf)
        if isinstance(e, Cast):
            return e.kind
        if isinstance(e, Ceil):
            return "float"
        if isinstance(e, Unary):
            return "int" if e.op == "!" else self.expr_kind(e.operand)
        if isinstance(e, WarpPrim):
            return "int"
        if isinstance(e, Binary):
            if e.op in ("<", "<=", ">", ">=", "==", "!=", "&&", "||"):
                return "int"
            lk = self.expr_kind(e.lhs)
            rk = self.expr_kind(e.rhs)
            if e.op in ("<<", ">>"):
                return lk
            if "float" in (lk, rk):
                return "float"
            if "long" in (lk, rk):
                return "long"
            return "int"
        raise TypeError(e)

    def gen_expr(self, e: Expr) -> str:
        if isinstance(e, IntLit):
            return str(e.value)
        if isinstance(e, FloatLit):
            return repr(e.value)
        if isinstance(e, Var):
            return self.ref(e.name)
        if isinstance(e, Builtin):
            if e.axis == "x":
                return {"blockIdx": "bx", "threadIdx": "tid",
                        "gridDim": "gdim", "blockDim": "bdim"}[e.base]
            return "0" if e.base in ("blockIdx", "threadIdx") else "1"
        if isinstance(e, BufRead):
            return (f"_rd({self.ref(e.buf)}, {self.gen_expr(e.index)}, "
                    f"{e.pos.line}, TK)")
        if isinstance(e, Cast):
            inner = self.gen_expr(e.operand)
            if e.kind == "float":
                return f"float({inner})"
            if e.kind == "long":
                return f"int({inner})"
            return _w32(f"int({inner})")
        if isinstance(e, Ceil):
            return f"_ceil({self.gen_expr(e.operand)})"
        if isinstance(e, Unary):
            inner = self.gen_expr(e.operand)
            if e.op == "!":
                return f"(0 if ({inner}) else 1)"
            if self.expr_kind(e.operand) == "int":
                return _w32(f"-({inner})")
            return f"(-({inner}))"
        if isinstance(e, WarpPrim):
            return f"_warp({e.pos.line})"
        if isinstance(e, Dim3):
            raise AssertionError("dim3 handled at launch sites")
        if isinstance(e, Binary):
            return self.gen_binary(e)
        raise TypeError(e)

    def gen_binary(self, e: Binary) -> str:
        a = self.gen_expr(e.lhs)
        b = self.gen_expr(e.rhs)
        op = e.op
        kind = self.expr_kind(e)
        if op in ("<", "<=", ">", ">=", "==", "!="):
            return f"(({a}) {op} ({b}))"
        if op == "&&":
            return f"(1 if ({a}) and ({b}) else 0)"
        if op == "||":
            return f"(1 if ({a}) or ({b}) else 0)"
        if op in ("+", "-", "*"):
            raw = f"({a}) {op} ({b})"
            return _w32(raw) if kind == "int" else f"(({a}) {op} ({b}))"
        if op == "/":
            if kind == "float":
                return f"_fdv({a}, {b}, {e.pos.line})"
            return f"_dv({a}, {b}, {e.pos.line})" if kind == "long" \
                else _w32(f"_dv({a}, {b}, {e.pos.line})")
        if op == "%":
            return f"_md({a}, {b}, {e.pos.line})"
        if op == "<<":
            mask = 31 if kind == "int" else 63
            raw = f"({a}) << (({b}) & {mask})"
            return _w32(raw) if kind == "int" else f"(({raw}))"
        if op == ">>":
            mask = 31 if kind == "int" else 63
            return f"(({a}) >> (({b}) & {mask}))"
        if op in ("&", "|", "^"):
            return f"(({a}) {op} ({b}))"
        raise ValueError(op)

    # -- statement codegen ------------------------------------------------------

    def emit(self, depth: int, text: str) -> None:
        self.lines.append("    " * depth + text)

    def tick(self, depth: int, bucket: str) -> None:
        self.emit(depth, f"C[{bucket}] += 1")

    def store_helper(self, buf: str) -> str:
        elem = self.buf_elem(buf)
        return {"int": "_sti", "long": "_stl", "float": "_stf"}[elem]

    def gen_stmt(self, s: Stmt, depth: int, bucket: str) -> None:
        if isinstance(s, LocalDecl):
            self.kinds[f"u_{s.name}"] = s.kind
            self.tick(depth, bucket)
            if s.init is None:
                zero = "0.0" if s.kind == "float" else "0"
                self.emit(depth, f"u_{s.name} = {zero}")
            else:
                val = self.coerce(s.init, s.kind)
                self.emit(depth, f"u_{s.name} = {val}")
        elif isinstance(s, Assign):
            self.tick(depth, bucket)
            kind = self.kind(s.name)
            val = self.coerce(s.value, kind)
            self.emit(depth, f"u_{s.name} = {val}")
        elif isinstance(s, Store):
            self.tick(depth, bucket)
            helper = self.store_helper(s.buf)
            self.emit(depth, f"{helper}({self.ref(s.buf)}, "
                             f"{self.gen_expr(s.index)}, "
                             f"{self.gen_expr(s.value)}, {s.pos.line}, TK)")
        elif isinstance(s, If):
            self.tick(depth, bucket)
            self.emit(depth, f"if {self.gen_expr(s.cond)}:")
            self.gen_block(s.then, depth + 1, bucket)
            if s.els:
                self.emit(depth, "else:")
                self.gen_block(s.els, depth + 1, bucket)
        elif isinstance(s, While):
            self.emit(depth, "while True:")
            self.tick(depth + 1, bucket)
            self.emit(depth + 1, f"if not ({self.gen_expr(s.cond)}): break")
            self.gen_block(s.body, depth + 1, bucket)
        elif isinstance(s, For):
            self.kinds[f"u_{s.var}"] = "int"
            self.tick(depth, bucket)
            self.emit(depth, f"u_{s.var} = {self.coerce(s.init, 'int')}")
            self.emit(depth, "while True:")
            self.tick(depth + 1, bucket)
            self.emit(depth + 1,
                      f"if not ((u_{s.var}) < ({self.gen_expr(s.bound)})): break")
            self.gen_block(s.body, depth + 1, bucket)
            self.emit(depth + 1,
                      "u_%s = %s" % (s.var, _w32(f"u_{s.var} + ({self.gen_expr(s.step)})")))
        elif isinstance(s, Barrier):
            self.tick(depth, bucket)
            bid = self.barrier_ids.setdefault(id(s), len(self.barrier_ids))
            self.emit(depth, f"yield {bid}")
        elif isinstance(s, Fence):
            self.tick(depth, bucket)
            self.emit(depth, "_fence(TK)")
        elif isinstance(s, Atomic):
            self.tick(depth, bucket)
            elem = self.buf_elem(s.buf)
            if s.op == "add":
                helper = "_at_add64" if elem == "long" else "_at_add32"
                call = (f"{helper}({self.ref(s.buf)}, {self.gen_expr(s.index)}, "
                        f"{self.gen_expr(s.operands[0])}, {s.pos.line}, TK)")
            elif s.op == "max":
                call = (f"_at_max({self.ref(s.buf)}, {self.gen_expr(s.index)}, "
                        f"{self.gen_expr(s.operands[0])}, {s.pos.line}, TK)")
            else:
                call = (f"_at_cas({self.ref(s.buf)}, {self.gen_expr(s.index)}, "
                        f"{self.gen_expr(s.operands[0])}, "
                        f"{self.gen_expr(s.operands[1])}, {s.pos.line}, TK)")
            if s.result is None:
                self.emit(depth, call)
            else:
                self.kinds[f"u_{s.result}"] = s.result_kind
                self.emit(depth, f"u_{s.result} = {call}")
        elif isinstance(s, LaunchStmt):
            self.tick(depth, bucket)
            self.gen_launch(s, depth)
        elif isinstance(s, CallStmt):
            self.tick(depth, bucket)
            callee = self.kernels[s.callee]
            if s.callee not in self.dev_callees:
                self.dev_callees.append(s.callee)
            args = ", ".join(self.coerce(a, p.kind) if not p.is_buffer
                             else self.gen_expr(a)
                             for a, p in zip(s.args, callee.params))
            self.emit(depth, f"C[{bucket}] += _dev_{s.callee}(C, {bucket}, TK, {args})")
        elif isinstance(s, Return):
            self.tick(depth, bucket)
            self.emit(depth, "return")
        elif isinstance(s, SharedDecl):
            # allocation happens at block scope; the decl itself is free
            self.emit(depth, "pass")
        elif isinstance(s, PhaseMarker):
            self.gen_block(s.body, depth, str(PHASE_INDEX[s.phase]))
        else:
            raise TypeError(s)

    def coerce(self, e: Expr, kind: str) -> str:
        """Value of ``e`` converted to ``kind`` (C assignment semantics)."""
        src = self.expr_kind(e)
        text = self.gen_expr(e)
        if kind == src:
            return text
        if kind == "float":
            return f"float({text})"
        if kind == "long":
            return f"int({text})"
        return _w32(f"int({text})")

    def gen_launch(self, s: LaunchStmt, depth: int) -> None:
        grid = self.gen_dim(s.grid, depth, "lg")
        block = self.gen_dim(s.block, depth, "lb")
        callee = self.kernels[s.callee]
        parts = []
        for a, p in zip(s.args, callee.params):
            if p.is_buffer:
                parts.append(self.gen_expr(a))
            else:
                parts.append(self.coerce(a, p.kind))
        args = ", ".join(parts)
        tail = "," if len(parts) == 1 else ""
        self.emit(depth, f"C[{LAT_SLOT}] += _launch({s.callee!r}, {grid}, "
                         f"{block}, ({args}{tail}), {s.pos.line}, TK)")

    def gen_dim(self, e: Expr, depth: int, tmp: str) -> str:
        if isinstance(e, Dim3):
            comps = [self.gen_expr(c) for c in e.components]
            while len(comps) < 3:
                comps.append("1")
            return f"_d3({comps[0]}, {comps[1]}, {comps[2]}, {e.pos.line})"
        return self.gen_expr(e)

    def gen_block(self, stmts: tuple[Stmt, ...], depth: int, bucket: str) -> None:
        if not stmts:
            self.emit(depth, "pass")
            return
        for s in stmts:
            self.gen_stmt(s, depth, bucket)

    # -- top-level factory ------------------------------------------------------

    def compile(self) -> CompiledKernel:
        k = self.k
        for p in k.params:
            if p.is_buffer:
                self.buf_kinds[f"u_{p.name}"] = p.kind
                self.kinds[f"u_{p.name}"] = p.kind
            else:
                self.kinds[f"u_{p.name}"] = p.kind

        body_lines_marker = len(self.lines)
        self.gen_block(k.body, 3, "B")
        body = self.lines[body_lines_marker:]
        self.lines = self.lines[:body_lines_marker]

        shared = [s for s in k.body if isinstance(s, SharedDecl)]
        params = ", ".join(f"u_{p.name}" for p in k.params)
        unpack = f"({params},) = args" if k.params else "pass"

        out = self.lines
        out.append("def _factory(H):")
        for h in ("rd", "sti", "stl", "stf", "dv", "fdv", "md", "ceil",
                  "at_add32", "at_add64", "at_max", "at_cas", "launch",
                  "fence", "warp", "d3"):
            out.append(f"    _{h} = H[{h!r}]")
        for dev in self.dev_callees:
            out.append(f"    _dev_{dev} = H['dev'][{dev!r}]")
        out.append("    def make_block(GID, bx, gdim, bdim, args, BUF, B):")
        out.append(f"        {unpack}")
        for gname in self.used_globals:
            out.append(f"        g_{gname} = BUF({gname!r})")
        for sd in shared:
            extent = (self.consts[sd.extent.name]
                      if isinstance(sd.extent, Var) else sd.extent.value)
            out.append(f"        u_{sd.name} = [0] * {extent}")
        out.append("        def _thr(tid, C, TK):")
        out.extend(body)
        if not self.has_barrier:
            # make every thread function a generator in barrier kernels only;
            # plain kernels use a plain function
            pass
        out.append("            return")
        out.append("        return _thr")
        out.append("    return make_block")

        src = "\n".join(out) + "\n"
        ns: dict = {}
        code = _compile_cached(src, f"<kernel {k.name}>")
        exec(code, ns)
        return CompiledKernel(
            name=k.name,
            tier="barrier" if self.has_barrier else "plain",
            contains_launch=k.contains_launch,
            param_names=tuple(p.name for p in k.params),
            global_reads=tuple(self.used_globals),
            factory=ns["_factory"],
            source=src,
        )


class _DeviceCompiler(_KernelCompiler):
    """Device functions compile to plain callables returning their own
    statement count; costs fold into the caller's active phase slot."""

    def compile_device(self) -> tuple[str, Callable, list[str]]:
        k = self.k
        for p in k.params:
            if p.is_buffer:
                self.buf_kinds[f"u_{p.name}"] = p.kind
            self.kinds[f"u_{p.name}"] = p.kind

        marker = len(self.lines)
        self.gen_device_block(k.body, 2)
        body = self.lines[marker:]
        self.lines = self.lines[:marker]

        params = ", ".join(f"u_{p.name}" for p in k.params)
        out = self.lines
        out.append("def _factory(H):")
        for h in ("rd", "sti", "stl", "stf", "dv", "fdv", "md", "ceil",
                  "at_add32", "at_add64", "at_max", "at_cas", "launch",
                  "fence", "warp", "d3"):
            out.append(f"    _{h} = H[{h!r}]")
        out.append("    _buf = H['buf']")
        for dev in self.dev_callees:
            out.append(f"    _dev_{dev} = H['dev'][{dev!r}]")
        head = f"    def _fn(C, B, TK{', ' + params if params else ''}):"
        out.append(head)
        out.append("        n = 0")
        for gname in self.used_globals:
            out.append(f"        g_{gname} = _buf({gname!r})")
        out.extend(body)
        out.append("        return n")
        out.append("    return _fn")

        src = "\n".join(out) + "\n"
        ns: dict = {}
        exec(_compile_cached(src, f"<device {k.name}>"), ns)
        return src, ns["_factory"], self.dev_callees

    def tick(self, depth: int, bucket: str) -> None:
        self.emit(depth, "n += 1")

    def gen_stmt(self, s: Stmt, depth: int, bucket: str) -> None:
        if isinstance(s, Return):
            self.emit(depth, "n += 1")
            self.emit(depth, "return n")
            return
        if isinstance(s, CallStmt):
            self.emit(depth, "n += 1")
            callee = self.kernels[s.callee]
            if s.callee not in self.dev_callees:
                self.dev_callees.append(s.callee)
            args = ", ".join(self.coerce(a, p.kind) if not p.is_buffer
                             else self.gen_expr(a)
                             for a, p in zip(s.args, callee.params))
            self.emit(depth, f"n += _dev_{s.callee}(C, B, TK, {args})")
            return
        super().gen_stmt(s, depth, bucket)

    def gen_device_block(self, stmts: tuple[Stmt, ...], depth: int) -> None:
        self.gen_block(stmts, depth, "B")


_code_cache: dict[str, object] = {}


def _compile_cached(src: str, label: str):
    key = src
    got = _code_cache.get(key)
    if got is None:
        got = compile(src, label, "exec")
        _code_cache[key] = got
    return got


class CompiledProgram:
    """All kernels of a program compiled, with device functions linked."""

    def __init__(self, program: Program):
        self.program = program
        self.kernels: dict[str, CompiledKernel] = {}
        self._dev_factories: dict[str, tuple[Callable, list[str]]] = {}
        for k in program.kernels:
            if k.kind == "device":
                _, factory, deps = _DeviceCompiler(program, k).compile_device()
                self._dev_factories[k.name] = (factory, deps)
            else:
                self.kernels[k.name] = _KernelCompiler(program, k).compile()

    def instantiate(self, helpers: dict) -> dict[str, Callable]:
        """Bind machine helpers; returns kernel name -> make_block."""
        dev: dict[str, Callable] = {}
        helpers = dict(helpers)
        helpers["dev"] = dev

        remaining = dict(self._dev_factories)
        while remaining:
            progressed = False
            for name in list(remaining):
                factory, deps = remaining[name]
                if all(d in dev for d in deps):
                    dev[name] = factory(helpers)
                    del remaining[name]
                    progressed = True
            if not progressed:  # validator rejects cycles; defensive only
                raise RuntimeError("device function dependency cycle")

        return {name: ck.factory(helpers) for name, ck in self.kernels.items()}
