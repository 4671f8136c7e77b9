"""Static checks. Diagnostics render as file:line:col: severity: message."""

from __future__ import annotations

from .ast import (Assign, Atomic, Barrier, Binary, BufRead, Builtin, CallStmt,
                  Cast, Ceil, Dim3, Expr, Fence, FloatLit, For, If, IntLit,
                  KernelDef, LaunchStmt, LocalDecl, PhaseMarker, Program,
                  Return, SharedDecl, Stmt, Store, Unary, Var, WarpPrim,
                  While, INT32_MAX, INT32_MIN)
from .lexer import LangError

WARP_ARITY = {"ballot": 1, "shfl": 2}


class Validator:
    def __init__(self, program: Program):
        self.p = program
        self.errors: list[LangError] = []
        self.consts = program.const_map()
        self.globals = program.global_map()
        self.kernels = {k.name: k for k in program.kernels}

    def err(self, msg: str, pos, category: str = "semantic",
            severity: str = "error") -> None:
        self.errors.append(LangError(msg, pos.line, pos.col,
                                     severity=severity,
                                     source_name=self.p.source_name,
                                     category=category))

    # -- program ------------------------------------------------------------

    def run(self) -> list[LangError]:
        seen: dict[str, str] = {}
        for c in self.p.consts:
            if c.name in seen:
                self.err(f"duplicate definition of {c.name!r}", c.pos)
            seen[c.name] = "const"
            if not (INT32_MIN <= c.value <= INT32_MAX):
                self.err(f"const {c.name!r} does not fit in int", c.pos)
        for g in self.p.globals:
            if g.name in seen:
                self.err(f"duplicate definition of {g.name!r}", g.pos)
            seen[g.name] = "global"
            if g.extent is not None and g.extent <= 0:
                self.err(f"buffer {g.name!r} needs a positive extent", g.pos)
        for k in self.p.kernels:
            if k.name in seen:
                self.err(f"duplicate definition of {k.name!r}", k.pos)
            seen[k.name] = "kernel"
        self.check_cycles()
        for k in self.p.kernels:
            self.check_kernel(k)
        return self.errors

    def check_cycles(self) -> None:
        """Reject call cycles and launch cycles (including self-launch)."""
        from .ast import walk_stmts
        graph: dict[str, list[tuple[str, str, object]]] = {}
        for k in self.p.kernels:
            edges: list[tuple[str, str, object]] = []
            seen_edges: set[tuple[str, str]] = set()
            for s in walk_stmts(k.body):
                if isinstance(s, CallStmt) and s.callee in self.kernels:
                    key = ("call", s.callee)
                elif isinstance(s, LaunchStmt) and s.callee in self.kernels:
                    key = ("launch", s.callee)
                else:
                    continue
                if key not in seen_edges:
                    seen_edges.add(key)
                    edges.append((key[1], key[0], s.pos))
            graph[k.name] = edges

        state: dict[str, int] = {}

        def visit(name: str) -> None:
            state[name] = 1
            for dep, kind, pos in graph.get(name, ()):
                if state.get(dep) == 1:
                    if kind == "launch":
                        self.err(f"recursive launch rejected: {dep!r} "
                                 f"re-enters its own launch chain", pos,
                                 category="recursion")
                    else:
                        self.err(f"recursive call cycle through {dep!r}", pos,
                                 category="recursion")
                    continue
                if dep not in state:
                    visit(dep)
            state[name] = 2

        for k in self.p.kernels:
            if k.name not in state:
                visit(k.name)

    # -- kernels ------------------------------------------------------------

    def check_kernel(self, k: KernelDef) -> None:
        kernel_names: set[str] = set()
        env: dict[str, str] = {}  # name -> "int"|"long"|"float"|"buffer:int"|...
        for name in self.consts:
            env[name] = "int"
        for g in self.globals.values():
            env[g.name] = f"buffer:{g.elem}"
        for param in k.params:
            if param.name in kernel_names or param.name in self.consts \
                    or param.name in self.globals:
                self.err(f"parameter {param.name!r} collides with another name",
                         param.pos)
            kernel_names.add(param.name)
            env[param.name] = f"buffer:{param.kind}" if param.is_buffer else param.kind

        scopes: list[set[str]] = [set(p.name for p in k.params)]
        shared_names: set[str] = set()

        def declare(name: str, ty: str, pos) -> None:
            if name in kernel_names or name in self.consts or name in self.globals:
                self.err(f"{name!r} is already defined", pos)
                return
            kernel_names.add(name)
            scopes[-1].add(name)
            env[name] = ty

        def visible(name: str) -> bool:
            if name in self.consts or name in self.globals:
                return True
            return any(name in sc for sc in scopes)

        def kind_of(name: str) -> str | None:
            return env.get(name) if visible(name) else None

        def check_scalar(e: Expr) -> None:
            if isinstance(e, IntLit) or isinstance(e, FloatLit):
                return
            if isinstance(e, Var):
                ty = kind_of(e.name)
                if ty is None:
                    self.err(f"undefined name {e.name!r}", e.pos)
                elif ty.startswith("buffer:"):
                    self.err(f"buffer {e.name!r} used as a scalar", e.pos)
                return
            if isinstance(e, Builtin):
                if k.kind != "kernel":
                    self.err(f"{e.base}.{e.axis} is not available in a "
                             f"device function", e.pos)
                return
            if isinstance(e, BufRead):
                check_buffer_name(e.buf, e.pos)
                check_scalar(e.index)
                return
            if isinstance(e, Binary):
                check_scalar(e.lhs)
                check_scalar(e.rhs)
                if e.op in ("/", "%"):
                    rhs = e.rhs
                    if (isinstance(rhs, IntLit) and rhs.value == 0) or \
                            (isinstance(rhs, FloatLit) and rhs.value == 0.0):
                        self.err("division by a zero literal", e.pos,
                                 category="division-by-zero")
                return
            if isinstance(e, (Unary, Cast, Ceil)):
                check_scalar(e.operand)
                return
            if isinstance(e, Dim3):
                self.err("dim3 is only valid as a launch configuration", e.pos)
                for c in e.components:
                    check_scalar(c)
                return
            if isinstance(e, WarpPrim):
                want = WARP_ARITY[e.name]
                if len(e.args) != want:
                    self.err(f"{e.name} takes {want} argument(s)", e.pos)
                for a in e.args:
                    check_scalar(a)
                return
            raise TypeError(e)

        def check_launch_dim(e: Expr) -> None:
            if isinstance(e, Dim3):
                if not e.components:
                    self.err("dim3 needs at least one component", e.pos)
                if len(e.components) > 1:
                    self.err("multi-dimensional launch: extra dim3 components "
                             "are linearized into the block count", e.pos,
                             category="multi-dim-launch", severity="info")
                for c in e.components:
                    check_scalar(c)
            else:
                check_scalar(e)

        def check_buffer_name(name: str, pos) -> str | None:
            ty = kind_of(name)
            if ty is None:
                self.err(f"undefined buffer {name!r}", pos)
                return None
            if not ty.startswith("buffer:"):
                self.err(f"{name!r} is not a buffer", pos)
                return None
            return ty.split(":", 1)[1]

        def check_args(callee: KernelDef, args: tuple[Expr, ...], pos,
                       what: str, is_launch: bool = False) -> None:
            if len(args) != len(callee.params):
                self.err(f"{what} {callee.name!r} takes {len(callee.params)} "
                         f"argument(s), got {len(args)}", pos)
                return
            for param, arg in zip(callee.params, args):
                if param.is_buffer:
                    if isinstance(arg, Var):
                        if is_launch and arg.name in shared_names:
                            self.err(f"shared array {arg.name!r} cannot be "
                                     f"passed to a launched kernel", arg.pos)
                        elem = check_buffer_name(arg.name, arg.pos)
                        if elem is not None and elem != param.kind:
                            self.err(
                                f"buffer {arg.name!r} has element type {elem}, "
                                f"parameter {param.name!r} expects {param.kind}",
                                arg.pos)
                    else:
                        self.err(f"argument for buffer parameter "
                                 f"{param.name!r} must name a buffer", pos)
                else:
                    check_scalar(arg)

        def check_block(stmts: tuple[Stmt, ...], top: bool = False) -> None:
            scopes.append(set())
            for s in stmts:
                check_stmt(s, top)
            scopes.pop()

        def check_stmt(s: Stmt, top: bool = False) -> None:
            if isinstance(s, LocalDecl):
                if s.init is not None:
                    check_scalar(s.init)
                declare(s.name, s.kind, s.pos)
            elif isinstance(s, Assign):
                ty = kind_of(s.name)
                if ty is None:
                    self.err(f"assignment to undefined name {s.name!r}", s.pos)
                elif ty.startswith("buffer:"):
                    self.err(f"cannot assign to buffer {s.name!r}", s.pos)
                elif s.name in self.consts:
                    self.err(f"cannot assign to const {s.name!r}", s.pos)
                check_scalar(s.value)
            elif isinstance(s, Store):
                check_buffer_name(s.buf, s.pos)
                check_scalar(s.index)
                check_scalar(s.value)
            elif isinstance(s, If):
                check_scalar(s.cond)
                check_block(s.then)
                check_block(s.els)
            elif isinstance(s, While):
                check_scalar(s.cond)
                check_block(s.body)
            elif isinstance(s, For):
                check_scalar(s.init)
                scopes.append(set())
                declare(s.var, "int", s.pos)
                check_scalar(s.bound)
                check_scalar(s.step)
                for x in s.body:
                    check_stmt(x)
                scopes.pop()
            elif isinstance(s, Barrier):
                if k.kind != "kernel":
                    self.err("barrier() is only valid inside a kernel", s.pos)
            elif isinstance(s, Fence):
                if k.kind != "kernel":
                    self.err("fence() is only valid inside a kernel", s.pos)
            elif isinstance(s, Atomic):
                elem = check_buffer_name(s.buf, s.pos)
                check_scalar(s.index)
                for o in s.operands:
                    check_scalar(o)
                if elem is not None:
                    if s.op == "add":
                        if elem == "float":
                            self.err("atomic_add needs an int or long buffer",
                                     s.pos)
                    elif elem != "int":
                        self.err(f"atomic_{s.op} needs an int buffer", s.pos)
                if s.result is not None:
                    want = elem if s.op == "add" and elem == "long" else "int"
                    if elem is not None and s.result_kind != want:
                        self.err(f"atomic_{s.op} on this buffer yields {want}, "
                                 f"result declared {s.result_kind}", s.pos)
                    declare(s.result, s.result_kind, s.pos)
            elif isinstance(s, LaunchStmt):
                if k.kind != "kernel":
                    self.err("launch is only valid inside a kernel", s.pos)
                target = self.kernels.get(s.callee)
                if target is None:
                    self.err(f"launch of undefined kernel {s.callee!r}", s.pos)
                elif target.kind != "kernel":
                    self.err(f"cannot launch device function {s.callee!r}",
                             s.pos)
                else:
                    check_args(target, s.args, s.pos, "kernel",
                               is_launch=True)
                check_launch_dim(s.grid)
                check_launch_dim(s.block)
            elif isinstance(s, CallStmt):
                target = self.kernels.get(s.callee)
                if target is None:
                    self.err(f"call to undefined function {s.callee!r}", s.pos)
                elif target.kind != "device":
                    self.err(f"{s.callee!r} is a kernel; use launch", s.pos)
                else:
                    check_args(target, s.args, s.pos, "function")
            elif isinstance(s, Return):
                pass
            elif isinstance(s, SharedDecl):
                if k.kind != "kernel":
                    self.err("shared arrays are only valid inside a kernel",
                             s.pos)
                elif not top:
                    self.err("shared arrays must be declared at the top level "
                             "of the kernel body", s.pos)
                if isinstance(s.extent, IntLit):
                    if s.extent.value <= 0:
                        self.err("shared array extent must be positive", s.pos)
                elif not (isinstance(s.extent, Var)
                          and s.extent.name in self.consts):
                    self.err("shared array extent must be a constant", s.pos)
                else:
                    if self.consts[s.extent.name] <= 0:
                        self.err("shared array extent must be positive", s.pos)
                declare(s.name, "buffer:int", s.pos)
                shared_names.add(s.name)
            elif isinstance(s, PhaseMarker):
                if k.kind != "kernel":
                    self.err("phase markers are only valid inside a kernel",
                             s.pos)
                check_block(s.body, top)
            else:
                raise TypeError(s)

        check_block(k.body, top=True)


def validate(program: Program) -> list[LangError]:
    return Validator(program).run()


def check(program: Program) -> None:
    """Raise the first error-severity diagnostic if the program is invalid."""
    for e in validate(program):
        if e.severity == "error":
            raise e
