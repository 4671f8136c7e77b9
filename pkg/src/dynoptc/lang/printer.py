"""Source emission. parse(print_program(p)) == p for every valid tree."""

from __future__ import annotations

from .ast import (Assign, Atomic, Barrier, Binary, BufRead, Builtin, CallStmt,
                  Cast, Ceil, ConstDef, Dim3, Expr, Fence, FloatLit, For,
                  GlobalDecl, If, IntLit, KernelDef, LaunchStmt, LocalDecl,
                  Param, PhaseMarker, Program, Return, SharedDecl, Stmt,
                  Store, Unary, Var, WarpPrim, While)

INDENT = "    "

_PREC = {
    "||": 1, "&&": 2, "|": 3, "^": 4, "&": 5,
    "==": 6, "!=": 6,
    "<": 7, "<=": 7, ">": 7, ">=": 7,
    "<<": 8, ">>": 8,
    "+": 9, "-": 9,
    "*": 10, "/": 10, "%": 10,
}
_UNARY_PREC = 11
_PRIMARY_PREC = 12


def _float_text(v: float) -> str:
    s = repr(v)
    if "e" in s or "E" in s or "inf" in s or "nan" in s:
        s = f"{v:.10f}"
    if "." not in s:
        s += ".0"
    return s


def _expr(e: Expr) -> tuple[str, int]:
    if isinstance(e, IntLit):
        if e.kind == "long":
            return f"{e.value}L", _PRIMARY_PREC
        return str(e.value), _PRIMARY_PREC
    if isinstance(e, FloatLit):
        return _float_text(e.value), _PRIMARY_PREC
    if isinstance(e, Var):
        return e.name, _PRIMARY_PREC
    if isinstance(e, Builtin):
        return f"{e.base}.{e.axis}", _PRIMARY_PREC
    if isinstance(e, BufRead):
        return f"{e.buf}[{format_expr(e.index)}]", _PRIMARY_PREC
    if isinstance(e, Binary):
        prec = _PREC[e.op]
        lhs_text, lhs_prec = _expr(e.lhs)
        rhs_text, rhs_prec = _expr(e.rhs)
        if lhs_prec < prec:
            lhs_text = f"({lhs_text})"
        if rhs_prec <= prec:
            rhs_text = f"({rhs_text})"
        return f"{lhs_text} {e.op} {rhs_text}", prec
    if isinstance(e, Unary):
        inner_text, inner_prec = _expr(e.operand)
        if inner_prec < _UNARY_PREC:
            inner_text = f"({inner_text})"
        sep = " " if isinstance(e.operand, Unary) else ""
        return f"{e.op}{sep}{inner_text}", _UNARY_PREC
    if isinstance(e, Cast):
        inner_text, inner_prec = _expr(e.operand)
        if inner_prec < _UNARY_PREC:
            inner_text = f"({inner_text})"
        return f"({e.kind}){inner_text}", _UNARY_PREC
    if isinstance(e, Ceil):
        return f"ceil({format_expr(e.operand)})", _PRIMARY_PREC
    if isinstance(e, Dim3):
        inner = ", ".join(format_expr(c) for c in e.components)
        return f"dim3({inner})", _PRIMARY_PREC
    if isinstance(e, WarpPrim):
        inner = ", ".join(format_expr(a) for a in e.args)
        return f"{e.name}({inner})", _PRIMARY_PREC
    raise TypeError(f"unknown expression node {e!r}")


def format_expr(e: Expr) -> str:
    return _expr(e)[0]


def _stmt_lines(s: Stmt, depth: int) -> list[str]:
    pad = INDENT * depth

    def blk(stmts: tuple[Stmt, ...]) -> list[str]:
        out: list[str] = []
        for x in stmts:
            out.extend(_stmt_lines(x, depth + 1))
        return out

    if isinstance(s, LocalDecl):
        if s.init is None:
            return [f"{pad}{s.kind} {s.name};"]
        return [f"{pad}{s.kind} {s.name} = {format_expr(s.init)};"]
    if isinstance(s, Assign):
        return [f"{pad}{s.name} = {format_expr(s.value)};"]
    if isinstance(s, Store):
        return [f"{pad}{s.buf}[{format_expr(s.index)}] = {format_expr(s.value)};"]
    if isinstance(s, If):
        lines = [f"{pad}if ({format_expr(s.cond)}) {{"]
        lines.extend(blk(s.then))
        els = s.els
        while len(els) == 1 and isinstance(els[0], If):
            nested = els[0]
            lines.append(f"{pad}}} else if ({format_expr(nested.cond)}) {{")
            lines.extend(blk(nested.then))
            els = nested.els
        if els:
            lines.append(f"{pad}}} else {{")
            lines.extend(blk(els))
        lines.append(f"{pad}}}")
        return lines
    if isinstance(s, While):
        lines = [f"{pad}while ({format_expr(s.cond)}) {{"]
        lines.extend(blk(s.body))
        lines.append(f"{pad}}}")
        return lines
    if isinstance(s, For):
        head = (f"{pad}for (int {s.var} = {format_expr(s.init)}; "
                f"{s.var} < {format_expr(s.bound)}; "
                f"{s.var} += {format_expr(s.step)}) {{")
        lines = [head]
        lines.extend(blk(s.body))
        lines.append(f"{pad}}}")
        return lines
    if isinstance(s, Barrier):
        return [f"{pad}barrier();"]
    if isinstance(s, Fence):
        return [f"{pad}fence();"]
    if isinstance(s, Atomic):
        args = ", ".join([s.buf, format_expr(s.index)]
                         + [format_expr(o) for o in s.operands])
        call = f"atomic_{s.op}({args});"
        if s.result is None:
            return [f"{pad}{call}"]
        return [f"{pad}{s.result_kind} {s.result} = {call}"]
    if isinstance(s, LaunchStmt):
        args = ", ".join(format_expr(a) for a in s.args)
        return [f"{pad}launch {s.callee}<<<{format_expr(s.grid)}, "
                f"{format_expr(s.block)}>>>({args});"]
    if isinstance(s, CallStmt):
        args = ", ".join(format_expr(a) for a in s.args)
        return [f"{pad}{s.callee}({args});"]
    if isinstance(s, Return):
        return [f"{pad}return;"]
    if isinstance(s, SharedDecl):
        return [f"{pad}shared int {s.name}[{format_expr(s.extent)}];"]
    if isinstance(s, PhaseMarker):
        lines = [f"{pad}phase {s.phase} {{"]
        lines.extend(blk(s.body))
        lines.append(f"{pad}}}")
        return lines
    raise TypeError(f"unknown statement node {s!r}")


def format_stmt(s: Stmt, depth: int = 0) -> str:
    return "\n".join(_stmt_lines(s, depth))


def _kernel_lines(k: KernelDef) -> list[str]:
    params = ", ".join(
        f"{p.kind} *{p.name}" if p.is_buffer else f"{p.kind} {p.name}"
        for p in k.params)
    lines = [f"{k.kind} void {k.name}({params}) {{"]
    for s in k.body:
        lines.extend(_stmt_lines(s, 1))
    lines.append("}")
    return lines


def print_program(p: Program) -> str:
    chunks: list[str] = []
    for c in p.consts:
        chunks.append(f"const {c.name} = {c.value};")
    if p.consts:
        chunks.append("")
    for g in p.globals:
        extent = "" if g.extent is None else str(g.extent)
        chunks.append(f"global {g.elem} {g.name}[{extent}];")
    if p.globals:
        chunks.append("")
    for idx, k in enumerate(p.kernels):
        if idx:
            chunks.append("")
        chunks.extend(_kernel_lines(k))
    return "\n".join(chunks) + "\n"
