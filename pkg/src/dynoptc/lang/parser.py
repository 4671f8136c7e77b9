"""Recursive-descent parser producing the AST in ast.py.

Grammar sketch (C-like; see docs/language.md for the full reference):

    program   := (const | global | kernel)*
    const     := "const" IDENT "=" INT ";"
    global    := "global" kind IDENT "[" INT? "]" ";"
    kernel    := ("kernel" | "device") "void" IDENT "(" params ")" block
    stmt      := decl | assign | store | if | while | for | barrier | fence
               | atomic | launch | call | return | shared | phase
    launch    := "launch" IDENT "<<<" expr "," expr ">>>" "(" args ")" ";"

Expressions use C precedence. Casts are "(" kind ")" unary.
"""

from __future__ import annotations

from .ast import (Assign, Atomic, Barrier, Binary, BufRead, Builtin, CallStmt,
                  Cast, Ceil, ConstDef, Dim3, Expr, Fence, FloatLit, For,
                  GlobalDecl, If, IntLit, KernelDef, LaunchStmt, LocalDecl,
                  Param, PhaseMarker, Pos, Program, Return, SharedDecl, Stmt,
                  Store, Unary, Var, WarpPrim, While, PHASE_NAMES,
                  recompute_program_flags)
from .lexer import LangError, Token, tokenize

SCALAR_KINDS = ("int", "long", "float")
ATOMIC_FUNCS = {"atomic_add": "add", "atomic_max": "max", "atomic_cas": "cas"}
ATOMIC_ARITY = {"add": 1, "max": 1, "cas": 2}
WARP_FUNCS = ("ballot", "shfl")
BUILTIN_BASES = ("blockIdx", "threadIdx", "gridDim", "blockDim")


class Parser:
    def __init__(self, toks: list[Token], source_name: str):
        self.toks = toks
        self.i = 0
        self.source_name = source_name

    # -- token plumbing -----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        if self.at(kind, text):
            return self.next()
        return None

    def expect(self, kind: str, text: str | None = None) -> Token:
        t = self.peek()
        if not self.at(kind, text):
            want = text if text is not None else kind
            got = t.text if t.text else t.kind
            raise self.err(f"expected {want!r}, found {got!r}", t)
        return self.next()

    def err(self, msg: str, tok: Token | None = None) -> LangError:
        t = tok if tok is not None else self.peek()
        return LangError(msg, t.line, t.col, source_name=self.source_name)

    def pos(self, t: Token) -> Pos:
        return Pos(t.line, t.col)

    # -- top level ----------------------------------------------------------

    def program(self) -> Program:
        consts: list[ConstDef] = []
        globs: list[GlobalDecl] = []
        kernels: list[KernelDef] = []
        while not self.at("eof"):
            t = self.peek()
            if self.at("keyword", "const"):
                consts.append(self.const_def())
            elif self.at("keyword", "global"):
                globs.append(self.global_decl())
            elif self.at("keyword", "kernel") or self.at("keyword", "device"):
                kernels.append(self.kernel_def())
            else:
                raise self.err(
                    f"expected 'const', 'global', 'kernel' or 'device', found {t.text!r}", t)
        prog = Program(consts=tuple(consts), globals=tuple(globs),
                       kernels=tuple(kernels), source_name=self.source_name)
        return recompute_program_flags(prog)

    def const_def(self) -> ConstDef:
        t0 = self.expect("keyword", "const")
        name = self.expect("ident").text
        self.expect("punct", "=")
        neg = self.accept("punct", "-") is not None
        v = self.expect("int").int_value
        self.expect("punct", ";")
        return ConstDef(name=name, value=-v if neg else v, pos=self.pos(t0))

    def global_decl(self) -> GlobalDecl:
        t0 = self.expect("keyword", "global")
        elem = self.scalar_kind()
        name = self.expect("ident").text
        self.expect("punct", "[")
        extent = None
        if self.at("int"):
            extent = self.next().int_value
        self.expect("punct", "]")
        self.expect("punct", ";")
        return GlobalDecl(name=name, elem=elem, extent=extent, pos=self.pos(t0))

    def scalar_kind(self) -> str:
        t = self.peek()
        if t.kind == "keyword" and t.text in SCALAR_KINDS:
            self.next()
            return t.text
        raise self.err(f"expected type, found {t.text!r}", t)

    def kernel_def(self) -> KernelDef:
        t0 = self.next()  # kernel | device
        kind = t0.text
        self.expect("keyword", "void")
        name = self.expect("ident").text
        self.expect("punct", "(")
        params: list[Param] = []
        if not self.at("punct", ")"):
            while True:
                params.append(self.param())
                if not self.accept("punct", ","):
                    break
        self.expect("punct", ")")
        body = self.block()
        return KernelDef(name=name, kind=kind, params=tuple(params),
                         body=body, pos=self.pos(t0))

    def param(self) -> Param:
        t0 = self.peek()
        kind = self.scalar_kind()
        is_buffer = self.accept("punct", "*") is not None
        name = self.expect("ident").text
        return Param(name=name, kind=kind, is_buffer=is_buffer, pos=self.pos(t0))

    # -- statements ----------------------------------------------------------

    def block(self) -> tuple[Stmt, ...]:
        self.expect("punct", "{")
        stmts: list[Stmt] = []
        while not self.at("punct", "}"):
            if self.at("eof"):
                raise self.err("unexpected end of input inside block")
            stmts.append(self.stmt())
        self.expect("punct", "}")
        return tuple(stmts)

    def stmt(self) -> Stmt:
        t = self.peek()
        if t.kind == "keyword":
            if t.text in SCALAR_KINDS:
                return self.local_decl()
            if t.text == "if":
                return self.if_stmt()
            if t.text == "while":
                return self.while_stmt()
            if t.text == "for":
                return self.for_stmt()
            if t.text == "return":
                self.next()
                self.expect("punct", ";")
                return Return(pos=self.pos(t))
            if t.text == "barrier":
                self.next()
                self.expect("punct", "(")
                self.expect("punct", ")")
                self.expect("punct", ";")
                return Barrier(pos=self.pos(t))
            if t.text == "fence":
                self.next()
                self.expect("punct", "(")
                self.expect("punct", ")")
                self.expect("punct", ";")
                return Fence(pos=self.pos(t))
            if t.text == "launch":
                return self.launch_stmt()
            if t.text == "shared":
                return self.shared_decl()
            if t.text == "phase":
                return self.phase_stmt()
            if t.text in ATOMIC_FUNCS:
                return self.atomic_stmt(result=None, result_kind="int")
        if t.kind == "ident":
            nxt = self.peek(1)
            if nxt.kind == "punct" and nxt.text == "[":
                return self.store_stmt()
            if nxt.kind == "punct" and nxt.text in ("=", "+="):
                return self.assign_stmt()
            if nxt.kind == "punct" and nxt.text == "(":
                return self.call_stmt()
        raise self.err(f"expected statement, found {t.text or t.kind!r}", t)

    def local_decl(self) -> Stmt:
        t0 = self.peek()
        kind = self.scalar_kind()
        name = self.expect("ident").text
        if self.accept("punct", ";"):
            return LocalDecl(kind=kind, name=name, init=None, pos=self.pos(t0))
        self.expect("punct", "=")
        if self.peek().kind == "keyword" and self.peek().text in ATOMIC_FUNCS:
            return self.atomic_stmt(result=name, result_kind=kind, pos0=t0)
        init = self.expr()
        self.expect("punct", ";")
        return LocalDecl(kind=kind, name=name, init=init, pos=self.pos(t0))

    def atomic_stmt(self, result: str | None, result_kind: str,
                    pos0: Token | None = None) -> Atomic:
        t0 = self.peek() if pos0 is None else pos0
        fn = self.next().text
        op = ATOMIC_FUNCS[fn]
        self.expect("punct", "(")
        buf_tok = self.expect("ident")
        self.expect("punct", ",")
        index = self.expr()
        operands: list[Expr] = []
        for _ in range(ATOMIC_ARITY[op]):
            self.expect("punct", ",")
            operands.append(self.expr())
        self.expect("punct", ")")
        self.expect("punct", ";")
        return Atomic(op=op, buf=buf_tok.text, index=index,
                      operands=tuple(operands), result=result,
                      result_kind=result_kind, pos=self.pos(t0))

    def assign_stmt(self) -> Assign:
        t0 = self.expect("ident")
        if self.accept("punct", "+="):
            rhs = self.expr()
            self.expect("punct", ";")
            value = Binary(op="+", lhs=Var(t0.text, pos=self.pos(t0)), rhs=rhs,
                           pos=self.pos(t0))
            return Assign(name=t0.text, value=value, pos=self.pos(t0))
        self.expect("punct", "=")
        value = self.expr()
        self.expect("punct", ";")
        return Assign(name=t0.text, value=value, pos=self.pos(t0))

    def store_stmt(self) -> Store:
        t0 = self.expect("ident")
        self.expect("punct", "[")
        index = self.expr()
        self.expect("punct", "]")
        self.expect("punct", "=")
        value = self.expr()
        self.expect("punct", ";")
        return Store(buf=t0.text, index=index, value=value, pos=self.pos(t0))

    def call_stmt(self) -> CallStmt:
        t0 = self.expect("ident")
        self.expect("punct", "(")
        args: list[Expr] = []
        if not self.at("punct", ")"):
            while True:
                args.append(self.expr())
                if not self.accept("punct", ","):
                    break
        self.expect("punct", ")")
        self.expect("punct", ";")
        return CallStmt(callee=t0.text, args=tuple(args), pos=self.pos(t0))

    def if_stmt(self) -> If:
        t0 = self.expect("keyword", "if")
        self.expect("punct", "(")
        cond = self.expr()
        self.expect("punct", ")")
        then = self.block()
        els: tuple[Stmt, ...] = ()
        if self.accept("keyword", "else"):
            if self.at("keyword", "if"):
                els = (self.if_stmt(),)
            else:
                els = self.block()
        return If(cond=cond, then=then, els=els, pos=self.pos(t0))

    def while_stmt(self) -> While:
        t0 = self.expect("keyword", "while")
        self.expect("punct", "(")
        cond = self.expr()
        self.expect("punct", ")")
        body = self.block()
        return While(cond=cond, body=body, pos=self.pos(t0))

    def for_stmt(self) -> For:
        t0 = self.expect("keyword", "for")
        self.expect("punct", "(")
        self.expect("keyword", "int")
        var = self.expect("ident").text
        self.expect("punct", "=")
        init = self.expr()
        self.expect("punct", ";")
        cond_var = self.expect("ident")
        if cond_var.text != var:
            raise self.err(f"loop condition must test {var!r}", cond_var)
        self.expect("punct", "<")
        bound = self.expr()
        self.expect("punct", ";")
        step_var = self.expect("ident")
        if step_var.text != var:
            raise self.err(f"loop step must update {var!r}", step_var)
        self.expect("punct", "+=")
        step = self.expr()
        self.expect("punct", ")")
        body = self.block()
        return For(var=var, init=init, bound=bound, step=step, body=body,
                   pos=self.pos(t0))

    def launch_stmt(self) -> LaunchStmt:
        t0 = self.expect("keyword", "launch")
        callee = self.expect("ident").text
        self.expect("punct", "<<<")
        grid = self.expr()
        self.expect("punct", ",")
        block = self.expr()
        self.expect("punct", ">>>")
        self.expect("punct", "(")
        args: list[Expr] = []
        if not self.at("punct", ")"):
            while True:
                args.append(self.expr())
                if not self.accept("punct", ","):
                    break
        self.expect("punct", ")")
        self.expect("punct", ";")
        return LaunchStmt(callee=callee, grid=grid, block=block,
                          args=tuple(args), pos=self.pos(t0))

    def shared_decl(self) -> SharedDecl:
        t0 = self.expect("keyword", "shared")
        self.expect("keyword", "int")
        name = self.expect("ident").text
        self.expect("punct", "[")
        extent = self.expr()
        self.expect("punct", "]")
        self.expect("punct", ";")
        return SharedDecl(name=name, extent=extent, pos=self.pos(t0))

    def phase_stmt(self) -> PhaseMarker:
        t0 = self.expect("keyword", "phase")
        # "launch" is both a phase name and a keyword
        name_tok = self.next()
        if name_tok.kind not in ("ident", "keyword") \
                or name_tok.text not in PHASE_NAMES:
            raise self.err(
                f"unknown phase {name_tok.text!r} (expected one of {', '.join(PHASE_NAMES)})",
                name_tok)
        body = self.block()
        return PhaseMarker(phase=name_tok.text, body=body, pos=self.pos(t0))

    # -- expressions ----------------------------------------------------------

    def expr(self) -> Expr:
        return self.or_expr()

    def _left_assoc(self, sub, ops: tuple[str, ...]) -> Expr:
        e = sub()
        while self.peek().kind == "punct" and self.peek().text in ops:
            t = self.next()
            rhs = sub()
            e = Binary(op=t.text, lhs=e, rhs=rhs, pos=self.pos(t))
        return e

    def or_expr(self) -> Expr:
        return self._left_assoc(self.and_expr, ("||",))

    def and_expr(self) -> Expr:
        return self._left_assoc(self.bitor_expr, ("&&",))

    def bitor_expr(self) -> Expr:
        return self._left_assoc(self.bitxor_expr, ("|",))

    def bitxor_expr(self) -> Expr:
        return self._left_assoc(self.bitand_expr, ("^",))

    def bitand_expr(self) -> Expr:
        return self._left_assoc(self.equality_expr, ("&",))

    def equality_expr(self) -> Expr:
        return self._left_assoc(self.relational_expr, ("==", "!="))

    def relational_expr(self) -> Expr:
        return self._left_assoc(self.shift_expr, ("<", "<=", ">", ">="))

    def shift_expr(self) -> Expr:
        return self._left_assoc(self.additive_expr, ("<<", ">>"))

    def additive_expr(self) -> Expr:
        return self._left_assoc(self.multiplicative_expr, ("+", "-"))

    def multiplicative_expr(self) -> Expr:
        return self._left_assoc(self.unary_expr, ("*", "/", "%"))

    def unary_expr(self) -> Expr:
        t = self.peek()
        if t.kind == "punct" and t.text in ("-", "!"):
            self.next()
            operand = self.unary_expr()
            return Unary(op=t.text, operand=operand, pos=self.pos(t))
        # cast: "(" kind ")" unary
        if (t.kind == "punct" and t.text == "("
                and self.peek(1).kind == "keyword"
                and self.peek(1).text in SCALAR_KINDS
                and self.peek(2).kind == "punct" and self.peek(2).text == ")"):
            self.next()
            kind = self.scalar_kind()
            self.expect("punct", ")")
            operand = self.unary_expr()
            return Cast(kind=kind, operand=operand, pos=self.pos(t))
        return self.primary()

    def primary(self) -> Expr:
        t = self.peek()
        if t.kind == "int":
            self.next()
            kind = "long" if t.text[-1] in "Ll" else "int"
            return IntLit(value=t.int_value if kind == "int"
                          else int(t.text[:-1], 0), kind=kind, pos=self.pos(t))
        if t.kind == "float":
            self.next()
            return FloatLit(value=t.float_value, pos=self.pos(t))
        if t.kind == "punct" and t.text == "(":
            self.next()
            e = self.expr()
            self.expect("punct", ")")
            return e
        if t.kind == "keyword" and t.text == "ceil":
            self.next()
            self.expect("punct", "(")
            operand = self.expr()
            self.expect("punct", ")")
            return Ceil(operand=operand, pos=self.pos(t))
        if t.kind == "keyword" and t.text == "dim3":
            self.next()
            self.expect("punct", "(")
            comps = [self.expr()]
            while self.accept("punct", ","):
                comps.append(self.expr())
            self.expect("punct", ")")
            if len(comps) > 3:
                raise self.err("dim3 takes at most 3 components", t)
            return Dim3(components=tuple(comps), pos=self.pos(t))
        if t.kind == "keyword" and t.text in WARP_FUNCS:
            self.next()
            self.expect("punct", "(")
            args: list[Expr] = []
            if not self.at("punct", ")"):
                while True:
                    args.append(self.expr())
                    if not self.accept("punct", ","):
                        break
            self.expect("punct", ")")
            return WarpPrim(name=t.text, args=tuple(args), pos=self.pos(t))
        if t.kind == "ident":
            if t.text in BUILTIN_BASES:
                self.next()
                self.expect("punct", ".")
                axis_tok = self.expect("ident")
                if axis_tok.text not in ("x", "y", "z"):
                    raise self.err(f"expected axis x, y or z after {t.text}.",
                                   axis_tok)
                return Builtin(base=t.text, axis=axis_tok.text, pos=self.pos(t))
            self.next()
            if self.at("punct", "["):
                self.next()
                index = self.expr()
                self.expect("punct", "]")
                return BufRead(buf=t.text, index=index, pos=self.pos(t))
            return Var(name=t.text, pos=self.pos(t))
        raise self.err(f"expected expression, found {t.text or t.kind!r}", t)


def parse(src: str, source_name: str = "<input>") -> Program:
    toks = tokenize(src, source_name)
    return Parser(toks, source_name).program()


def parse_file(path: str) -> Program:
    with open(path, "r", encoding="utf-8") as f:
        src = f.read()
    return parse(src, source_name=path)
