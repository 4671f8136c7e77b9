from __future__ import annotations

import pytest

from dynoptc.lang import LangError, parse
from dynoptc.lang.ast import (Assign, Atomic, Binary, BufRead, Builtin, Cast,
                              Ceil, Dim3, If, IntLit, LaunchStmt, LocalDecl,
                              Unary, Var, WarpPrim)

from conftest import corpus_files, read_corpus


def test_rowsum_structure():
    p = parse(read_corpus("rowsum.mk"))
    assert [g.name for g in p.globals] == ["rowptr", "data", "out"]
    assert p.kernel_names() == ["child", "main"]
    main = p.kernel("main")
    assert main.kind == "kernel"
    assert [pr.name for pr in main.params] == ["rowptr_", "data_", "out_", "n"]
    assert [pr.is_buffer for pr in main.params] == [True, True, True, False]
    assert main.contains_launch
    assert not main.uses_barrier
    child = p.kernel("child")
    assert not child.contains_launch


def test_launch_site_shape():
    p = parse(read_corpus("rowsum.mk"))
    main = p.kernel("main")
    outer = main.body[1]
    assert isinstance(outer, If)
    inner = outer.then[2]
    assert isinstance(inner, If)
    site = inner.then[0]
    assert isinstance(site, LaunchStmt)
    assert site.callee == "child"
    # (count + 31) / 32
    assert isinstance(site.grid, Binary) and site.grid.op == "/"
    assert site.grid.rhs == IntLit(32)
    assert site.block == IntLit(32)
    assert len(site.args) == 5


def test_precedence():
    p = parse("kernel void k(int n) { int x = 1 + 2 * 3; int y = (1 + 2) * 3; }")
    body = p.kernel("k").body
    x = body[0].init
    assert x == Binary("+", IntLit(1), Binary("*", IntLit(2), IntLit(3)))
    y = body[1].init
    assert y == Binary("*", Binary("+", IntLit(1), IntLit(2)), IntLit(3))


def test_cast_vs_parens():
    p = parse("kernel void k(int n) { float f = (float)n; int m = (n); }")
    body = p.kernel("k").body
    assert isinstance(body[0].init, Cast) and body[0].init.kind == "float"
    assert body[1].init == Var("n")


def test_builtin_and_bufread():
    p = parse("global int b[4]; kernel void k(int n) { int t = blockIdx.x * blockDim.x + threadIdx.x; int v = b[t]; }")
    body = p.kernel("k").body
    t = body[0].init
    assert t == Binary("+", Binary("*", Builtin("blockIdx", "x"),
                                   Builtin("blockDim", "x")),
                       Builtin("threadIdx", "x"))
    assert body[1].init == BufRead("b", Var("t"))


def test_ceil_and_float_cast_pattern():
    p = parse("kernel void k(int n, int b) { int g = (int)ceil(n / (float)b); }")
    g = p.kernel("k").body[0].init
    assert isinstance(g, Cast)
    assert isinstance(g.operand, Ceil)
    div = g.operand.operand
    assert isinstance(div, Binary) and div.op == "/"
    assert isinstance(div.rhs, Cast) and div.rhs.kind == "float"


def test_long_literals():
    p = parse("global long c[1]; kernel void k(int n) { long v = (1L << 32) + 7; atomic_add(c, 0, v); }")
    v = p.kernel("k").body[0].init
    assert isinstance(v, Binary) and v.op == "+"
    assert v.lhs == Binary("<<", IntLit(1, kind="long"), IntLit(32))


def test_atomic_forms():
    src = """
    global int c[4];
    kernel void k(int n) {
        atomic_add(c, 0, 1);
        int old = atomic_max(c, 1, n);
        int got = atomic_cas(c, 2, 0, n);
    }
    """
    body = parse(src).kernel("k").body
    assert isinstance(body[0], Atomic) and body[0].op == "add" and body[0].result is None
    assert body[1].op == "max" and body[1].result == "old"
    assert body[2].op == "cas" and body[2].operands == (IntLit(0), Var("n"))


def test_dim3_launch():
    p = parse("""
    kernel void c(int n) { int t = threadIdx.x; }
    kernel void k(int n) { launch c<<<dim3(2, 3), 4>>>(n); }
    """)
    site = p.kernel("k").body[0]
    assert isinstance(site.grid, Dim3)
    assert site.grid.components == (IntLit(2), IntLit(3))


def test_plus_equals_desugars():
    p = parse("kernel void k(int n) { int a = 0; a += n; }")
    s = p.kernel("k").body[1]
    assert isinstance(s, Assign)
    assert s.value == Binary("+", Var("a"), Var("n"))


def test_warp_prims_parse():
    p = parse("kernel void k(int n) { int m = ballot(n > 0); }")
    init = p.kernel("k").body[0].init
    assert isinstance(init, WarpPrim) and init.name == "ballot"
    assert p.kernel("k").uses_warp


def test_unary_nesting():
    p = parse("kernel void k(int n) { int a = - -n; int b = !n; }")
    body = p.kernel("k").body
    assert body[0].init == Unary("-", Unary("-", Var("n")))
    assert body[1].init == Unary("!", Var("n"))


def test_flags_propagate_through_calls():
    p = parse("""
    kernel void k(int n) { helper(n); }
    device void helper(int n) { if (n > 0) { helper2(n); } }
    device void helper2(int n) { int m = ballot(n > 0); }
    """)
    assert p.kernel("k").uses_warp
    assert p.kernel("helper").uses_warp


def test_comments_and_positions():
    src = "// leading\nkernel void k(int n) {\n    int x = 1; /* mid */ int y = 2;\n}\n"
    p = parse(src)
    body = p.kernel("k").body
    assert body[0].pos.line == 3 and body[1].pos.line == 3
    assert body[1].pos.col > body[0].pos.col


@pytest.mark.parametrize("src,frag", [
    ("kernel void k(int n) { int x = ; }", "expected expression"),
    ("kernel void k(int n) { launch c<<<1>>>(); }", "expected ','"),
    ("kernel k(int n) { }", "expected 'void'"),
    ("const X = 1", "expected ';'"),
    ("kernel void k(int n) { for (int i = 0; j < n; i += 1) { } }", "loop condition"),
    ("kernel void k(int n) { phase warmup { } }", "unknown phase"),
    ("kernel void k(int n) { atomic_cas(b, 0, 1); }", "expected ','"),
])
def test_parse_errors(src, frag):
    with pytest.raises(LangError) as exc:
        parse(src)
    assert frag in str(exc.value)


def test_error_location_format():
    with pytest.raises(LangError) as exc:
        parse("kernel void k(int n) {\n  int x = @;\n}", source_name="bad.mk")
    msg = str(exc.value)
    assert msg.startswith("bad.mk:2:")
    assert ": error: " in msg


def test_corpus_parses_clean():
    for path in corpus_files():
        parse(path.read_text(), source_name=str(path))
