from __future__ import annotations

import hypothesis.strategies as st
from hypothesis import given, settings

from dynoptc.lang import parse, print_program
from dynoptc.lang.ast import (Binary, BufRead, Builtin, Cast, Ceil, IntLit,
                              FloatLit, Unary, Var, BINARY_OPS)

from conftest import corpus_files


def roundtrip(src: str) -> None:
    p1 = parse(src)
    text = print_program(p1)
    p2 = parse(text)
    assert p1 == p2, f"round trip changed the tree:\n{text}"
    # a second print must be a fixed point
    assert print_program(p2) == text


def test_corpus_roundtrip():
    for path in corpus_files():
        roundtrip(path.read_text())


# -- randomized expression round trips ---------------------------------------

names = st.sampled_from(["a", "b", "c", "n"])
buf_names = st.sampled_from(["buf", "q"])


def exprs() -> st.SearchStrategy:
    base = st.one_of(
        st.integers(min_value=0, max_value=10**6).map(lambda v: IntLit(v)),
        st.integers(min_value=0, max_value=2**40).map(
            lambda v: IntLit(v, kind="long")),
        st.floats(min_value=0.001, max_value=100000.0,
                  allow_nan=False).map(FloatLit),
        names.map(Var),
        st.tuples(st.sampled_from(["blockIdx", "threadIdx", "gridDim",
                                   "blockDim"]),
                  st.sampled_from(["x", "y", "z"])).map(
            lambda t: Builtin(t[0], t[1])),
    )

    def extend(children: st.SearchStrategy) -> st.SearchStrategy:
        return st.one_of(
            st.tuples(st.sampled_from(BINARY_OPS), children, children).map(
                lambda t: Binary(t[0], t[1], t[2])),
            st.tuples(st.sampled_from(["-", "!"]), children).map(
                lambda t: Unary(t[0], t[1])),
            st.tuples(st.sampled_from(["int", "long", "float"]), children).map(
                lambda t: Cast(t[0], t[1])),
            children.map(Ceil),
            st.tuples(buf_names, children).map(lambda t: BufRead(t[0], t[1])),
        )

    return st.recursive(base, extend, max_leaves=25)


@given(exprs())
@settings(max_examples=300, deadline=None)
def test_expr_roundtrip(e):
    from dynoptc.lang.printer import format_expr
    src = f"kernel void k(int a, int b, int c, int n, int *buf, int *q) {{\n    int t = {format_expr(e)};\n}}\n"
    p = parse(src)
    assert p.kernel("k").body[0].init == e
