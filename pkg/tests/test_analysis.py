"""Child-count extraction: every rounding idiom, inlining, and misses.

The numeric oracle at the top independently verifies that each recognized
grid idiom really computes ceil(N / b) under C integer semantics — that
identity is what makes "threads = N" a faithful summary of a launch site.
"""

from __future__ import annotations

import math
import random

from dynoptc.analysis import (LaunchSite, extract_child_count, explain_sites,
                              find_context, find_sites, inline_temps,
                              kernel_has_return, product_fallback,
                              single_assignment_env, device_launched_kernels)
from dynoptc.lang import parse
from dynoptc.lang.ast import Binary, IntLit, LaunchStmt, Var, walk_stmts
from dynoptc.lang.printer import format_expr


# ---------------------------------------------------------------------------
# numeric oracle: each idiom equals the ceiling division
# ---------------------------------------------------------------------------

def c_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def test_rounding_idioms_equal_ceiling_on_random_pairs():
    rng = random.Random(20260815)
    for _ in range(10000):
        n = rng.randrange(0, 1 << 20)
        b = rng.randrange(1, 1025)
        want = math.ceil(n / b)
        assert c_div(n + b - 1, b) == want
        assert (c_div(n - 1, b) + 1 == want) or n == 0  # n=0 gives 0+... ==
        if n == 0:
            assert c_div(n - 1, b) + 1 == 1  # documented off-by-one at N=0
        assert c_div(n, b) + (1 if n % b != 0 else 0) == want
        assert math.ceil(n / float(b)) == want
        assert math.ceil(float(n) / b) == want


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

CHILD = "kernel void c(int n) { int i = threadIdx.x; }\n"


def one_site(body: str, params: str = "int n") -> tuple:
    src = CHILD + "kernel void k(%s) { %s }" % (params, body)
    p = parse(src)
    sites = [s for s in find_sites(p) if s.kernel == "k"]
    assert len(sites) == 1
    return p.kernel("k"), sites[0]


def extract(body: str, params: str = "int n"):
    k, site = one_site(body, params)
    return extract_child_count(site, k)


# ---------------------------------------------------------------------------
# recognized patterns
# ---------------------------------------------------------------------------

def test_literal_bias_division():
    got = extract("launch c<<<(n + 31) / 32, 32>>>(n);")
    assert got.ok and got.pattern == "bias-div"
    assert format_expr(got.threads) == "n"


def test_symbolic_bias_division():
    got = extract("launch c<<<(n + b - 1) / b, b>>>(n);", "int n, int b")
    assert got.ok and got.pattern == "bias-div"
    assert format_expr(got.threads) == "n"


def test_minus_one_plus_one():
    got = extract("launch c<<<(n - 1) / 32 + 1, 32>>>(n);")
    assert got.ok and got.pattern == "minus-one-plus-one"
    assert format_expr(got.threads) == "n"


def test_mod_check():
    got = extract("launch c<<<n / 32 + (n % 32 != 0), 32>>>(n);")
    assert got.ok and got.pattern == "mod-check"
    assert format_expr(got.threads) == "n"


def test_mod_check_flipped_comparison():
    got = extract("launch c<<<n / b + (0 != n % b), b>>>(n);", "int n, int b")
    assert got.ok and got.pattern == "mod-check"


def test_ceil_cast_denominator():
    got = extract("launch c<<<(int)ceil(n / (float)32), 32>>>(n);")
    assert got.ok
    assert format_expr(got.threads) == "n"


def test_ceil_cast_numerator():
    got = extract("launch c<<<(int)ceil((float)n / b), b>>>(n);",
                  "int n, int b")
    assert got.ok and got.pattern == "ceil-cast-numerator"
    assert format_expr(got.threads) == "n"


def test_unit_block():
    got = extract("launch c<<<n, 1>>>(n);")
    assert got.ok and got.pattern == "unit-block"
    assert format_expr(got.threads) == "n"


def test_dim3_components_multiply():
    got = extract(
        "launch c<<<dim3((n + 7) / 8, (m + 3) / 4), dim3(8, 4)>>>(n);",
        "int n, int m")
    assert got.ok
    assert got.pattern.startswith("components(")
    assert format_expr(got.threads) == "n * m"


def test_dim3_grid_with_scalar_block():
    got = extract("launch c<<<dim3((n + 31) / 32, m), 32>>>(n);",
                  "int n, int m")
    assert got.ok
    assert format_expr(got.threads) == "n * m"


def test_compound_residual_survives():
    got = extract("launch c<<<(a - b + 127) / 128, 128>>>(a);",
                  "int a, int b")
    assert got.ok
    assert format_expr(got.threads) == "a - b"


# ---------------------------------------------------------------------------
# temp inlining
# ---------------------------------------------------------------------------

def test_single_assignment_inlining():
    got = extract("""
        int blocks = (n + 31) / 32;
        launch c<<<blocks, 32>>>(n);
    """)
    assert got.ok and got.pattern == "bias-div"
    assert format_expr(got.threads) == "n"


def test_two_hop_inlining_with_buffer_reads():
    body = """
        int lo = rowptr[n];
        int hi = rowptr[n + 1];
        int count = hi - lo;
        int blocks = (count + 31) / 32;
        launch c<<<blocks, 32>>>(n);
    """
    src = "global int rowptr[];\n" + CHILD + \
          "kernel void k(int n) { %s }" % body
    p = parse(src)
    site = [s for s in find_sites(p) if s.kernel == "k"][0]
    got = extract_child_count(site, p.kernel("k"))
    assert got.ok
    assert format_expr(got.threads) == "rowptr[n + 1] - rowptr[n]"


def test_reassigned_temp_blocks_inlining():
    got = extract("""
        int blocks = (n + 31) / 32;
        blocks = blocks + 1;
        launch c<<<blocks, 32>>>(n);
    """)
    assert not got.ok
    assert "no division" in got.reason


def test_for_variable_not_inlined():
    k, site = one_site("""
        for (int i = 0; i < n; i += 1) {
            launch c<<<(n + 31) / 32, 32>>>(i);
        }
    """)
    env = single_assignment_env(k)
    assert "i" not in env
    got = extract_child_count(site, k)
    assert got.ok  # the grid itself doesn't mention i


# ---------------------------------------------------------------------------
# near-misses
# ---------------------------------------------------------------------------

def test_wrong_bias_is_a_miss():
    got = extract("launch c<<<(n + 30) / 32, 32>>>(n);")
    assert not got.ok
    assert "bias 30" in got.reason


def test_denominator_mismatch_is_a_miss():
    # both sides are literals and visibly disagree
    got = extract("launch c<<<(n + 31) / 32, 64>>>(n);")
    assert not got.ok
    assert "not the block expression" in got.reason


def test_literal_denominator_trusted_against_symbolic_block():
    got = extract("launch c<<<(n + 31) / 32, b>>>(n);", "int n, int b")
    assert got.ok and format_expr(got.threads) == "n"


def test_symbolic_denominator_mismatch_is_a_miss():
    got = extract("launch c<<<(n + b - 1) / b, q>>>(n);",
                  "int n, int b, int q")
    assert not got.ok
    assert "not the block expression" in got.reason


def test_mod_check_mismatch_is_a_miss():
    got = extract("launch c<<<n / 32 + (n % 16 != 0), 32>>>(n);")
    assert not got.ok


def test_no_division_is_a_miss():
    got = extract("launch c<<<n * 2, 32>>>(n);")
    assert not got.ok
    assert "no division" in got.reason


def test_product_fallback_multiplies_grid_and_block():
    k, site = one_site("launch c<<<n * 2, 32>>>(n);")
    fb = product_fallback(site, k)
    assert format_expr(fb) == "n * 2 * 32"


# ---------------------------------------------------------------------------
# structural context
# ---------------------------------------------------------------------------

def test_find_context_flags_loops_and_top_statement():
    src = CHILD + """
    kernel void k(int n) {
        int x = 0;
        if (n > 0) {
            if (n > 1) {
                launch c<<<(n + 31) / 32, 32>>>(n);
            }
        }
        while (x < n) {
            launch c<<<1, 32>>>(n);
            x = x + 1;
        }
    }
    """
    p = parse(src)
    k = p.kernel("k")
    sites = [s for s in find_sites(p) if s.kernel == "k"]
    ctx0 = find_context(k, sites[0].stmt)
    assert not ctx0.in_loop
    assert len(ctx0.path) == 2  # two nested ifs
    assert ctx0.top_index == 1  # the outer if is statement #1
    ctx1 = find_context(k, sites[1].stmt)
    assert ctx1.in_loop


def test_kernel_return_detection_and_device_launched():
    src = """
    kernel void c(int n) { if (n < 0) { return; } }
    kernel void k(int n) { launch c<<<1, 1>>>(n); }
    """
    p = parse(src)
    assert kernel_has_return(p.kernel("c"))
    assert not kernel_has_return(p.kernel("k"))
    assert device_launched_kernels(p) == {"c"}


def test_explain_lists_every_site():
    src = CHILD + """
    kernel void k(int n) {
        launch c<<<(n + 31) / 32, 32>>>(n);
        launch c<<<n * 3, 32>>>(n);
    }
    """
    lines = explain_sites(parse(src))
    assert len(lines) == 2
    assert "pattern bias-div" in lines[0]
    assert "no match" in lines[1]


def test_inline_temps_respects_structure():
    env = {"a": Binary("+", Var("x"), IntLit(1))}
    e = Binary("*", Var("a"), Var("y"))
    out = inline_temps(e, env)
    assert format_expr(out) == "(x + 1) * y"
