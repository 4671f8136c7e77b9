from __future__ import annotations

import pytest

from dynoptc.lang import parse, validate

from conftest import corpus_files


def messages(src: str) -> list[str]:
    return [e.message for e in validate(parse(src))]


def test_corpus_validates_clean():
    # informational diagnostics (e.g. multi-dimensional launches) are allowed
    for path in corpus_files():
        prog = parse(path.read_text(), source_name=str(path))
        errs = [e for e in validate(prog) if e.severity == "error"]
        assert not errs, f"{path.name}: {[str(e) for e in errs]}"


def test_undefined_name():
    msgs = messages("kernel void k(int n) { int x = y + 1; }")
    assert any("undefined name 'y'" in m for m in msgs)


def test_declare_before_use_order():
    msgs = messages("kernel void k(int n) { int x = z; int z = 1; }")
    assert any("undefined name 'z'" in m for m in msgs)


def test_block_scoping():
    msgs = messages(
        "kernel void k(int n) { if (n > 0) { int x = 1; } int y = x; }")
    assert any("undefined name 'x'" in m for m in msgs)


def test_no_redeclaration():
    msgs = messages("kernel void k(int n) { int x = 1; if (n) { int x = 2; } }")
    assert any("already defined" in m for m in msgs)


def test_loop_var_scoped_to_loop():
    msgs = messages(
        "kernel void k(int n) { for (int i = 0; i < n; i += 1) { } int y = i; }")
    assert any("undefined name 'i'" in m for m in msgs)


def test_buffer_as_scalar_rejected():
    msgs = messages("global int b[4]; kernel void k(int n) { int x = b + 1; }")
    assert any("used as a scalar" in m for m in msgs)


def test_scalar_as_buffer_rejected():
    msgs = messages("kernel void k(int n) { int x = n[0]; }")
    assert any("not a buffer" in m for m in msgs)


def test_launch_unknown_kernel():
    msgs = messages("kernel void k(int n) { launch c<<<1, 1>>>(n); }")
    assert any("undefined kernel 'c'" in m for m in msgs)


def test_launch_device_function_rejected():
    msgs = messages("""
    device void d(int n) { }
    kernel void k(int n) { launch d<<<1, 1>>>(n); }
    """)
    assert any("cannot launch device function" in m for m in msgs)


def test_call_kernel_rejected():
    msgs = messages("""
    kernel void c(int n) { }
    kernel void k(int n) { c(n); }
    """)
    assert any("use launch" in m for m in msgs)


def test_launch_in_device_function_rejected():
    msgs = messages("""
    kernel void c(int n) { }
    device void d(int n) { launch c<<<1, 1>>>(n); }
    """)
    assert any("launch is only valid inside a kernel" in m for m in msgs)


def test_arity_mismatch():
    msgs = messages("""
    kernel void c(int n, int m) { }
    kernel void k(int n) { launch c<<<1, 1>>>(n); }
    """)
    assert any("takes 2 argument(s), got 1" in m for m in msgs)


def test_buffer_param_needs_buffer_arg():
    msgs = messages("""
    kernel void c(int *b) { }
    kernel void k(int n) { launch c<<<1, 1>>>(n); }
    """)
    assert any("'n' is not a buffer" in m for m in msgs)
    msgs = messages("""
    kernel void c(int *b) { }
    kernel void k(int n) { launch c<<<1, 1>>>(n + 1); }
    """)
    assert any("must name a buffer" in m for m in msgs)


def test_buffer_elem_type_mismatch():
    msgs = messages("""
    global float w[4];
    kernel void c(int *b) { }
    kernel void k(int n) { launch c<<<1, 1>>>(w); }
    """)
    assert any("element type float" in m for m in msgs)


def test_atomic_type_rules():
    msgs = messages("global float w[4]; kernel void k(int n) { atomic_add(w, 0, 1); }")
    assert any("int or long buffer" in m for m in msgs)
    msgs = messages("global long c[4]; kernel void k(int n) { atomic_max(c, 0, 1); }")
    assert any("needs an int buffer" in m for m in msgs)
    msgs = messages("global long c[4]; kernel void k(int n) { int v = atomic_add(c, 0, 1L); }")
    assert any("yields long" in m for m in msgs)


def test_barrier_only_in_kernels():
    msgs = messages("device void d(int n) { barrier(); }")
    assert any("only valid inside a kernel" in m for m in msgs)


def test_recursion_rejected():
    msgs = messages("""
    device void a(int n) { b(n); }
    device void b(int n) { a(n); }
    kernel void k(int n) { a(n); }
    """)
    assert any("recursive call cycle" in m for m in msgs)


def test_dim3_outside_launch_rejected():
    msgs = messages("kernel void k(int n) { int x = 1 + 2; x = x * 2; }")
    assert msgs == []
    msgs = messages("kernel void k(int n) { int x = n; if (n > 0) { x = 1; } }")
    assert msgs == []


def test_assign_to_const_rejected():
    msgs = messages("const C = 3; kernel void k(int n) { C = 4; }")
    assert any("cannot assign" in m for m in msgs)


def test_duplicate_top_level_names():
    msgs = messages("const X = 1; global int X[4]; kernel void k(int n) { }")
    assert any("duplicate definition" in m for m in msgs)


def test_shared_extent_must_be_const():
    msgs = messages("kernel void k(int n) { shared int t[n]; }")
    assert any("must be a constant" in m for m in msgs)


def test_diagnostic_rendering():
    errs = validate(parse("kernel void k(int n) { int x = y; }",
                          source_name="f.mk"))
    assert errs and str(errs[0]).startswith("f.mk:1:")
    assert ": error: " in str(errs[0])


def test_division_by_zero_literal_rejected():
    msgs = messages("kernel void k(int n) { int x = n / 0; }")
    assert any("division by a zero literal" in m for m in msgs)
    msgs = messages("kernel void k(int n) { int x = n % 0; }")
    assert any("division by a zero literal" in m for m in msgs)
    msgs = messages("kernel void k(int n) { float x = (float)n / 0.0; }")
    assert any("division by a zero literal" in m for m in msgs)
    # nonzero divisors and runtime-variable divisors are fine statically
    assert messages("kernel void k(int n) { int x = n / 2; int y = n % n; }") == []


def test_self_launch_rejected():
    msgs = messages("kernel void k(int n) { launch k<<<1, 1>>>(n); }")
    assert any("recursive launch rejected" in m for m in msgs)


def test_mutual_launch_cycle_rejected():
    msgs = messages("""
    kernel void a(int n) { launch b<<<1, 1>>>(n); }
    kernel void b(int n) { launch a<<<1, 1>>>(n); }
    """)
    assert any("recursive launch rejected" in m for m in msgs)


def test_multi_dim_launch_is_informational():
    errs = validate(parse("""
    kernel void c(int n) { int x = n; }
    kernel void k(int n) { launch c<<<dim3(2, 3), 4>>>(n); }
    """))
    infos = [e for e in errs if e.severity == "info"]
    assert infos and "multi-dimensional launch" in infos[0].message
    assert infos[0].category == "multi-dim-launch"
    assert not [e for e in errs if e.severity == "error"]


def test_shared_must_be_top_level():
    msgs = messages("""
    kernel void k(int n) { if (n > 0) { shared int t[4]; } }
    """)
    assert any("top level" in m for m in msgs)


def test_phase_marker_kernel_only():
    msgs = messages("device void d(int n) { phase child { int x = n; } }")
    assert any("phase markers are only valid inside a kernel" in m for m in msgs)


def test_diagnostics_carry_category():
    errs = validate(parse("kernel void k(int n) { int x = n / 0; }"))
    assert errs[0].category == "division-by-zero"


def test_builtins_rejected_in_device_functions():
    msgs = messages("""
    kernel void k(int n) { int x = n; }
    device void d(int n) { int i = threadIdx.x + n; }
    """)
    assert any("threadIdx.x is not available in a device function" in m
               for m in msgs)
    msgs = messages("device void d(int n) { int g = gridDim.x; }")
    assert any("gridDim.x is not available" in m for m in msgs)
    # the same spellings are fine inside kernels
    assert messages(
        "kernel void k(int n) { int i = blockIdx.x * blockDim.x; }") == []


def test_shared_array_cannot_escape_via_launch():
    msgs = messages("""
    kernel void child(int *d, int n) { int i = threadIdx.x; }
    kernel void k(int n) {
        shared int tmp[32];
        launch child<<<1, 4>>>(tmp, n);
    }
    """)
    assert any("shared array 'tmp' cannot be passed to a launched kernel" in m
               for m in msgs)


def test_shared_array_may_be_passed_to_device_call():
    assert messages("""
    device void helper(int *d, int n) { d[0] = n; }
    kernel void k(int n) {
        shared int tmp[32];
        helper(tmp, n);
    }
    """) == []
