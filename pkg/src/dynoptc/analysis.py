"""Launch-site discovery and child-count extraction.

A dynamic launch's *child count* is the number of worker threads the child
grid covers. Grid expressions in real kernels almost always derive the block
count from that thread count with one of a handful of ceiling-division
idioms; recognizing the idiom lets the transforms reason about `N` instead
of `ceil(N/b) * b`.

Recognized grid shapes (block expression ``b``, recovered count ``N``):

- ``(N + b - 1) / b``     and the literal-bias form ``(N + 31) / 32``
- ``(N - 1) / b + 1``
- ``N / b + (N % b != 0)``
- ``ceil(N / (float)b)``
- ``ceil((float)N / b)``
- bare ``N`` when the block size is literally ``1``
- ``dim3(...)`` components, each matched per-axis and multiplied

Before matching, locals that are assigned exactly once are inlined into the
grid expression (a launch often reads a ``blocks`` temp computed a line
earlier). The denominator must be syntactically equal to the site's block
expression or be an integer literal; anything else is reported as a
near-miss with the reason, and the site is left untransformed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .lang.ast import (Assign, Atomic, Binary, Builtin, Cast, Ceil, Dim3,
                       Expr, For, IntLit, KernelDef, LaunchStmt, LocalDecl,
                       PhaseMarker, Program, Return, Stmt, Var, While,
                       expr_eq, walk_stmts)
from .lang.printer import format_expr


@dataclass(slots=True)
class LaunchSite:
    kernel: str
    stmt: LaunchStmt
    line: int
    multi_dim: bool

    @property
    def callee(self) -> str:
        return self.stmt.callee

    @property
    def label(self) -> str:
        return f"{self.kernel}:{self.line}"


@dataclass(slots=True)
class Extraction:
    ok: bool
    pattern: str = ""
    threads: Expr | None = None
    reason: str = ""

    def describe(self) -> str:
        if self.ok:
            return f"pattern {self.pattern}: threads = {format_expr(self.threads)}"
        return f"no match: {self.reason}"


def _is_multi_dim(e: Expr) -> bool:
    # a single-component dim3 is just a scalar in launch-config clothing
    return isinstance(e, Dim3) and len(e.components) > 1


def find_sites(program: Program) -> list[LaunchSite]:
    sites = []
    for k in program.kernels:
        for s in walk_stmts(k.body):
            if isinstance(s, LaunchStmt):
                multi = _is_multi_dim(s.grid) or _is_multi_dim(s.block)
                sites.append(LaunchSite(kernel=k.name, stmt=s,
                                        line=s.pos.line, multi_dim=multi))
    return sites


def device_launched_kernels(program: Program) -> set[str]:
    """Kernels that appear as the callee of any launch statement."""
    return {s.callee for s in find_sites(program)}


# ---------------------------------------------------------------------------
# single-assignment temp inlining
# ---------------------------------------------------------------------------

def single_assignment_env(kernel: KernelDef) -> dict[str, Expr]:
    writes: dict[str, int] = {}
    inits: dict[str, Expr] = {}
    for s in walk_stmts(kernel.body):
        if isinstance(s, LocalDecl):
            writes[s.name] = writes.get(s.name, 0) + (1 if s.init is not None
                                                      else 2)
            if s.init is not None:
                inits[s.name] = s.init
        elif isinstance(s, Assign):
            writes[s.name] = writes.get(s.name, 0) + 2
        elif isinstance(s, Atomic) and s.result is not None:
            writes[s.result] = writes.get(s.result, 0) + 2
        elif isinstance(s, For):
            writes[s.var] = writes.get(s.var, 0) + 2
    return {n: e for n, e in inits.items() if writes.get(n) == 1}


def inline_temps(e: Expr, env: dict[str, Expr]) -> Expr:
    from .lang.ast import map_expr

    def repl(x: Expr) -> Expr:
        if isinstance(x, Var) and x.name in env:
            return inline_temps(env[x.name], env)
        return x

    return map_expr(e, repl)


# ---------------------------------------------------------------------------
# pattern matching
# ---------------------------------------------------------------------------

def _strip_casts(e: Expr) -> Expr:
    while isinstance(e, (Cast,)):
        e = e.operand
    return e


def _flatten_additive(e: Expr, sign: int = 1) -> list[tuple[int, Expr]]:
    if isinstance(e, Binary) and e.op in ("+", "-"):
        rhs_sign = sign if e.op == "+" else -sign
        return (_flatten_additive(e.lhs, sign)
                + _flatten_additive(e.rhs, rhs_sign))
    return [(sign, e)]


def _rebuild_additive(terms: list[tuple[int, Expr]]) -> Expr | None:
    if not terms:
        return None
    expr: Expr | None = None
    for sign, t in terms:
        if expr is None:
            expr = t if sign > 0 else Binary("-", IntLit(0), t)
        else:
            expr = Binary("+" if sign > 0 else "-", expr, t)
    return expr


def _denominator_matches(d: Expr, block: Expr) -> bool:
    sd = _strip_casts(d)
    sb = _strip_casts(block)
    if isinstance(sd, IntLit):
        # trusted when the block size isn't statically comparable; rejected
        # when both are literals and visibly differ
        return not (isinstance(sb, IntLit) and sb.value != sd.value)
    return expr_eq(sd, sb)


def _division(e: Expr) -> tuple[Expr, Expr] | None:
    if isinstance(e, Binary) and e.op == "/":
        return e.lhs, e.rhs
    return None


def _strip_bias(numer: Expr, denom: Expr, block: Expr) -> tuple[Expr | None, str]:
    """For ``numer / denom`` rounding-up idioms, peel the ``denom - 1`` bias
    off the numerator and return the residual count."""
    terms = _flatten_additive(numer)
    d = _strip_casts(denom)
    lit_sum = 0
    block_hits = 0
    rest: list[tuple[int, Expr]] = []
    for sign, t in terms:
        st = _strip_casts(t)
        if isinstance(st, IntLit):
            lit_sum += sign * st.value
        elif expr_eq(st, d) or expr_eq(st, _strip_casts(block)):
            block_hits += sign
        else:
            rest.append((sign, t))
    if isinstance(d, IntLit):
        bias = lit_sum + block_hits * d.value
        if bias != d.value - 1:
            return None, (f"numerator bias {bias} differs from "
                          f"block size - 1 ({d.value - 1})")
    else:
        if not (block_hits == 1 and lit_sum == -1):
            return None, ("numerator bias is not one block size minus one")
    residual = _rebuild_additive(rest)
    if residual is None:
        return None, "nothing remains after removing the rounding bias"
    return residual, ""


def _match_mod_check(e: Expr, x: Expr, d: Expr) -> bool:
    """Recognize ``(x % d != 0)`` in either comparison orientation."""
    if not (isinstance(e, Binary) and e.op == "!="):
        return False
    sides = [(e.lhs, e.rhs), (e.rhs, e.lhs)]
    for m, z in sides:
        if isinstance(z, IntLit) and z.value == 0 \
                and isinstance(m, Binary) and m.op == "%" \
                and expr_eq(m.lhs, x) and expr_eq(_strip_casts(m.rhs),
                                                  _strip_casts(d)):
            return True
    return False


def _extract_axis(grid: Expr, block: Expr) -> Extraction:
    sb = _strip_casts(block)
    if isinstance(sb, IntLit) and sb.value == 1:
        return Extraction(True, "unit-block", _strip_casts(grid))

    grid = _strip_casts(grid)
    if isinstance(grid, Ceil):
        div = _division(grid.operand)
        if div is None:
            return Extraction(False, reason="ceil argument is not a division")
        x, d = div
        if not _denominator_matches(d, block):
            return Extraction(False, reason=(
                f"ceil denominator '{format_expr(d)}' is not the block "
                f"expression '{format_expr(block)}' or a literal"))
        pattern = ("ceil-cast-numerator" if isinstance(x, Cast)
                   else "ceil-cast-denominator")
        return Extraction(True, pattern, _strip_casts(x))

    if isinstance(grid, Binary) and grid.op == "+":
        for div_side, other in ((grid.lhs, grid.rhs), (grid.rhs, grid.lhs)):
            div = _division(div_side)
            if div is None:
                continue
            x, d = div
            if not _denominator_matches(d, block):
                continue
            if isinstance(other, IntLit) and other.value == 1:
                # (N - 1) / b + 1
                terms = _flatten_additive(x)
                lits = [s * t.value for s, t in
                        ((s, _strip_casts(t)) for s, t in terms)
                        if isinstance(t, IntLit)]
                rest = [(s, t) for s, t in terms
                        if not isinstance(_strip_casts(t), IntLit)]
                if sum(lits) != -1:
                    return Extraction(False, reason=(
                        "div-plus-one numerator does not subtract 1"))
                residual = _rebuild_additive(rest)
                if residual is None:
                    return Extraction(False, reason=(
                        "nothing remains after removing the rounding bias"))
                return Extraction(True, "minus-one-plus-one", residual)
            if _match_mod_check(other, x, d):
                return Extraction(True, "mod-check", x)
        return Extraction(False, reason=(
            "additive grid expression is not a recognized rounding idiom"))

    div = _division(grid)
    if div is not None:
        x, d = div
        if not _denominator_matches(d, block):
            return Extraction(False, reason=(
                f"denominator '{format_expr(d)}' is not the block "
                f"expression '{format_expr(block)}' or a literal"))
        residual, why = _strip_bias(x, d, block)
        if residual is None:
            return Extraction(False, reason=why)
        return Extraction(True, "bias-div", residual)

    return Extraction(False, reason=(
        f"grid expression '{format_expr(grid)}' has no division by the "
        f"block size"))


def _components(e: Expr) -> list[Expr]:
    if isinstance(e, Dim3):
        return list(e.components)
    return [e]


def _product(exprs: list[Expr]) -> Expr:
    exprs = [e for e in exprs
             if not (isinstance(e, IntLit) and e.value == 1)]
    if not exprs:
        return IntLit(1)
    out = exprs[0]
    for e in exprs[1:]:
        out = Binary("*", out, e)
    return out


def extract_child_count(site: LaunchSite, kernel: KernelDef,
                        env: dict[str, Expr] | None = None) -> Extraction:
    """Recover the thread count expression behind a launch's grid size."""
    if env is None:
        env = single_assignment_env(kernel)
    grid = inline_temps(site.stmt.grid, env)
    block = inline_temps(site.stmt.block, env)

    gcs = _components(grid)
    bcs = _components(block)
    residuals: list[Expr] = []
    patterns: list[str] = []
    for i, gc in enumerate(gcs):
        bc = bcs[i] if i < len(bcs) else IntLit(1)
        got = _extract_axis(gc, bc)
        if not got.ok:
            where = f" (axis {i})" if len(gcs) > 1 else ""
            return Extraction(False, reason=got.reason + where)
        residuals.append(got.threads)
        patterns.append(got.pattern)
    # block axes beyond the grid's contribute whole blocks of threads
    for j in range(len(gcs), len(bcs)):
        residuals.append(bcs[j])
        patterns.append("extra-block-axis")

    if len(residuals) == 1:
        return Extraction(True, patterns[0], residuals[0])
    return Extraction(True, "components(" + ",".join(patterns) + ")",
                      _product(residuals))


def product_fallback(site: LaunchSite, kernel: KernelDef,
                     env: dict[str, Expr] | None = None) -> Expr:
    """Upper-bound thread count: grid blocks times block threads."""
    if env is None:
        env = single_assignment_env(kernel)
    grid = inline_temps(site.stmt.grid, env)
    block = inline_temps(site.stmt.block, env)
    return _product([_product(_components(grid)),
                     _product(_components(block))])


# ---------------------------------------------------------------------------
# structural context
# ---------------------------------------------------------------------------

@dataclass(slots=True)
class SiteContext:
    path: list[Stmt] = field(default_factory=list)  # ancestors, outer first
    in_loop: bool = False
    top_index: int = -1  # index of the outermost enclosing top-level stmt

    @property
    def at_top_level(self) -> bool:
        return not self.path


def find_context(kernel: KernelDef, target: Stmt) -> SiteContext | None:
    """Ancestor chain of ``target`` within the kernel body."""

    def search(stmts, path) -> SiteContext | None:
        for i, s in enumerate(stmts):
            if s is target:
                ctx = SiteContext(path=list(path))
                ctx.in_loop = any(isinstance(a, (While, For)) for a in path)
                if not path:
                    ctx.top_index = i
                return ctx
            children = []
            if hasattr(s, "then"):
                children = [s.then, s.els]
            elif hasattr(s, "body") and isinstance(getattr(s, "body"), tuple):
                children = [s.body]
            for grp in children:
                got = search(grp, path + [s])
                if got is not None:
                    if not path:
                        got.top_index = i
                    return got
        return None

    return search(kernel.body, [])


def kernel_has_return(kernel: KernelDef) -> bool:
    return any(isinstance(s, Return) for s in walk_stmts(kernel.body))


def explain_sites(program: Program) -> list[str]:
    """Human-readable per-site analysis for the CLI."""
    out = []
    for site in find_sites(program):
        k = program.kernel(site.kernel)
        got = extract_child_count(site, k)
        tag = " multi-dim" if site.multi_dim else ""
        out.append(f"{site.label}: launch {site.callee}{tag}: "
                   f"{got.describe()}")
    return out
