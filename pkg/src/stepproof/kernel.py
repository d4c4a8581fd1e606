"""Independent trace checker.

The kernel re-derives every rule conclusion from its premises and compares
it, up to renaming of bound variables, with what the trace claims. It uses
only the syntax tree, the parser/printer and the lemma texts; substitution,
alpha-equivalence and ground evaluation are implemented here again on
purpose, so that a bug in the prover's term surgery cannot certify itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from stepproof.canon import fingerprint as sequent_fingerprint
from stepproof.lemmas import LEMMA_TEXT
from stepproof.parser import ParseError, parse_expr
from stepproof.syntax import (
    ActionBox, Always, Apply, Bool, Case, Choose, Expr, FunApp, FunLit, Hashed, Id, If,
    Label, Num, OpApp, Prime, Quant, SetEnum, SetFilter, Str, SubRef, Tuple, Witness,
)
from stepproof.tracefmt import Close, ProofTrace, RuleNode


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str = ""  # unknown-rule | malformed-instance | non-fresh-term | unclosed-branch | fingerprint-mismatch
    position: int = -1
    detail: str = ""

    def __bool__(self) -> bool:
        return self.accepted


class Reject(Exception):
    def __init__(self, reason: str, detail: str):
        super().__init__(detail)
        self.reason = reason
        self.detail = detail


def _bad(detail: str) -> Reject:
    return Reject("malformed-instance", detail)


# ---------------------------------------------------------------- own term toolkit


def _kids(e: Expr) -> list[Expr]:
    if isinstance(e, (Apply, OpApp, SubRef, Witness)):
        return list(e.args)
    if isinstance(e, (Quant, Choose)):
        return ([e.bound] if e.bound is not None else []) + [e.body]
    if isinstance(e, SetFilter):
        return [e.bound, e.pred]
    if isinstance(e, FunLit):
        return [e.domain, e.body]
    if isinstance(e, If):
        return [e.cond, e.then, e.other]
    if isinstance(e, Case):
        out = [x for arm in e.arms for x in arm]
        return out + ([e.other] if e.other is not None else [])
    if isinstance(e, (SetEnum, Tuple)):
        return list(e.elems)
    if isinstance(e, FunApp):
        return [e.fn, e.arg]
    if isinstance(e, (Prime, Label, Always)):
        return [e.expr]
    if isinstance(e, ActionBox):
        return [e.action, e.sub]
    return []


def _rebuild(e: Expr, f: Callable[[Expr], Expr]) -> Expr:
    """Apply ``f`` to the non-binding children of ``e``; binder bodies are left to callers."""
    if isinstance(e, Apply):
        return Apply(e.op, tuple(f(a) for a in e.args), e.primed)
    if isinstance(e, OpApp):
        return OpApp(e.op, tuple(f(a) for a in e.args))
    if isinstance(e, Witness):
        return Witness(e.name, tuple(f(a) for a in e.args))
    if isinstance(e, If):
        return If(f(e.cond), f(e.then), f(e.other))
    if isinstance(e, Case):
        return Case(tuple((f(p), f(v)) for p, v in e.arms), None if e.other is None else f(e.other))
    if isinstance(e, SetEnum):
        return SetEnum(tuple(f(x) for x in e.elems))
    if isinstance(e, Tuple):
        return Tuple(tuple(f(x) for x in e.elems))
    if isinstance(e, FunApp):
        return FunApp(f(e.fn), f(e.arg))
    if isinstance(e, Prime):
        return Prime(f(e.expr))
    return e


def _binder_parts(e: Expr) -> tuple[Optional[Expr], Expr]:
    if isinstance(e, (Quant, Choose)):
        return e.bound, e.body
    if isinstance(e, SetFilter):
        return e.bound, e.pred
    return e.domain, e.body


def _make_binder(e: Expr, var: str, bound: Optional[Expr], body: Expr) -> Expr:
    if isinstance(e, Quant):
        return Quant(e.kind, var, bound, body)
    if isinstance(e, Choose):
        return Choose(var, bound, body)
    if isinstance(e, SetFilter):
        return SetFilter(var, bound, body)
    return FunLit(var, bound, body)


_BINDING = (Quant, Choose, SetFilter, FunLit)


def free_ids(e: Expr) -> set[str]:
    if isinstance(e, Id):
        return {e.name}
    if isinstance(e, _BINDING):
        bound, body = _binder_parts(e)
        out = free_ids(body) - {e.var}
        if bound is not None:
            out |= free_ids(bound)
        return out
    out: set[str] = set()
    for c in _kids(e):
        out |= free_ids(c)
    return out


def all_ids(e: Expr) -> set[str]:
    out = set()
    stack = [e]
    while stack:
        x = stack.pop()
        if isinstance(x, Id):
            out.add(x.name)
        elif isinstance(x, Witness):
            out.add("?" + x.name)
        if isinstance(x, _BINDING):
            out.add(x.var)
        stack.extend(_kids(x))
    return out


def instantiate(body: Expr, var: str, t: Expr) -> Expr:
    """``body`` with free ``var`` replaced by ``t``, renaming binders that would capture."""
    t_free = free_ids(t)

    def go(e: Expr) -> Expr:
        if isinstance(e, Id):
            return t if e.name == var else e
        if isinstance(e, _BINDING):
            bound, inner = _binder_parts(e)
            new_bound = None if bound is None else go(bound)
            if e.var == var:
                return _make_binder(e, e.var, new_bound, inner)
            v = e.var
            if v in t_free and var in free_ids(inner):
                taken = all_ids(inner) | t_free | {var}
                n = 0
                while f"{v}{n}" in taken:
                    n += 1
                inner = instantiate(inner, v, Id(f"{v}{n}"))
                v = f"{v}{n}"
            return _make_binder(e, v, new_bound, go(inner))
        return _rebuild(e, go)

    return go(body)


def alpha_eq(a: Expr, b: Expr) -> bool:
    def go(x: Expr, y: Expr, mx: dict, my: dict, depth: int) -> bool:
        if isinstance(x, Id) and isinstance(y, Id):
            ix, iy = mx.get(x.name), my.get(y.name)
            if ix is None and iy is None:
                return x.name == y.name
            return ix == iy
        if type(x) is not type(y):
            return False
        if isinstance(x, _BINDING):
            if isinstance(x, Quant) and x.kind != y.kind:
                return False
            bx, ix = _binder_parts(x)
            by, iy = _binder_parts(y)
            if (bx is None) != (by is None):
                return False
            if bx is not None and not go(bx, by, mx, my, depth):
                return False
            return go(ix, iy, {**mx, x.var: depth}, {**my, y.var: depth}, depth + 1)
        if isinstance(x, (Num, Str, Bool, Hashed)):
            return x == y
        if isinstance(x, (Apply, OpApp)):
            if x.op != y.op or getattr(x, "primed", False) != getattr(y, "primed", False):
                return False
        if isinstance(x, Witness) and x.name != y.name:
            return False
        if isinstance(x, Case) and ((x.other is None) != (y.other is None) or len(x.arms) != len(y.arms)):
            return False
        kx, ky = _kids(x), _kids(y)
        return len(kx) == len(ky) and all(go(p, q, mx, my, depth) for p, q in zip(kx, ky))

    return go(a, b, {}, {}, 0)


def replace_free(e: Expr, target: Expr, repl: Expr) -> Expr:
    """Replace occurrences of ``target`` outside every binder and prime."""
    if e == target:
        return repl
    if isinstance(e, (_BINDING, Prime)):
        return e
    return _rebuild(e, lambda c: replace_free(c, target, repl))


def occurs_free(e: Expr, target: Expr) -> bool:
    if e == target:
        return True
    if isinstance(e, (_BINDING, Prime)):
        return False
    return any(occurs_free(c, target) for c in _kids(e))


def rewrite_with(e: Expr, lhs: Expr, rhs: Expr, names: set[str]) -> Expr:
    if e == lhs:
        return rhs
    if isinstance(e, Prime):
        return e
    if isinstance(e, _BINDING):
        if e.var in names:
            return e
        bound, body = _binder_parts(e)
        return _make_binder(e, e.var, None if bound is None else rewrite_with(bound, lhs, rhs, names),
                            rewrite_with(body, lhs, rhs, names))
    return _rebuild(e, lambda c: rewrite_with(c, lhs, rhs, names))


# ---------------------------------------------------------------- ground evaluation


def evaluate(e: Expr):
    """Values: int, ('s', str), bool, frozenset. ``None`` if not a closed literal expression."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Str):
        return ("s", e.value)
    if isinstance(e, Bool):
        return e.value
    if isinstance(e, SetEnum):
        vs = [evaluate(x) for x in e.elems]
        return None if any(v is None for v in vs) else frozenset(vs)
    if not isinstance(e, OpApp):
        return None
    if e.op == "range":
        lo, hi = evaluate(e.args[0]), evaluate(e.args[1])
        if _isint(lo) and _isint(hi) and hi - lo <= 10_000:
            return frozenset(range(lo, hi + 1))
        return None
    if e.op in ("in", "notin"):
        r = _member(e.args[0], e.args[1])
        return r if r is None or e.op == "in" else not r
    vs = [evaluate(x) for x in e.args]
    if any(v is None for v in vs):
        return None
    op = e.op
    if op == "not":
        return (not vs[0]) if isinstance(vs[0], bool) else None
    if op in ("and", "or", "implies", "equiv"):
        if not all(isinstance(v, bool) for v in vs):
            return None
        a, b = vs
        return {"and": a and b, "or": a or b, "implies": b or not a, "equiv": a is b}[op]
    if op in ("eq", "neq"):
        a, b = vs
        if not _comparable(a, b):
            return None
        return (a == b) if op == "eq" else (a != b)
    if all(_isint(v) for v in vs):
        if op == "neg":
            return -vs[0]
        a, b = vs
        if op in ("div", "mod"):
            if b <= 0:
                return None
            return a // b if op == "div" else a % b
        table = {"lt": a < b, "le": a <= b, "gt": a > b, "ge": a >= b,
                 "plus": a + b, "minus": a - b, "times": a * b}
        return table.get(op)
    return None


def _member(elem: Expr, s: Expr):
    v = evaluate(elem)
    if v is None:
        return None
    if isinstance(s, Id) and s.name == "Nat":
        return v >= 0 if _isint(v) else None
    if isinstance(s, Id) and s.name == "Int":
        return True if _isint(v) else None
    if isinstance(s, Id) and s.name == "BOOLEAN":
        return True if isinstance(v, bool) else None
    sv = evaluate(s)
    if not isinstance(sv, frozenset) or not all(_kind(x) == _kind(v) for x in sv):
        return None
    return v in sv


def _comparable(a, b) -> bool:
    if _kind(a) != _kind(b) or _kind(a) == "?":
        return False
    if _kind(a) == "set":
        kinds = {_kind(x) for x in a | b}
        return len(kinds) <= 1 and "?" not in kinds and "set" not in kinds
    return True


def _isint(v) -> bool:
    return type(v) is int


def _kind(v) -> str:
    return {bool: "b", int: "i", tuple: "s", frozenset: "set"}.get(type(v), "?")


# ---------------------------------------------------------------- shapes


def _is(e: Expr, op: str) -> bool:
    return isinstance(e, OpApp) and e.op == op


def NOT(e: Expr) -> Expr:
    return OpApp("not", (e,))


def IN(t: Expr, s: Expr) -> Expr:
    return OpApp("in", (t, s))


def EQ(a: Expr, b: Expr) -> Expr:
    return OpApp("eq", (a, b))


_BOOL_OPS = {"and", "or", "not", "implies", "equiv", "eq", "neq", "in", "notin",
             "subseteq", "lt", "le", "gt", "ge", "unchanged"}


def boolean_valued(e: Expr) -> bool:
    if isinstance(e, OpApp):
        return e.op in _BOOL_OPS
    if isinstance(e, Hashed):
        return e.role == "formula"
    return isinstance(e, (Bool, Quant))


def set_valued(e: Expr) -> bool:
    if isinstance(e, (SetEnum, SetFilter)):
        return True
    if isinstance(e, OpApp):
        return e.op in ("cup", "cap", "setminus", "powerset", "range")
    return isinstance(e, Id) and e.name in ("Nat", "Int", "Real", "BOOLEAN")


def _need(cond: bool, what: str) -> None:
    if not cond:
        raise _bad(what)


def _one(prems: list[Expr], op: Optional[str] = None, neg: bool = False) -> Expr:
    _need(len(prems) == 1, "rule takes one premise")
    p = prems[0]
    if neg:
        _need(_is(p, "not"), "premise must be a negation")
        p = p.args[0]
    if op is not None:
        _need(_is(p, op), f"premise must be a {op} formula")
    return p


def _var_avoiding(*es: Expr) -> str:
    used = set()
    for e in es:
        used |= all_ids(e)
    n = 0
    while f"k{n}" in used:
        n += 1
    return f"k{n}"


# ---------------------------------------------------------------- rule table

RuleFn = Callable[[list[Expr], list[Expr], "_Ctx"], list[list[Expr]]]
RULES: dict[str, tuple[str, RuleFn]] = {}


def rule(name: str, schema: str):
    def register(fn: RuleFn) -> RuleFn:
        RULES[name] = (schema, fn)
        return fn
    return register


class _Ctx:
    def __init__(self, signature: set[str]):
        self.signature = signature
        self.witnesses: dict[str, Expr] = {}
        self.intros: list[tuple[str, Expr]] = []


# connectives


@rule("and", "alpha-and: from A /\\ B derive A, B")
def _r_and(p, a, c):
    f = _one(p, "and")
    return [[f.args[0], f.args[1]]]


@rule("or", "beta-or: from A \\/ B branch A | B")
def _r_or(p, a, c):
    f = _one(p, "or")
    return [[f.args[0]], [f.args[1]]]


@rule("implies", "beta-implies: from A => B branch ~A | B")
def _r_implies(p, a, c):
    f = _one(p, "implies")
    return [[NOT(f.args[0])], [f.args[1]]]


@rule("equiv", "beta-equiv: from A <=> B branch A, B | ~A, ~B")
def _r_equiv(p, a, c):
    f = _one(p, "equiv")
    return [[f.args[0], f.args[1]], [NOT(f.args[0]), NOT(f.args[1])]]


@rule("not-not", "alpha-not-not: from ~~A derive A")
def _r_nn(p, a, c):
    return [[_one(p, "not", neg=True).args[0]]]


@rule("not-and", "beta-not-and: from ~(A /\\ B) branch ~A | ~B")
def _r_nand(p, a, c):
    f = _one(p, "and", neg=True)
    return [[NOT(f.args[0])], [NOT(f.args[1])]]


@rule("not-or", "alpha-not-or: from ~(A \\/ B) derive ~A, ~B")
def _r_nor(p, a, c):
    f = _one(p, "or", neg=True)
    return [[NOT(f.args[0]), NOT(f.args[1])]]


@rule("not-implies", "alpha-not-implies: from ~(A => B) derive A, ~B")
def _r_nimp(p, a, c):
    f = _one(p, "implies", neg=True)
    return [[f.args[0], NOT(f.args[1])]]


@rule("not-equiv", "beta-not-equiv: from ~(A <=> B) branch A, ~B | ~A, B")
def _r_nequiv(p, a, c):
    f = _one(p, "equiv", neg=True)
    return [[f.args[0], NOT(f.args[1])], [NOT(f.args[0]), f.args[1]]]


# derived relations


@rule("neq", "alpha-neq: from a # b derive ~(a = b)")
def _r_neq(p, a, c):
    f = _one(p, "neq")
    return [[NOT(EQ(*f.args))]]


@rule("not-neq", "alpha-not-neq: from ~(a # b) derive a = b")
def _r_nneq(p, a, c):
    return [[EQ(*_one(p, "neq", neg=True).args)]]


@rule("notin", "alpha-notin: from a \\notin S derive ~(a \\in S)")
def _r_notin(p, a, c):
    return [[NOT(IN(*_one(p, "notin").args))]]


@rule("not-notin", "alpha-not-notin: from ~(a \\notin S) derive a \\in S")
def _r_nnotin(p, a, c):
    return [[IN(*_one(p, "notin", neg=True).args)]]


@rule("gt", "alpha-gt: from a > b derive b < a")
def _r_gt(p, a, c):
    f = _one(p, "gt")
    return [[OpApp("lt", (f.args[1], f.args[0]))]]


@rule("ge", "alpha-ge: from a >= b derive b <= a")
def _r_ge(p, a, c):
    f = _one(p, "ge")
    return [[OpApp("le", (f.args[1], f.args[0]))]]


@rule("not-gt", "alpha-not-gt: from ~(a > b) derive ~(b < a)")
def _r_ngt(p, a, c):
    f = _one(p, "gt", neg=True)
    return [[NOT(OpApp("lt", (f.args[1], f.args[0])))]]


@rule("not-ge", "alpha-not-ge: from ~(a >= b) derive ~(b <= a)")
def _r_nge(p, a, c):
    f = _one(p, "ge", neg=True)
    return [[NOT(OpApp("le", (f.args[1], f.args[0])))]]


@rule("bool-eq", "alpha-bool-eq: from A = B with A, B boolean-valued derive A <=> B")
def _r_beq(p, a, c):
    f = _one(p, "eq")
    _need(all(boolean_valued(x) for x in f.args), "bool-eq needs boolean-valued sides")
    return [[OpApp("equiv", f.args)]]


@rule("not-bool-eq", "alpha-not-bool-eq: from ~(A = B) with A, B boolean-valued derive ~(A <=> B)")
def _r_nbeq(p, a, c):
    f = _one(p, "eq", neg=True)
    _need(all(boolean_valued(x) for x in f.args), "not-bool-eq needs boolean-valued sides")
    return [[NOT(OpApp("equiv", f.args))]]


# sets


def _ext(l: Expr, r: Expr) -> Expr:
    v = _var_avoiding(l, r)
    return Quant("forall", v, None, OpApp("equiv", (IN(Id(v), l), IN(Id(v), r))))


@rule("set-ext", "alpha-set-ext: from S = T (set terms) derive \\A x : x \\in S <=> x \\in T")
def _r_sext(p, a, c):
    f = _one(p, "eq")
    _need(all(set_valued(x) for x in f.args), "set-ext needs set-valued sides")
    return [[_ext(*f.args)]]


@rule("not-set-ext", "alpha-not-set-ext: from ~(S = T) (set terms) derive ~\\A x : x \\in S <=> x \\in T")
def _r_nsext(p, a, c):
    f = _one(p, "eq", neg=True)
    _need(all(set_valued(x) for x in f.args), "not-set-ext needs set-valued sides")
    return [[NOT(_ext(*f.args))]]


def _funext(l: FunLit, r: FunLit) -> Expr:
    v = _var_avoiding(l, r)
    return Quant("forall", v, l.domain, EQ(instantiate(l.body, l.var, Id(v)), instantiate(r.body, r.var, Id(v))))


@rule("fun-ext", "alpha-fun-ext: from [x \\in S |-> e] = [y \\in T |-> f] derive S = T, \\A x \\in S : e = f[x/y]")
def _r_fext(p, a, c):
    f = _one(p, "eq")
    l, r = f.args
    _need(isinstance(l, FunLit) and isinstance(r, FunLit), "fun-ext needs function literals")
    return [[EQ(l.domain, r.domain), _funext(l, r)]]


@rule("not-fun-ext", "beta-not-fun-ext: from ~([x \\in S |-> e] = [y \\in T |-> f]) branch ~(S = T) | ~\\A x \\in S : e = f[x/y]")
def _r_nfext(p, a, c):
    f = _one(p, "eq", neg=True)
    l, r = f.args
    _need(isinstance(l, FunLit) and isinstance(r, FunLit), "not-fun-ext needs function literals")
    return [[NOT(EQ(l.domain, r.domain))], [NOT(_funext(l, r))]]


def _mem(p: list[Expr], neg: bool, kind) -> tuple[Expr, Expr]:
    f = _one(p, "in", neg=neg)
    t, s = f.args
    _need(kind(s), "membership rule does not match the set's shape")
    return t, s


@rule("in-enum", "beta-in-enum: from t \\in {a1, ..., an} branch t = a1 | ... | t = an")
def _r_inenum(p, a, c):
    t, s = _mem(p, False, lambda s: isinstance(s, SetEnum) and s.elems)
    return [[EQ(t, x)] for x in s.elems]


@rule("not-in-enum", "alpha-not-in-enum: from ~(t \\in {a1, ..., an}) derive ~(t = a1), ..., ~(t = an)")
def _r_ninenum(p, a, c):
    t, s = _mem(p, True, lambda s: isinstance(s, SetEnum) and s.elems)
    return [[NOT(EQ(t, x)) for x in s.elems]]


@rule("in-cup", "beta-in-cup: from t \\in A \\cup B branch t \\in A | t \\in B")
def _r_incup(p, a, c):
    t, s = _mem(p, False, lambda s: _is(s, "cup"))
    return [[IN(t, s.args[0])], [IN(t, s.args[1])]]


@rule("not-in-cup", "alpha-not-in-cup: from ~(t \\in A \\cup B) derive ~(t \\in A), ~(t \\in B)")
def _r_nincup(p, a, c):
    t, s = _mem(p, True, lambda s: _is(s, "cup"))
    return [[NOT(IN(t, s.args[0])), NOT(IN(t, s.args[1]))]]


@rule("in-cap", "alpha-in-cap: from t \\in A \\cap B derive t \\in A, t \\in B")
def _r_incap(p, a, c):
    t, s = _mem(p, False, lambda s: _is(s, "cap"))
    return [[IN(t, s.args[0]), IN(t, s.args[1])]]


@rule("not-in-cap", "beta-not-in-cap: from ~(t \\in A \\cap B) branch ~(t \\in A) | ~(t \\in B)")
def _r_nincap(p, a, c):
    t, s = _mem(p, True, lambda s: _is(s, "cap"))
    return [[NOT(IN(t, s.args[0]))], [NOT(IN(t, s.args[1]))]]


@rule("in-setminus", "alpha-in-setminus: from t \\in A \\ B derive t \\in A, ~(t \\in B)")
def _r_insm(p, a, c):
    t, s = _mem(p, False, lambda s: _is(s, "setminus"))
    return [[IN(t, s.args[0]), NOT(IN(t, s.args[1]))]]


@rule("not-in-setminus", "beta-not-in-setminus: from ~(t \\in A \\ B) branch ~(t \\in A) | t \\in B")
def _r_ninsm(p, a, c):
    t, s = _mem(p, True, lambda s: _is(s, "setminus"))
    return [[NOT(IN(t, s.args[0]))], [IN(t, s.args[1])]]


@rule("in-filter", "alpha-in-filter: from t \\in {x \\in S : P} derive t \\in S, P[t/x]")
def _r_infilter(p, a, c):
    t, s = _mem(p, False, lambda s: isinstance(s, SetFilter))
    return [[IN(t, s.bound), instantiate(s.pred, s.var, t)]]


@rule("not-in-filter", "beta-not-in-filter: from ~(t \\in {x \\in S : P}) branch ~(t \\in S) | ~P[t/x]")
def _r_ninfilter(p, a, c):
    t, s = _mem(p, True, lambda s: isinstance(s, SetFilter))
    return [[NOT(IN(t, s.bound))], [NOT(instantiate(s.pred, s.var, t))]]


@rule("in-powerset", "alpha-in-powerset: from t \\in SUBSET S derive t \\subseteq S")
def _r_inps(p, a, c):
    t, s = _mem(p, False, lambda s: _is(s, "powerset"))
    return [[OpApp("subseteq", (t, s.args[0]))]]


@rule("not-in-powerset", "alpha-not-in-powerset: from ~(t \\in SUBSET S) derive ~(t \\subseteq S)")
def _r_ninps(p, a, c):
    t, s = _mem(p, True, lambda s: _is(s, "powerset"))
    return [[NOT(OpApp("subseteq", (t, s.args[0])))]]


@rule("in-boolean", "beta-in-boolean: from t \\in BOOLEAN branch t = TRUE | t = FALSE")
def _r_inbool(p, a, c):
    t, _ = _mem(p, False, lambda s: isinstance(s, Id) and s.name == "BOOLEAN")
    return [[EQ(t, Bool(True))], [EQ(t, Bool(False))]]


@rule("not-in-boolean", "alpha-not-in-boolean: from ~(t \\in BOOLEAN) derive ~(t = TRUE), ~(t = FALSE)")
def _r_ninbool(p, a, c):
    t, _ = _mem(p, True, lambda s: isinstance(s, Id) and s.name == "BOOLEAN")
    return [[NOT(EQ(t, Bool(True))), NOT(EQ(t, Bool(False)))]]


@rule("in-range", "alpha-in-range: from t \\in a..b derive a <= t, t <= b")
def _r_inrange(p, a, c):
    t, s = _mem(p, False, lambda s: _is(s, "range"))
    return [[OpApp("le", (s.args[0], t)), OpApp("le", (t, s.args[1]))]]


@rule("not-in-range", "beta-not-in-range: from ~(t \\in a..b) branch ~(a <= t) | ~(t <= b)")
def _r_ninrange(p, a, c):
    t, s = _mem(p, True, lambda s: _is(s, "range"))
    return [[NOT(OpApp("le", (s.args[0], t)))], [NOT(OpApp("le", (t, s.args[1])))]]


@rule("range-enum", "beta-range-enum: from t \\in m..n (numerals) branch t = m | ... | t = n")
def _r_rangeenum(p, a, c):
    t, s = _mem(p, False, lambda s: _is(s, "range") and all(isinstance(x, Num) for x in s.args))
    lo, hi = s.args[0].value, s.args[1].value
    _need(0 <= hi - lo < 64, "range too large to enumerate")
    return [[EQ(t, Num(k))] for k in range(lo, hi + 1)]


def _subset_formula(a_: Expr, b_: Expr) -> Expr:
    v = _var_avoiding(a_, b_)
    return Quant("forall", v, a_, IN(Id(v), b_))


@rule("subseteq", "alpha-subseteq: from A \\subseteq B derive \\A x \\in A : x \\in B")
def _r_sub(p, a, c):
    f = _one(p, "subseteq")
    return [[_subset_formula(*f.args)]]


@rule("not-subseteq", "alpha-not-subseteq: from ~(A \\subseteq B) derive ~\\A x \\in A : x \\in B")
def _r_nsub(p, a, c):
    f = _one(p, "subseteq", neg=True)
    return [[NOT(_subset_formula(*f.args))]]


# quantifiers


def _quant(p: list[Expr], kind: str, neg: bool) -> Quant:
    _need(len(p) >= 1, "missing premise")
    f = p[0]
    if neg:
        _need(_is(f, "not"), "premise must be a negation")
        f = f.args[0]
    _need(isinstance(f, Quant) and f.kind == kind, f"premise must be a {kind} formula")
    return f


def _enum_bound(q: Quant) -> tuple[Expr, ...]:
    _need(isinstance(q.bound, SetEnum), "bound must be an explicit set")
    return q.bound.elems


@rule("forall-enum", "alpha-forall-enum: from \\A x \\in {a1, ..., an} : P derive P[a1/x], ..., P[an/x]")
def _r_fenum(p, a, c):
    q = _quant(p, "forall", False)
    return [[instantiate(q.body, q.var, t) for t in _enum_bound(q)]]


@rule("not-exists-enum", "alpha-not-exists-enum: from ~\\E x \\in {a1, ..., an} : P derive ~P[a1/x], ..., ~P[an/x]")
def _r_nexenum(p, a, c):
    q = _quant(p, "exists", True)
    return [[NOT(instantiate(q.body, q.var, t)) for t in _enum_bound(q)]]


@rule("exists-enum", "beta-exists-enum: from \\E x \\in {a1, ..., an} : P branch P[a1/x] | ... | P[an/x]")
def _r_exenum(p, a, c):
    q = _quant(p, "exists", False)
    return [[instantiate(q.body, q.var, t)] for t in _enum_bound(q)]


@rule("not-forall-enum", "beta-not-forall-enum: from ~\\A x \\in {a1, ..., an} : P branch ~P[a1/x] | ... | ~P[an/x]")
def _r_nfenum(p, a, c):
    q = _quant(p, "forall", True)
    return [[NOT(instantiate(q.body, q.var, t))] for t in _enum_bound(q)]


def _gamma(p, args, neg: bool, member: bool) -> list[list[Expr]]:
    q = _quant(p, "exists" if neg else "forall", neg)
    _need(len(args) == 1, "instantiation needs exactly one term")
    t = args[0]
    inst = instantiate(q.body, q.var, t)
    if neg:
        inst = NOT(inst)
    if member:
        _need(q.bound is not None and len(p) == 2 and p[1] == IN(t, q.bound),
              "member instantiation needs t \\in S on the branch")
        return [[inst]]
    _need(len(p) == 1, "rule takes one premise")
    if q.bound is None:
        return [[inst]]
    return [[NOT(IN(t, q.bound))], [inst]]


def _binders_in(e: Expr) -> list[Expr]:
    out, stack = [], [e]
    while stack:
        x = stack.pop()
        if isinstance(x, _BINDING):
            out.append(x)
        stack.extend(_kids(x))
    return out


@rule("forall", "gamma-forall: from \\A x : P derive P[t/x]; bounded: from \\A x \\in S : P branch ~(t \\in S) | P[t/x]")
def _r_forall(p, a, c):
    return _gamma(p, a, False, False)


@rule("forall-member", "gamma-forall-member: from \\A x \\in S : P and t \\in S derive P[t/x]")
def _r_forall_m(p, a, c):
    return _gamma(p, a, False, True)


@rule("not-exists", "gamma-not-exists: from ~\\E x : P derive ~P[t/x]; bounded: from ~\\E x \\in S : P branch ~(t \\in S) | ~P[t/x]")
def _r_nexists(p, a, c):
    return _gamma(p, a, True, False)


@rule("not-exists-member", "gamma-not-exists-member: from ~\\E x \\in S : P and t \\in S derive ~P[t/x]")
def _r_nexists_m(p, a, c):
    return _gamma(p, a, True, True)


def _delta(p: list[Expr], c: _Ctx, neg: bool) -> list[list[Expr]]:
    q = _quant(p, "forall" if neg else "exists", neg)
    _need(len(p) == 1, "rule takes one premise")
    body = NOT(q.body) if neg else q.body
    expected = Choose(q.var, q.bound, body)
    _need(len(c.intros) == 1, "delta rule introduces exactly one witness")
    name, definition = c.intros[0]
    _need(alpha_eq(definition, expected), "witness definition does not match the premise")
    c.register(name, definition)
    w = Witness(name)
    out = [instantiate(body, q.var, w)]
    if q.bound is not None:
        out.insert(0, IN(w, q.bound))
    return [out]


@rule("exists", "delta-exists: from \\E x [\\in S] : P introduce w := CHOOSE x [\\in S] : P, derive [w \\in S,] P[w/x]")
def _r_exists(p, a, c):
    return _delta(p, c, False)


@rule("not-forall", "delta-not-forall: from ~\\A x [\\in S] : P introduce w := CHOOSE x [\\in S] : ~P, derive [w \\in S,] ~P[w/x]")
def _r_nforall(p, a, c):
    return _delta(p, c, True)


# terms with structure


def _redex(p: list[Expr], a: list[Expr], kind) -> tuple[Expr, Expr]:
    _need(len(p) == 1 and len(a) == 1, "rule takes one premise and one redex")
    f, r = p[0], a[0]
    _need(kind(r), "redex has the wrong shape")
    _need(occurs_free(f, r), "redex does not occur outside binders in the premise")
    return f, r


@rule("if-lift", "beta-if-lift: from L[IF c THEN a ELSE b] branch c, L[a] | ~c, L[b]")
def _r_iflift(p, a, c):
    f, r = _redex(p, a, lambda r: isinstance(r, If))
    return [[r.cond, replace_free(f, r, r.then)], [NOT(r.cond), replace_free(f, r, r.other)]]


@rule("case-lift", "beta-case-lift: from L[CASE p1 -> e1 [] ... [] OTHER -> o] branch p1, L[e1] | ... | ~p1, ..., ~pn[, L[o]]")
def _r_caselift(p, a, c):
    f, r = _redex(p, a, lambda r: isinstance(r, Case))
    out = [[g, replace_free(f, r, v)] for g, v in r.arms]
    last = [NOT(g) for g, _ in r.arms]
    if r.other is not None:
        last.append(replace_free(f, r, r.other))
    return out + [last]


@rule("fun-app", "beta-fun-app: from L[[x \\in S |-> e][t]] branch ~(t \\in S) | L[e[t/x]]")
def _r_funapp(p, a, c):
    f, r = _redex(p, a, lambda r: isinstance(r, FunApp) and isinstance(r.fn, FunLit))
    fn = r.fn
    return [[NOT(IN(r.arg, fn.domain))], [replace_free(f, r, instantiate(fn.body, fn.var, r.arg))]]


@rule("fun-domain", "alpha-fun-domain: from L[DOMAIN [x \\in S |-> e]] derive L[S]")
def _r_fundom(p, a, c):
    f, r = _redex(p, a, lambda r: _is(r, "domain") and isinstance(r.args[0], FunLit))
    return [[replace_free(f, r, r.args[0].domain)]]


@rule("choose", "beta-choose: for c = CHOOSE x [\\in S] : P branch ~\\E x [\\in S] : P | [c \\in S,] P[c/x]")
def _r_choose(p, a, c):
    _need(not p and len(a) == 1 and isinstance(a[0], Choose), "choose takes one CHOOSE term")
    ch = a[0]
    sat = [instantiate(ch.body, ch.var, ch)]
    if ch.bound is not None:
        sat.insert(0, IN(ch, ch.bound))
    return [[NOT(Quant("exists", ch.var, ch.bound, ch.body))], sat]


@rule("witness-def", "alpha-witness-def: for an introduced witness w := d derive w = d")
def _r_wdef(p, a, c):
    _need(not p and len(a) == 1 and isinstance(a[0], Witness), "witness-def takes one witness")
    name = a[0].name
    _need(name in c.witnesses, "witness was never introduced")
    return [[EQ(a[0], c.witnesses[name])]]


@rule("rewrite", "alpha-rewrite: from l = r and L derive L with l replaced by r (arg lr) or r by l (arg rl), outside primes")
def _r_rewrite(p, a, c):
    _need(len(p) == 2 and len(a) == 1, "rewrite takes an equation, a target and a direction")
    eq, target = p
    _need(_is(eq, "eq"), "first premise must be an equation")
    direction = a[0]
    _need(isinstance(direction, Id) and direction.name in ("lr", "rl"), "direction must be lr or rl")
    lhs, rhs = eq.args if direction.name == "lr" else eq.args[::-1]
    return [[rewrite_with(target, lhs, rhs, free_ids(lhs))]]


@rule("lemma", "axiom-lemma: add the named formula of the built-in lemma base")
def _r_lemma(p, a, c):
    _need(not p and len(a) == 1 and isinstance(a[0], Id) and a[0].name in LEMMA_TEXT, "unknown lemma")
    return [[parse_expr(LEMMA_TEXT[a[0].name])]]


def _register(self: _Ctx, name: str, definition: Expr) -> None:
    if name in self.signature or "?" + name in self.signature:
        raise Reject("non-fresh-term", f"witness {name} occurs in the obligation")
    old = self.witnesses.get(name)
    if old is not None and not alpha_eq(old, definition):
        raise Reject("non-fresh-term", f"witness {name} already denotes a different term")
    self.witnesses[name] = definition


_Ctx.register = _register


CLOSURES: dict[str, str] = {
    "contra": "close-contra: A and ~A on the branch",
    "false": "close-false: FALSE on the branch",
    "nottrue": "close-not-true: ~TRUE on the branch",
    "neq-refl": "close-neq-refl: ~(t = t) on the branch",
    "empty": "close-empty: t \\in {} on the branch",
    "ground": "close-ground: a variable-free literal that evaluates to FALSE",
}


def audit_rule_table() -> list[tuple[str, str]]:
    rows = [(name, CLOSURES[name]) for name in sorted(CLOSURES)]
    rows += [(name, RULES[name][0]) for name in sorted(RULES)]
    return rows


# ---------------------------------------------------------------- checking


def _parse(text: str) -> Expr:
    try:
        return parse_expr(text, internal=True)
    except ParseError as err:
        raise _bad(f"unparsable formula {text!r}: {err}") from None


def _check_close(node: Close, branch: set[Expr]) -> None:
    fs = [_parse(t) for t in node.formulas]
    for f in fs:
        if f not in branch:
            raise _bad(f"closing formula {f!r} is not on the branch")
    k = node.rule
    if k == "contra":
        _need(len(fs) == 2 and fs[1] == NOT(fs[0]), "contra needs A and ~A")
    elif k == "false":
        _need(len(fs) == 1 and fs[0] == Bool(False), "false needs FALSE")
    elif k == "nottrue":
        _need(len(fs) == 1 and fs[0] == NOT(Bool(True)), "nottrue needs ~TRUE")
    elif k == "neq-refl":
        _need(len(fs) == 1 and _is(fs[0], "not") and _is(fs[0].args[0], "eq")
              and fs[0].args[0].args[0] == fs[0].args[0].args[1], "neq-refl needs ~(t = t)")
    elif k == "empty":
        _need(len(fs) == 1 and _is(fs[0], "in") and fs[0].args[1] == SetEnum(()), "empty needs t \\in {}")
    elif k == "ground":
        _need(len(fs) == 1 and evaluate(fs[0]) is False, "ground closure needs a false ground literal")
    else:
        raise Reject("unknown-rule", f"unknown closure {k}")


def check(ob, trace: ProofTrace) -> Verdict:
    """Accept iff ``trace`` is a closed tableau for ``ob``'s hypotheses and negated goal."""
    expected_fp = sequent_fingerprint(ob.hypotheses, ob.goal, ob.usable, ob.pragmas)
    if trace.fingerprint != ob.id or ob.id != expected_fp:
        return Verdict(False, "fingerprint-mismatch", 0, "trace and obligation fingerprints differ")
    signature: set[str] = set()
    for _, h in ob.hypotheses:
        signature |= all_ids(h)
    signature |= all_ids(ob.goal)
    ctx = _Ctx(signature)
    root = set(h for _, h in ob.hypotheses)
    root.add(NOT(ob.goal))
    stack = [(trace.root, root)]
    pos = 0
    try:
        while stack:
            node, branch = stack.pop()
            pos += 1
            if node is None:
                raise Reject("unclosed-branch", "a branch ends without a closure")
            if isinstance(node, Close):
                _check_close(node, branch)
                continue
            if not isinstance(node, RuleNode):
                raise _bad("unknown node type")
            if node.rule not in RULES:
                raise Reject("unknown-rule", f"unknown rule {node.rule}")
            prems = [_parse(t) for t in node.prems]
            for f in prems:
                if f not in branch:
                    raise _bad(f"premise {f!r} is not on the branch")
            args = [_parse(t) for t in node.args]
            ctx.intros = [(n, _parse(d)) for n, d in node.intros]
            if ctx.intros and node.rule not in ("exists", "not-forall"):
                raise _bad("only delta rules introduce witnesses")
            expected = RULES[node.rule][1](prems, args, ctx)
            if len(expected) != len(node.branches):
                raise _bad(f"{node.rule} has {len(expected)} branches, trace has {len(node.branches)}")
            for want, (claimed, child) in zip(expected, node.branches):
                got = [_parse(t) for t in claimed]
                if len(got) != len(want) or not all(alpha_eq(x, y) for x, y in zip(got, want)):
                    raise _bad(f"{node.rule}: claimed conclusions differ from the rule's")
            if len(node.branches) == 1:
                branch.update(_parse(t) for t in node.branches[0][0])
                stack.append((node.branches[0][1], branch))
            else:
                for claimed, child in reversed(node.branches):
                    nb = set(branch)
                    nb.update(_parse(t) for t in claimed)
                    stack.append((child, nb))
    except Reject as r:
        return Verdict(False, r.reason, pos, r.detail)
    return Verdict(True)
