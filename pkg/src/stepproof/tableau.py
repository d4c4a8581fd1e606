"""Proof-producing ground tableau prover.

Each successful run yields a :class:`~stepproof.tracefmt.ProofTrace` that the
independent kernel re-checks. Rule priority on a branch: closure, alpha,
delta, equality rewriting, beta, gamma.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from stepproof.lemmas import TRIGGERS, cite_lemma, lemma_names
from stepproof.printer import print_expr
from stepproof.rewrite import free_names, subst
from stepproof.syntax import (
    BINDERS, FALSE, FORMULA_OPS, TRUE, Apply, Bool, Case, Choose, Expr, FunApp, FunLit,
    Hashed, Id, If, Num, OpApp, Prime, Quant, SetEnum, SetFilter, Str, Witness, children,
    map_children, walk, Eq, Not, And,
)
from stepproof.tracefmt import Close, Node, ProofTrace, RuleNode

DEFAULT_SECONDS = 5.0
DEFAULT_STEPS = 50_000


@dataclass(frozen=True)
class Budget:
    seconds: float = DEFAULT_SECONDS
    steps: int = DEFAULT_STEPS


@dataclass
class ProveResult:
    trace: Optional[ProofTrace]
    reason: str = ""  # saturated-open-branch | budget-exhausted
    steps: int = 0

    @property
    def proved(self) -> bool:
        return self.trace is not None


class _Open(Exception):
    pass


class _OutOfBudget(Exception):
    pass


# ---------------------------------------------------------------- shapes

_CONNECTIVES = {"and", "or", "not", "implies", "equiv"}
_SET_OPS = {"cup", "cap", "setminus", "powerset", "range"}


def _op(e: Expr, name: str) -> bool:
    return isinstance(e, OpApp) and e.op == name


def _neg(e: Expr) -> Expr:
    return Not(e)


def is_formula_shaped(e: Expr) -> bool:
    if isinstance(e, OpApp):
        return e.op in FORMULA_OPS
    if isinstance(e, Hashed):
        return e.role == "formula"
    return isinstance(e, (Bool, Quant))


def is_syntactic_set(e: Expr) -> bool:
    if isinstance(e, (SetEnum, SetFilter)):
        return True
    if isinstance(e, OpApp) and e.op in _SET_OPS:
        return True
    return isinstance(e, Id) and e.name in ("Nat", "Int", "Real", "BOOLEAN")


def _atom_headed(f: Expr) -> bool:
    g = f.args[0] if _op(f, "not") else f
    if isinstance(g, OpApp):
        return g.op not in _CONNECTIVES
    return not isinstance(g, (Quant, Bool))


def term_size(e: Expr) -> int:
    return sum(1 for _ in walk(e))


def _is_value_literal(e: Expr) -> bool:
    return isinstance(e, (Num, Str, Bool))


def _order_key(e: Expr) -> tuple:
    return (term_size(e), 0 if _is_value_literal(e) else 1, print_expr(e))


# ---------------------------------------------------------------- ground evaluation


_NUMS = (int,)


def ground_value(e: Expr):
    """Value of a variable-free expression, or ``None`` when not evaluable."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Str):
        return ("str", e.value)
    if isinstance(e, Bool):
        return e.value
    if isinstance(e, SetEnum):
        vals = [ground_value(x) for x in e.elems]
        if any(v is None for v in vals):
            return None
        try:
            return frozenset(vals)
        except TypeError:
            return None
    if not isinstance(e, OpApp):
        return None
    op = e.op
    if op in ("in", "notin"):
        v = ground_value(e.args[0])
        if v is None:
            return None
        s = e.args[1]
        res = None
        if isinstance(s, Id) and s.name in ("Nat", "Int"):
            if isinstance(v, bool) or not isinstance(v, int):
                return None
            res = v >= 0 if s.name == "Nat" else True
        elif isinstance(s, Id) and s.name == "BOOLEAN":
            if isinstance(v, bool):
                res = True
            else:
                return None
        else:
            sv = ground_value(s)
            if not isinstance(sv, (frozenset, range)):
                return None
            if isinstance(sv, range):
                if isinstance(v, bool) or not isinstance(v, int):
                    return None
            elif not all(_same_kind(v, x) for x in sv):
                return None
            res = v in sv
        return res if op == "in" else not res
    if op == "range":
        a, b = (ground_value(x) for x in e.args)
        if _int(a) and _int(b) and b - a <= 10_000:
            return range(a, b + 1)
        return None
    vals = [ground_value(x) for x in e.args]
    if any(v is None for v in vals):
        return None
    if op in ("and", "or", "implies", "equiv", "not"):
        if not all(isinstance(v, bool) for v in vals):
            return None
        if op == "not":
            return not vals[0]
        a, b = vals
        return {"and": a and b, "or": a or b, "implies": (not a) or b, "equiv": a == b}[op]
    if op in ("eq", "neq"):
        a, b = vals
        if isinstance(a, range) or isinstance(b, range):
            a = frozenset(a) if isinstance(a, range) else a
            b = frozenset(b) if isinstance(b, range) else b
        if not _same_kind(a, b):
            return None
        return (a == b) if op == "eq" else (a != b)
    if op in ("lt", "le", "gt", "ge", "plus", "minus", "times", "div", "mod", "neg"):
        if not all(_int(v) for v in vals):
            return None
        if op == "neg":
            return -vals[0]
        a, b = vals
        if op in ("div", "mod") and b <= 0:
            return None
        return {"lt": lambda: a < b, "le": lambda: a <= b, "gt": lambda: a > b, "ge": lambda: a >= b,
                "plus": lambda: a + b, "minus": lambda: a - b, "times": lambda: a * b,
                "div": lambda: a // b, "mod": lambda: a % b}[op]()
    return None


def _int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _same_kind(a, b) -> bool:
    def kind(v):
        if isinstance(v, bool):
            return "bool"
        if isinstance(v, int):
            return "int"
        if isinstance(v, tuple):
            return "str"
        if isinstance(v, frozenset):
            return "set"
        return "other"
    ka, kb = kind(a), kind(b)
    if ka == "set" and kb == "set":
        return all(_same_kind(x, y) for x in a for y in b)
    return ka == kb and ka != "other"


# ---------------------------------------------------------------- term surgery


def replace_outside_binders(e: Expr, target: Expr, repl: Expr) -> Expr:
    """Replace every occurrence of ``target`` that is not inside a binder or a prime."""
    if e == target:
        return repl
    if isinstance(e, BINDERS) or isinstance(e, Prime):
        return e
    return map_children(e, lambda c: replace_outside_binders(c, target, repl))


def rewrite_term(e: Expr, lhs: Expr, rhs: Expr, lhs_names: frozenset[str]) -> Expr:
    """Replace ``lhs`` by ``rhs`` everywhere except under primes and binders capturing ``lhs``."""
    if e == lhs:
        return rhs
    if isinstance(e, Prime):
        return e
    if isinstance(e, BINDERS) and e.var in lhs_names:
        return e
    return map_children(e, lambda c: rewrite_term(c, lhs, rhs, lhs_names))


def occurs_rewritable(e: Expr, lhs: Expr, lhs_names: frozenset[str]) -> bool:
    if e == lhs:
        return True
    if isinstance(e, Prime):
        return False
    if isinstance(e, BINDERS) and e.var in lhs_names:
        return False
    return any(occurs_rewritable(c, lhs, lhs_names) for c in children(e))


def liftable_subterms(e: Expr) -> Iterable[Expr]:
    """IF/CASE/CHOOSE/function-literal redexes outside binders, outermost first."""
    stack = [e]
    while stack:
        x = stack.pop()
        if isinstance(x, (If, Case, Choose)):
            yield x
        elif isinstance(x, FunApp) and isinstance(x.fn, FunLit):
            yield x
        elif _op(x, "domain") and isinstance(x.args[0], FunLit):
            yield x
        if isinstance(x, BINDERS) or isinstance(x, Prime):
            continue
        stack.extend(reversed(children(x)))


def symbols(e: Expr) -> set[str]:
    """Non-logical vocabulary of ``e``: operators, free names, literals."""
    out: set[str] = set()
    bound: set[str] = set()
    for x in walk(e):
        if isinstance(x, BINDERS):
            bound.add(x.var)
        if isinstance(x, OpApp) and x.op not in _CONNECTIVES:
            out.add(x.op)
        elif isinstance(x, Apply):
            out.add(x.op)
        elif isinstance(x, Id) and x.name not in bound:
            out.add(x.name)
        elif isinstance(x, Num):
            out.add(str(x.value))
        elif isinstance(x, SetEnum):
            out.add("{...}" if x.elems else "{}")
        elif isinstance(x, SetFilter):
            out.add("filter")
    return out


def relevant_lemmas(formulas: Iterable[Expr]) -> list[str]:
    """Lemmas whose whole vocabulary already occurs among ``formulas``."""
    vocab: set[str] = set()
    for f in formulas:
        vocab |= symbols(f)
    return [n for n in lemma_names()
            if symbols(cite_lemma(n)) <= vocab and (n not in TRIGGERS or TRIGGERS[n] & vocab)]


def ground_terms(e: Expr, out: dict) -> None:
    """Collect closed term-position subexpressions, including those under binders."""
    def visit(x: Expr, formula_pos: bool, bound: frozenset) -> None:
        if isinstance(x, BINDERS):
            inner = bound | {x.var}
            for c in children(x):
                visit(c, isinstance(x, Quant) and c is x.body or isinstance(x, SetFilter) and c is x.pred,
                      inner if c is not getattr(x, "bound", None) and c is not getattr(x, "domain", None) else bound)
            return
        if not formula_pos and not isinstance(x, (SetEnum, SetFilter, FunLit)):
            if not bound or not (free_names(x) & bound):
                out.setdefault(x, None)
        if isinstance(x, OpApp):
            fpos = x.op in _CONNECTIVES
            for c in x.args:
                visit(c, fpos, bound)
        elif isinstance(x, Prime):
            return
        else:
            for c in children(x):
                visit(c, False, bound)
    visit(e, True, frozenset())


# ---------------------------------------------------------------- expansions


@dataclass
class Expansion:
    kind: str  # alpha | beta | delta | gamma
    rule: str
    branches: list[list[Expr]] = field(default_factory=list)
    # for gamma: (var, bound, body, negated)
    quant: Optional[tuple] = None


def _inst(var: str, body: Expr, t: Expr) -> Expr:
    return subst(body, {var: t})


def _fresh_var(*es: Expr) -> str:
    used = set()
    for e in es:
        for x in walk(e):
            if isinstance(x, Id):
                used.add(x.name)
            elif isinstance(x, BINDERS):
                used.add(x.var)
    for cand in ("x", "y", "z", "w"):
        if cand not in used:
            return cand
    k = 1
    while f"x_{k}" in used:
        k += 1
    return f"x_{k}"


def _in(t: Expr, s: Expr) -> Expr:
    return OpApp("in", (t, s))


def expansion(f: Expr) -> Optional[Expansion]:
    """How ``f`` decomposes, or None for a literal."""
    if isinstance(f, OpApp):
        op, a = f.op, f.args
        if op == "and":
            return Expansion("alpha", "and", [[a[0], a[1]]])
        if op == "or":
            return Expansion("beta", "or", [[a[0]], [a[1]]])
        if op == "implies":
            return Expansion("beta", "implies", [[_neg(a[0])], [a[1]]])
        if op == "equiv":
            return Expansion("beta", "equiv", [[a[0], a[1]], [_neg(a[0]), _neg(a[1])]])
        if op == "neq":
            return Expansion("alpha", "neq", [[_neg(Eq(a[0], a[1]))]])
        if op == "notin":
            return Expansion("alpha", "notin", [[_neg(_in(a[0], a[1]))]])
        if op == "gt":
            return Expansion("alpha", "gt", [[OpApp("lt", (a[1], a[0]))]])
        if op == "ge":
            return Expansion("alpha", "ge", [[OpApp("le", (a[1], a[0]))]])
        if op == "eq":
            l, r = a
            if is_formula_shaped(l) and is_formula_shaped(r):
                return Expansion("alpha", "bool-eq", [[OpApp("equiv", (l, r))]])
            if isinstance(l, FunLit) and isinstance(r, FunLit):
                return Expansion("alpha", "fun-ext", [[Eq(l.domain, r.domain), _funext_body(l, r)]])
            if is_syntactic_set(l) and is_syntactic_set(r):
                v = _fresh_var(l, r)
                return Expansion("alpha", "set-ext", [[
                    Quant("forall", v, None, OpApp("equiv", (_in(Id(v), l), _in(Id(v), r))))]])
            return None
        if op == "in":
            t, s = a
            if isinstance(s, SetEnum):
                return Expansion("beta", "in-enum", [[Eq(t, x)] for x in s.elems])
            if _op(s, "cup"):
                return Expansion("beta", "in-cup", [[_in(t, s.args[0])], [_in(t, s.args[1])]])
            if _op(s, "cap"):
                return Expansion("alpha", "in-cap", [[_in(t, s.args[0]), _in(t, s.args[1])]])
            if _op(s, "setminus"):
                return Expansion("alpha", "in-setminus", [[_in(t, s.args[0]), _neg(_in(t, s.args[1]))]])
            if isinstance(s, SetFilter):
                return Expansion("alpha", "in-filter", [[_in(t, s.bound), _inst(s.var, s.pred, t)]])
            if _op(s, "powerset"):
                return Expansion("alpha", "in-powerset", [[OpApp("subseteq", (t, s.args[0]))]])
            if isinstance(s, Id) and s.name == "BOOLEAN":
                return Expansion("beta", "in-boolean", [[Eq(t, TRUE)], [Eq(t, FALSE)]])
            if _op(s, "range"):
                lo, hi = s.args
                if isinstance(lo, Num) and isinstance(hi, Num) and 0 <= hi.value - lo.value < 64:
                    return Expansion("beta", "range-enum",
                                     [[Eq(t, Num(k))] for k in range(lo.value, hi.value + 1)])
                return Expansion("alpha", "in-range", [[OpApp("le", (lo, t)), OpApp("le", (t, hi))]])
            return None
        if op == "subseteq":
            v = _fresh_var(*a)
            return Expansion("alpha", "subseteq", [[Quant("forall", v, a[0], _in(Id(v), a[1]))]])
        if op == "not":
            return _neg_expansion(a[0])
        return None
    if isinstance(f, Quant):
        if f.kind == "forall":
            if isinstance(f.bound, SetEnum):
                return Expansion("alpha", "forall-enum", [[_inst(f.var, f.body, x) for x in f.bound.elems]])
            return Expansion("gamma", "forall", quant=(f.var, f.bound, f.body, False))
        if isinstance(f.bound, SetEnum):
            return Expansion("beta", "exists-enum", [[_inst(f.var, f.body, x)] for x in f.bound.elems])
        return Expansion("delta", "exists")
    return None


def _funext_body(l: FunLit, r: FunLit) -> Expr:
    body_r = subst(r.body, {r.var: Id(l.var)})
    return Quant("forall", l.var, l.domain, Eq(l.body, body_r))


def _neg_expansion(g: Expr) -> Optional[Expansion]:
    if isinstance(g, OpApp):
        op, a = g.op, g.args
        if op == "not":
            return Expansion("alpha", "not-not", [[a[0]]])
        if op == "and":
            return Expansion("beta", "not-and", [[_neg(a[0])], [_neg(a[1])]])
        if op == "or":
            return Expansion("alpha", "not-or", [[_neg(a[0]), _neg(a[1])]])
        if op == "implies":
            return Expansion("alpha", "not-implies", [[a[0], _neg(a[1])]])
        if op == "equiv":
            return Expansion("beta", "not-equiv", [[a[0], _neg(a[1])], [_neg(a[0]), a[1]]])
        if op == "neq":
            return Expansion("alpha", "not-neq", [[Eq(a[0], a[1])]])
        if op == "notin":
            return Expansion("alpha", "not-notin", [[_in(a[0], a[1])]])
        if op == "gt":
            return Expansion("alpha", "not-gt", [[_neg(OpApp("lt", (a[1], a[0])))]])
        if op == "ge":
            return Expansion("alpha", "not-ge", [[_neg(OpApp("le", (a[1], a[0])))]])
        if op == "eq":
            l, r = a
            if is_formula_shaped(l) and is_formula_shaped(r):
                return Expansion("alpha", "not-bool-eq", [[_neg(OpApp("equiv", (l, r)))]])
            if isinstance(l, FunLit) and isinstance(r, FunLit):
                return Expansion("beta", "not-fun-ext",
                                 [[_neg(Eq(l.domain, r.domain))], [_neg(_funext_body(l, r))]])
            if is_syntactic_set(l) and is_syntactic_set(r):
                v = _fresh_var(l, r)
                return Expansion("alpha", "not-set-ext", [[_neg(
                    Quant("forall", v, None, OpApp("equiv", (_in(Id(v), l), _in(Id(v), r)))))]])
            return None
        if op == "in":
            t, s = a
            if isinstance(s, SetEnum):
                if not s.elems:
                    return None
                return Expansion("alpha", "not-in-enum", [[_neg(Eq(t, x)) for x in s.elems]])
            if _op(s, "cup"):
                return Expansion("alpha", "not-in-cup", [[_neg(_in(t, s.args[0])), _neg(_in(t, s.args[1]))]])
            if _op(s, "cap"):
                return Expansion("beta", "not-in-cap", [[_neg(_in(t, s.args[0]))], [_neg(_in(t, s.args[1]))]])
            if _op(s, "setminus"):
                return Expansion("beta", "not-in-setminus", [[_neg(_in(t, s.args[0]))], [_in(t, s.args[1])]])
            if isinstance(s, SetFilter):
                return Expansion("beta", "not-in-filter",
                                 [[_neg(_in(t, s.bound))], [_neg(_inst(s.var, s.pred, t))]])
            if _op(s, "powerset"):
                return Expansion("alpha", "not-in-powerset", [[_neg(OpApp("subseteq", (t, s.args[0])))]])
            if isinstance(s, Id) and s.name == "BOOLEAN":
                return Expansion("alpha", "not-in-boolean", [[_neg(Eq(t, TRUE)), _neg(Eq(t, FALSE))]])
            if _op(s, "range"):
                lo, hi = s.args
                return Expansion("beta", "not-in-range",
                                 [[_neg(OpApp("le", (lo, t)))], [_neg(OpApp("le", (t, hi)))]])
            return None
        if op == "subseteq":
            v = _fresh_var(*a)
            return Expansion("alpha", "not-subseteq", [[_neg(Quant("forall", v, a[0], _in(Id(v), a[1])))]])
        return None
    if isinstance(g, Quant):
        if g.kind == "exists":
            if isinstance(g.bound, SetEnum):
                return Expansion("alpha", "not-exists-enum",
                                 [[_neg(_inst(g.var, g.body, x)) for x in g.bound.elems]])
            return Expansion("gamma", "not-exists", quant=(g.var, g.bound, g.body, True))
        if isinstance(g.bound, SetEnum):
            return Expansion("beta", "not-forall-enum", [[_neg(_inst(g.var, g.body, x))] for x in g.bound.elems])
        return Expansion("delta", "not-forall")
    return None


def lift_branches(f: Expr, redex: Expr) -> tuple[str, list[list[Expr]]]:
    """Case split on an IF/CASE/CHOOSE/function redex occurring in ``f``."""
    if isinstance(redex, If):
        return "if-lift", [
            [redex.cond, replace_outside_binders(f, redex, redex.then)],
            [_neg(redex.cond), replace_outside_binders(f, redex, redex.other)],
        ]
    if isinstance(redex, Case):
        # the value is some e_i whose guard holds, or OTHER when no guard holds
        out = [[p, replace_outside_binders(f, redex, v)] for p, v in redex.arms]
        none = [_neg(p) for p, _ in redex.arms]
        if redex.other is not None:
            none.append(replace_outside_binders(f, redex, redex.other))
        out.append(none)
        return "case-lift", out
    if isinstance(redex, Choose):
        ex = Quant("exists", redex.var, redex.bound, redex.body)
        sat = [_inst(redex.var, redex.body, redex)]
        if redex.bound is not None:
            sat.insert(0, _in(redex, redex.bound))
        return "choose", [[_neg(ex)], sat]
    if isinstance(redex, FunApp):
        fn = redex.fn
        return "fun-app", [
            [_neg(_in(redex.arg, fn.domain))],
            [replace_outside_binders(f, redex, _inst(fn.var, fn.body, redex.arg))],
        ]
    fn = redex.args[0]
    return "fun-domain", [[replace_outside_binders(f, redex, fn.domain)]]


# ---------------------------------------------------------------- closures


def closure_of(f: Expr, present: Callable[[Expr], bool]) -> Optional[Close]:
    if f == FALSE:
        return Close("false", (print_expr(f),))
    if _op(f, "not") and f.args[0] == TRUE:
        return Close("nottrue", (print_expr(f),))
    if _op(f, "not") and _op(f.args[0], "eq") and f.args[0].args[0] == f.args[0].args[1]:
        return Close("neq-refl", (print_expr(f),))
    if _op(f, "in") and isinstance(f.args[1], SetEnum) and not f.args[1].elems:
        return Close("empty", (print_expr(f),))
    if _atom_headed(f) and ground_value(f) is False:
        return Close("ground", (print_expr(f),))
    if _op(f, "not") and present(f.args[0]):
        return Close("contra", (print_expr(f.args[0]), print_expr(f)))
    if present(_neg(f)):
        return Close("contra", (print_expr(f), print_expr(_neg(f))))
    return None


# ---------------------------------------------------------------- branch state


class _Branch:
    def __init__(self) -> None:
        self.formulas: set[Expr] = set()
        self.order: list[Expr] = []
        self.superseded: set[Expr] = set()
        self.alpha: list[tuple[Expr, Expansion]] = []
        self.delta: list[Expr] = []
        self.lits: list[Expr] = []  # atom-headed formulas awaiting normalization
        self.beta: list[tuple[Expr, Expansion]] = []
        self.lifts: list[Expr] = []
        self.gamma: list[tuple[Expr, Expansion]] = []
        self.tried: dict[Expr, set] = {}
        self.eqs: list[tuple[Expr, Expr, Expr, str]] = []  # (eq formula, lhs, rhs, dir)
        self.rewrite_jobs: list[tuple[Expr, Expr]] = []  # (eq formula, target)
        self.lifted: set[tuple[Expr, Expr]] = set()
        self.closure: Optional[Close] = None

    def copy(self) -> "_Branch":
        b = _Branch.__new__(_Branch)
        b.formulas = set(self.formulas)
        b.order = list(self.order)
        b.superseded = set(self.superseded)
        b.alpha = list(self.alpha)
        b.delta = list(self.delta)
        b.lits = list(self.lits)
        b.beta = list(self.beta)
        b.lifts = list(self.lifts)
        b.gamma = list(self.gamma)
        b.tried = {k: set(v) for k, v in self.tried.items()}
        b.eqs = list(self.eqs)
        b.rewrite_jobs = list(self.rewrite_jobs)
        b.lifted = set(self.lifted)
        b.closure = self.closure
        return b

    def add(self, f: Expr) -> None:
        if f in self.formulas or self.closure is not None:
            return
        self.formulas.add(f)
        self.order.append(f)
        c = closure_of(f, self.formulas.__contains__)
        if c is not None:
            self.closure = c
            return
        if _atom_headed(f):
            self.lits.append(f)
        else:
            self.classify(f)

    def classify(self, f: Expr) -> None:
        if _atom_headed(f) and ground_value(f) is True:
            return
        exp = expansion(f)
        if exp is None:
            if _atom_headed(f):
                self.lifts.append(f)
            return
        if exp.kind == "alpha":
            self.alpha.append((f, exp))
        elif exp.kind == "beta":
            self.beta.append((f, exp))
        elif exp.kind == "delta":
            self.delta.append(f)
        else:
            self.gamma.append((f, exp))
            self.tried[f] = set()
        if _atom_headed(f):
            self.lifts.append(f)

    def live(self, f: Expr) -> bool:
        return f not in self.superseded


# ---------------------------------------------------------------- prover


class Prover:
    def __init__(self, budget: Budget = Budget(), use_lemmas: bool = False):
        self.budget = budget
        self.use_lemmas = use_lemmas
        self.steps = 0
        self.deadline = 0.0
        self.witnesses: dict[Expr, str] = {}  # CHOOSE definition -> name
        self._terms: dict[Expr, tuple[Expr, ...]] = {}

    # -- budget
    def tick(self) -> None:
        self.steps += 1
        if self.steps > self.budget.steps:
            raise _OutOfBudget()
        if self.steps % 128 == 0 and time.monotonic() > self.deadline:
            raise _OutOfBudget()

    def witness_for(self, choose: Choose) -> Witness:
        name = self.witnesses.get(choose)
        if name is None:
            name = f"sk{len(self.witnesses) + 1}"
            self.witnesses[choose] = name
        return Witness(name)

    def prove(self, hypotheses: Iterable[Expr], goal: Expr, fingerprint: str = "") -> ProveResult:
        self.steps = 0
        self.deadline = time.monotonic() + self.budget.seconds
        old_limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old_limit, 20_000))
        root = _Branch()
        for h in hypotheses:
            root.add(h)
        root.add(_neg(goal))
        try:
            lemmas = relevant_lemmas(root.order) if self.use_lemmas else []
            node = self.run(root, lemmas)
        except _OutOfBudget:
            return ProveResult(None, "budget-exhausted", self.steps)
        except _Open:
            return ProveResult(None, "saturated-open-branch", self.steps)
        except RecursionError:
            return ProveResult(None, "budget-exhausted", self.steps)
        finally:
            sys.setrecursionlimit(old_limit)
        return ProveResult(ProofTrace(fingerprint, node), "", self.steps)

    def run(self, br: _Branch, lemmas: Iterable[str] = ()) -> Node:
        holder: list[Node] = [None]
        put: Callable[[Node], None] = lambda n: holder.__setitem__(0, n)

        def emit(rule: str, prems: list[Expr], args: list[str], added: list[Expr],
                 intros: tuple = ()) -> None:
            nonlocal put
            self.tick()
            node = RuleNode(rule, tuple(print_expr(p) for p in prems), tuple(args), intros,
                            [(tuple(print_expr(a) for a in added), None)])
            put(node)

            def put_next(n: Node, node=node) -> None:
                node.branches[0] = (node.branches[0][0], n)
            put = put_next
            for a in added:
                br.add(a)

        for name in lemmas:
            emit("lemma", [], [name], [cite_lemma(name)])

        while True:
            if br.closure is not None:
                put(br.closure)
                return holder[0]
            if br.alpha:
                f, exp = br.alpha.pop(0)
                if br.live(f):
                    emit(exp.rule, [f], [], exp.branches[0])
                continue
            if br.delta:
                f = br.delta.pop(0)
                self.apply_delta(f, emit)
                continue
            if br.rewrite_jobs:
                eqf, target = br.rewrite_jobs.pop(0)
                if br.live(target) and br.live(eqf) and target in br.formulas:
                    self.apply_rewrite(br, eqf, target, emit)
                continue
            if br.lits:
                f = br.lits.pop(0)
                if br.live(f):
                    self.normalize_literal(br, f, emit)
                continue
            if br.lifts:
                f = br.lifts.pop(0)
                if br.live(f):
                    done = self.try_single_lift(br, f, emit)
                    if not done and next(iter(liftable_subterms(f)), None) is not None:
                        br.beta.append((f, None))  # revisit as a splitting candidate
                continue
            choice = self.pick_beta(br)
            if choice is not None:
                f, rule, branches, args = choice
                self.tick()
                node = RuleNode(rule, () if rule == "choose" else (print_expr(f),), tuple(args), (), [])
                put(node)
                for added in branches:
                    child = br.copy()
                    for a in added:
                        child.add(a)
                    sub = self.run(child)
                    node.branches.append((tuple(print_expr(a) for a in added), sub))
                return holder[0]
            if self.apply_gamma(br, emit):
                continue
            raise _Open()

    # -- rule helpers

    def apply_delta(self, f: Expr, emit) -> None:
        if isinstance(f, Quant):
            q, body, rule = f, f.body, "exists"
        else:
            q, rule = f.args[0], "not-forall"
            body = _neg(q.body)
        choose = Choose(q.var, q.bound, body)
        w = self.witness_for(choose)
        added = [_inst(q.var, body, w)]
        if q.bound is not None:
            added.insert(0, _in(w, q.bound))
        emit(rule, [f], [], added, ((w.name, print_expr(choose)),))

    def normalize_literal(self, br: _Branch, f: Expr, emit) -> None:
        for eqf, lhs, rhs, d in br.eqs:
            if eqf == f or not br.live(eqf):
                continue
            if occurs_rewritable(f, lhs, frozenset(free_names(lhs))):
                self.apply_rewrite(br, eqf, f, emit)
                return
        br.classify(f)
        if _op(f, "eq") and not (is_formula_shaped(f.args[0]) and is_formula_shaped(f.args[1])):
            l, r = f.args
            if l == r:
                return
            if _order_key(l) > _order_key(r):
                lhs, rhs, d = l, r, "lr"
            else:
                lhs, rhs, d = r, l, "rl"
            br.eqs.append((f, lhs, rhs, d))
            names = frozenset(free_names(lhs))
            for g in br.order:
                if g is not f and g != f and br.live(g) and _atom_headed(g) and occurs_rewritable(g, lhs, names):
                    br.rewrite_jobs.append((f, g))

    def apply_rewrite(self, br: _Branch, eqf: Expr, target: Expr, emit) -> None:
        entry = next(e for e in br.eqs if e[0] == eqf)
        _, lhs, rhs, d = entry
        new = rewrite_term(target, lhs, rhs, frozenset(free_names(lhs)))
        if new == target:
            return
        br.superseded.add(target)
        emit("rewrite", [eqf, target], [d], [new])

    def try_single_lift(self, br: _Branch, f: Expr, emit) -> bool:
        for redex in liftable_subterms(f):
            if (f, redex) in br.lifted:
                continue
            rule, branches = lift_branches(f, redex)
            if len(branches) == 1:
                br.lifted.add((f, redex))
                emit(rule, [f], [print_expr(redex)], branches[0])
                return True
        return False

    def pick_beta(self, br: _Branch):
        best = None
        best_score = None
        keep = []
        for idx, (f, exp) in enumerate(br.beta):
            if not br.live(f):
                continue
            keep.append((f, exp))
            cands = []
            if exp is not None:
                cands.append((exp.rule, exp.branches,
                              [exp.term_text] if isinstance(exp, _GammaSplit) else []))
            else:
                for redex in liftable_subterms(f):
                    if (f, redex) not in br.lifted:
                        rule, branches = lift_branches(f, redex)
                        cands.append((rule, branches, [print_expr(redex)], redex))
                        break
            for cand in cands:
                rule, branches, args = cand[0], cand[1], cand[2]
                # satisfied already: some branch adds nothing new
                if any(all(a in br.formulas for a in b) for b in branches):
                    if exp is not None:
                        keep.pop()
                    continue
                closing = sum(1 for b in branches if any(
                    closure_of(a, br.formulas.__contains__) is not None for a in b))
                score = (len(branches) - closing, len(branches), idx)
                if best_score is None or score < best_score:
                    best_score, best = score, (f, rule, branches, args, cand[3] if len(cand) > 3 else None, exp)
        br.beta = keep
        if best is None:
            return None
        f, rule, branches, args, redex, exp = best
        if exp is not None:
            br.beta = [(g, e) for g, e in br.beta if not (g == f and e is exp)]
        else:
            br.lifted.add((f, redex))
        return f, rule, branches, args

    def apply_gamma(self, br: _Branch, emit) -> bool:
        live = [(f, e) for f, e in br.gamma if br.live(f)]
        if not live:
            return False
        terms: dict[Expr, None] = {}
        members: dict[Expr, set] = {}
        for g in br.order:
            if not br.live(g):
                continue
            cached = self._terms.get(g)
            if cached is None:
                found: dict[Expr, None] = {}
                ground_terms(g, found)
                cached = self._terms[g] = tuple(found)
            terms.update(dict.fromkeys(cached))
            if _op(g, "in"):
                members.setdefault(g.args[1], set()).add(g.args[0])
        pool = sorted((t for t in terms if not is_formula_shaped(t)), key=_order_key) or [Num(0)]
        best = None
        for f, exp in live:
            var, bound, body, negated = exp.quant
            tried = br.tried.setdefault(f, set())
            if bound is not None:
                ordered = sorted(members.get(bound, ()), key=_order_key) + pool
            else:
                ordered = pool
            for t in ordered:
                if t in tried:
                    continue
                rank = (0 if bound is not None and t in members.get(bound, ()) else 1,
                        len(tried), _order_key(t))
                if best is None or rank < best[0]:
                    best = (rank, f, exp, t)
                break
        if best is None:
            return False
        _, f, exp, t = best
        var, bound, body, negated = exp.quant
        br.tried[f].add(t)
        inst = _inst(var, body, t)
        if negated:
            inst = _neg(inst)
        if bound is None:
            emit(exp.rule, [f], [print_expr(t)], [inst])
            return True
        # bounded: split on membership
        mem = _in(t, bound)
        if mem in br.formulas:
            emit(exp.rule + "-member", [f, mem], [print_expr(t)], [inst])
            return True
        br.beta.append((f, _GammaSplit(exp.rule, [[_neg(mem)], [inst]], print_expr(t))))
        return True


class _GammaSplit(Expansion):
    def __init__(self, rule: str, branches, term_text: str):
        super().__init__("beta", rule, branches)
        self.term_text = term_text


def prove(hypotheses: Iterable[Expr], goal: Expr, budget: Budget = Budget(),
          fingerprint: str = "", use_lemmas: bool = False) -> ProveResult:
    return Prover(budget, use_lemmas).prove(list(hypotheses), goal, fingerprint)


def prove_obligation(ob, budget: Budget = Budget(), use_lemmas: bool = False) -> ProveResult:
    return prove([h for _, h in ob.hypotheses], ob.goal, budget, ob.id, use_lemmas)
