"""Linear integer arithmetic: injection of obligations and Cooper's elimination.

Validity is decided by negating the universally closed implication, removing
every variable with Cooper's method, and evaluating the resulting ground
formula. Terms outside the arithmetic fragment (operator applications,
primed variables, function applications, hashed atoms) become integer
variables keyed by their printed text.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd
from typing import Callable, Optional, Union

from stepproof.printer import print_expr
from stepproof.syntax import (
    Apply, Bool, Choose, Expr, FunApp, Hashed, Id, Num, OpApp, Prime, Quant, SetEnum,
    Witness, walk,
)

DEFAULT_BOUND = 10**6
MAX_NODES = 400_000


class ResourceFailure(Exception):
    pass


class NotApplicable(Exception):
    pass


def _lcm(a: int, b: int) -> int:
    return a * b // gcd(a, b)


# ---------------------------------------------------------------- formulas


@dataclass(frozen=True)
class LinearAtom:
    """``sum + const < 0`` (kind ``lt``) or ``modulus | sum + const`` (kind ``dvd``).

    ``le``/``eq`` atoms of the public API are normalized into these two.
    """

    kind: str
    coeffs: tuple[tuple[str, int], ...]
    const: int
    modulus: int = 1

    def coeff(self, x: str) -> int:
        for v, c in self.coeffs:
            if v == x:
                return c
        return 0


@dataclass(frozen=True)
class PNot:
    arg: "Formula"


@dataclass(frozen=True)
class PAnd:
    args: tuple["Formula", ...]


@dataclass(frozen=True)
class POr:
    args: tuple["Formula", ...]


@dataclass(frozen=True)
class PEx:
    var: str
    body: "Formula"


@dataclass(frozen=True)
class PAll:
    var: str
    body: "Formula"


Formula = Union[bool, LinearAtom, PNot, PAnd, POr, PEx, PAll]


class Lin:
    """Linear term ``sum c_i x_i + const`` with integer coefficients."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: Optional[dict[str, int]] = None, const: int = 0):
        self.coeffs = {k: v for k, v in (coeffs or {}).items() if v}
        self.const = const

    @staticmethod
    def var(x: str) -> "Lin":
        return Lin({x: 1})

    def __add__(self, o: "Lin") -> "Lin":
        d = dict(self.coeffs)
        for k, v in o.coeffs.items():
            d[k] = d.get(k, 0) + v
        return Lin(d, self.const + o.const)

    def scale(self, k: int) -> "Lin":
        return Lin({v: c * k for v, c in self.coeffs.items()}, self.const * k)

    def __sub__(self, o: "Lin") -> "Lin":
        return self + o.scale(-1)

    def is_const(self) -> bool:
        return not self.coeffs


def lt(t: Lin) -> Formula:
    """``t < 0``."""
    return _mk_atom("lt", t, 1)


def le(t: Lin) -> Formula:
    return lt(t + Lin(const=-1))


def eq(t: Lin) -> Formula:
    return conj([le(t), le(t.scale(-1))])


def dvd(m: int, t: Lin) -> Formula:
    return _mk_atom("dvd", t, m)


def _mk_atom(kind: str, t: Lin, m: int) -> Formula:
    coeffs = dict(t.coeffs)
    k = t.const
    if kind == "lt":
        g = 0
        for c in coeffs.values():
            g = gcd(g, abs(c))
        if g == 0:
            return k < 0
        if g > 1:
            coeffs = {v: c // g for v, c in coeffs.items()}
            k = k // g  # y < -k/g  iff  y + floor(k/g) < 0
        return LinearAtom("lt", tuple(sorted(coeffs.items())), k)
    if m <= 0:
        raise ValueError("modulus must be positive")
    coeffs = {v: c % m for v, c in coeffs.items()}
    coeffs = {v: c for v, c in coeffs.items() if c}
    k %= m
    if m == 1:
        return True
    if not coeffs:
        return k == 0
    g = m
    for c in coeffs.values():
        g = gcd(g, c)
    if k % g:
        return False
    if g > 1:
        m //= g
        coeffs = {v: c // g for v, c in coeffs.items()}
        k //= g
        if m == 1:
            return True
    return LinearAtom("dvd", tuple(sorted(coeffs.items())), k, m)


def conj(fs) -> Formula:
    out: list = []
    seen = set()
    for f in fs:
        if f is True:
            continue
        if f is False:
            return False
        for g in (f.args if isinstance(f, PAnd) else (f,)):
            if g not in seen:
                seen.add(g)
                out.append(g)
    if not out:
        return True
    return out[0] if len(out) == 1 else PAnd(tuple(out))


def disj(fs) -> Formula:
    out: list = []
    seen = set()
    for f in fs:
        if f is False:
            continue
        if f is True:
            return True
        for g in (f.args if isinstance(f, POr) else (f,)):
            if g not in seen:
                seen.add(g)
                out.append(g)
    if not out:
        return False
    return out[0] if len(out) == 1 else POr(tuple(out))


def neg(f: Formula) -> Formula:
    if isinstance(f, bool):
        return not f
    if isinstance(f, PNot):
        return f.arg
    return PNot(f)


def _lin_of(a: LinearAtom) -> Lin:
    return Lin(dict(a.coeffs), a.const)


def nnf(f: Formula, positive: bool = True) -> Formula:
    """Negation normal form over ``lt``, ``dvd`` and negated ``dvd`` atoms; quantifier-free input."""
    if isinstance(f, bool):
        return f if positive else not f
    if isinstance(f, LinearAtom):
        if positive:
            return f
        if f.kind == "lt":  # not (t < 0)  iff  -t - 1 < 0
            return lt(_lin_of(f).scale(-1) + Lin(const=-1))
        return PNot(f)
    if isinstance(f, PNot):
        return nnf(f.arg, not positive)
    if isinstance(f, PAnd):
        parts = [nnf(g, positive) for g in f.args]
        return conj(parts) if positive else disj(parts)
    if isinstance(f, POr):
        parts = [nnf(g, positive) for g in f.args]
        return disj(parts) if positive else conj(parts)
    raise TypeError("quantifier in nnf input")


# ---------------------------------------------------------------- Cooper


class _Cooper:
    def __init__(self, bound: int):
        self.bound = bound
        self.fresh = 0

    def check(self, n: int) -> int:
        if abs(n) > self.bound:
            raise ResourceFailure(f"coefficient {n} exceeds the bound {self.bound}")
        return n

    def eliminate(self, f: Formula) -> Formula:
        if isinstance(f, (bool, LinearAtom)):
            return f
        if isinstance(f, PNot):
            return neg(self.eliminate(f.arg))
        if isinstance(f, PAnd):
            return conj(self.eliminate(g) for g in f.args)
        if isinstance(f, POr):
            return disj(self.eliminate(g) for g in f.args)
        if isinstance(f, PEx):
            return self.exists(f.var, nnf(self.eliminate(f.body)))
        if isinstance(f, PAll):
            return neg(self.exists(f.var, nnf(neg(self.eliminate(f.body)))))
        raise TypeError(f"not a formula: {f!r}")

    def exists(self, x: str, f: Formula) -> Formula:
        atoms = _atoms(f)
        coeffs = [a.coeff(x) for a in atoms if a.coeff(x)]
        if not coeffs:
            return f
        big_l = 1
        for c in coeffs:
            big_l = self.check(_lcm(big_l, abs(c)))
        x1 = x  # after scaling, x stands for L*x

        def scale(a: LinearAtom) -> Formula:
            c = a.coeff(x)
            if not c:
                return a
            k = big_l // abs(c)
            t = _lin_of(a)
            rest = Lin({v: w * k for v, w in t.coeffs.items() if v != x}, t.const * k)
            rest.coeffs[x1] = 1 if c > 0 else -1
            if a.kind == "lt":
                return LinearAtom("lt", tuple(sorted(rest.coeffs.items())), rest.const)
            return LinearAtom("dvd", tuple(sorted(rest.coeffs.items())), rest.const,
                              self.check(a.modulus * k))

        g = _map_atoms(f, scale)
        if big_l > 1:
            g = conj([g, dvd(big_l, Lin.var(x1))])
        delta = 1
        lower: list[Lin] = []
        upper: list[Lin] = []
        for a in _atoms(g):
            c = a.coeff(x1)
            if not c:
                continue
            if a.kind == "dvd":
                delta = self.check(_lcm(delta, a.modulus))
                continue
            rest = _lin_of(a) - Lin({x1: c})
            if c < 0:
                lower.append(rest)  # -x + rest < 0  iff  x > rest
            else:
                upper.append(rest.scale(-1))  # x + rest < 0  iff  x < -rest
        use_lower = len(lower) <= len(upper)
        pieces: list[Formula] = []
        inf = _map_atoms(g, lambda a: _at_infinity(a, x1, use_lower))
        for j in range(1, delta + 1):
            shift = j if use_lower else -j
            pieces.append(_subst(inf, x1, Lin(const=shift)))
            self._size(pieces[-1])
        for b in _dedupe(lower if use_lower else upper):
            for j in range(1, delta + 1):
                shift = j if use_lower else -j
                pieces.append(_subst(g, x1, b + Lin(const=shift)))
                self._size(pieces[-1])
        return disj(pieces)

    def _size(self, f: Formula) -> None:
        # cheap guard against blow-up; counts atoms in the piece
        if len(_atoms(f)) > MAX_NODES:
            raise ResourceFailure("formula too large")


def _dedupe(ts: list[Lin]) -> list[Lin]:
    seen, out = set(), []
    for t in ts:
        key = (tuple(sorted(t.coeffs.items())), t.const)
        if key not in seen:
            seen.add(key)
            out.append(t)
    return out


def _at_infinity(a: LinearAtom, x: str, minus: bool) -> Formula:
    c = a.coeff(x)
    if not c or a.kind == "dvd":
        return a
    # minus infinity: x + t < 0 true, -x + t < 0 false; plus infinity is the mirror
    return (c > 0) == minus


def _atoms(f: Formula) -> list[LinearAtom]:
    out: list[LinearAtom] = []
    stack = [f]
    while stack:
        g = stack.pop()
        if isinstance(g, LinearAtom):
            out.append(g)
        elif isinstance(g, PNot):
            stack.append(g.arg)
        elif isinstance(g, (PAnd, POr)):
            stack.extend(g.args)
        elif isinstance(g, (PEx, PAll)):
            stack.append(g.body)
    return out


def _map_atoms(f: Formula, fn) -> Formula:
    if isinstance(f, bool):
        return f
    if isinstance(f, LinearAtom):
        return fn(f)
    if isinstance(f, PNot):
        return neg(_map_atoms(f.arg, fn))
    if isinstance(f, PAnd):
        return conj(_map_atoms(g, fn) for g in f.args)
    if isinstance(f, POr):
        return disj(_map_atoms(g, fn) for g in f.args)
    raise TypeError("quantifier under atom map")


def _subst(f: Formula, x: str, t: Lin) -> Formula:
    def one(a: LinearAtom) -> Formula:
        c = a.coeff(x)
        if not c:
            return a
        base = _lin_of(a) - Lin({x: c}) + t.scale(c)
        return _mk_atom(a.kind, base, a.modulus)
    return _map_atoms(f, one)


def cooper_eliminate(f: Formula, bound: int = DEFAULT_BOUND) -> Formula:
    """Quantifier-free formula equivalent over the integers to ``f``."""
    return _Cooper(bound).eliminate(f)


def evaluate(f: Formula, env: Optional[dict[str, int]] = None) -> bool:
    env = env or {}
    if isinstance(f, bool):
        return f
    if isinstance(f, LinearAtom):
        v = f.const + sum(c * env[x] for x, c in f.coeffs)
        return v < 0 if f.kind == "lt" else v % f.modulus == 0
    if isinstance(f, PNot):
        return not evaluate(f.arg, env)
    if isinstance(f, PAnd):
        return all(evaluate(g, env) for g in f.args)
    if isinstance(f, POr):
        return any(evaluate(g, env) for g in f.args)
    raise ValueError("quantified formula; eliminate first")


def free_vars(f: Formula) -> set[str]:
    if isinstance(f, bool):
        return set()
    if isinstance(f, LinearAtom):
        return {x for x, _ in f.coeffs}
    if isinstance(f, PNot):
        return free_vars(f.arg)
    if isinstance(f, (PAnd, POr)):
        out: set[str] = set()
        for g in f.args:
            out |= free_vars(g)
        return out
    return free_vars(f.body) - {f.var}


def format_formula(f: Formula) -> str:
    if f is True:
        return "TRUE"
    if f is False:
        return "FALSE"
    if isinstance(f, LinearAtom):
        terms = " + ".join(f"{c}*{x}" for x, c in f.coeffs) or "0"
        if f.kind == "lt":
            return f"{terms} + {f.const} < 0"
        return f"{f.modulus} | {terms} + {f.const}"
    if isinstance(f, PNot):
        return f"~({format_formula(f.arg)})"
    if isinstance(f, PAnd):
        return "(" + " /\\ ".join(format_formula(g) for g in f.args) + ")"
    if isinstance(f, POr):
        return "(" + " \\/ ".join(format_formula(g) for g in f.args) + ")"
    q = "\\E" if isinstance(f, PEx) else "\\A"
    return f"({q} {f.var} : {format_formula(f.body)})"


# ---------------------------------------------------------------- injection


@dataclass
class InjectionMap:
    variables: dict[str, str] = field(default_factory=dict)  # printed foreign term -> variable
    side_conditions: list[Formula] = field(default_factory=list)
    counter: int = 0

    def variable_for(self, e: Expr) -> str:
        key = print_expr(e)
        if key not in self.variables:
            self.counter += 1
            self.variables[key] = f"v{self.counter}"
        return self.variables[key]

    def fresh(self, stem: str) -> str:
        self.counter += 1
        return f"{stem}{self.counter}"


_FOREIGN = (Id, Prime, Apply, FunApp, Witness, Choose)


class _Injector:
    def __init__(self, imap: InjectionMap):
        self.imap = imap
        self.bound: dict[str, str] = {}
        # quotient/remainder definitions made under a binder stay under it
        self.scoped: Optional[list[tuple[str, str, Formula]]] = None

    def term(self, e: Expr) -> Lin:
        if isinstance(e, Num):
            return Lin(const=e.value)
        if isinstance(e, OpApp):
            a = e.args
            if e.op == "plus":
                return self.term(a[0]) + self.term(a[1])
            if e.op == "minus":
                return self.term(a[0]) - self.term(a[1])
            if e.op == "neg":
                return self.term(a[0]).scale(-1)
            if e.op == "times":
                l, r = self.term(a[0]), self.term(a[1])
                if l.is_const():
                    return r.scale(l.const)
                if r.is_const():
                    return l.scale(r.const)
                raise NotApplicable(f"nonlinear term {print_expr(e)}")
            if e.op in ("div", "mod"):
                d = self.term(a[1])
                if not d.is_const() or d.const <= 0:
                    raise NotApplicable(f"division by a non-literal in {print_expr(e)}")
                n = self.term(a[0])
                q, r = self.imap.fresh("q"), self.imap.fresh("r")
                k = d.const
                # n = k*q + r, 0 <= r < k
                cond = conj([eq(n - Lin({q: k}) - Lin.var(r)), le(Lin.var(r).scale(-1)),
                             lt(Lin.var(r) - Lin(const=k))])
                if self.scoped is None:
                    self.imap.side_conditions.append(cond)
                else:
                    self.scoped.append((q, r, cond))
                return Lin.var(q) if e.op == "div" else Lin.var(r)
            raise NotApplicable(f"{e.op} is not arithmetic")
        if isinstance(e, Id) and e.name in self.bound:
            return Lin.var(self.bound[e.name])
        if isinstance(e, Id) and e.name in ("Nat", "Int", "Real", "BOOLEAN"):
            raise NotApplicable("set constant used as a number")
        if isinstance(e, Hashed) and e.role == "term":
            return Lin.var(self.imap.variable_for(e))
        if isinstance(e, _FOREIGN):
            names = {x.name for x in walk(e) if isinstance(x, Id)}
            if names & set(self.bound):
                raise NotApplicable(f"foreign term {print_expr(e)} depends on a bound variable")
            return Lin.var(self.imap.variable_for(e))
        raise NotApplicable(f"{print_expr(e)} is not an integer term")

    def formula(self, e: Expr) -> Formula:
        if isinstance(e, Bool):
            return e.value
        if isinstance(e, Quant):
            return self.quant(e)
        if not isinstance(e, OpApp):
            raise NotApplicable(f"{print_expr(e)} is not arithmetic")
        a = e.args
        op = e.op
        if op == "and":
            return conj([self.formula(a[0]), self.formula(a[1])])
        if op == "or":
            return disj([self.formula(a[0]), self.formula(a[1])])
        if op == "not":
            return neg(self.formula(a[0]))
        if op == "implies":
            return disj([neg(self.formula(a[0])), self.formula(a[1])])
        if op == "equiv":
            l, r = self.formula(a[0]), self.formula(a[1])
            return disj([conj([l, r]), conj([neg(l), neg(r)])])
        if op in ("eq", "neq", "lt", "le", "gt", "ge"):
            l, r = self.term(a[0]), self.term(a[1])
            f = {"eq": lambda: eq(l - r), "neq": lambda: neg(eq(l - r)), "lt": lambda: lt(l - r),
                 "le": lambda: le(l - r), "gt": lambda: lt(r - l), "ge": lambda: le(r - l)}[op]()
            return f
        if op in ("in", "notin"):
            f = self.member(a[0], a[1])
            return f if op == "in" else neg(f)
        raise NotApplicable(f"{op} is not arithmetic")

    def member(self, t: Expr, s: Expr) -> Formula:
        if isinstance(s, Id) and s.name == "Nat":
            return le(self.term(t).scale(-1))
        if isinstance(s, Id) and s.name == "Int":
            self.term(t)
            return True
        if isinstance(s, OpApp) and s.op == "range":
            v = self.term(t)
            return conj([le(self.term(s.args[0]) - v), le(v - self.term(s.args[1]))])
        if isinstance(s, SetEnum) and s.elems:
            v = self.term(t)
            return disj([eq(v - self.term(x)) for x in s.elems])
        raise NotApplicable(f"membership in {print_expr(s)} is not arithmetic")

    def _local(self, build: Callable[[], Formula]) -> Formula:
        """``build()`` with its quotient/remainder definitions bound around it.

        The fresh quotient and remainder are unique, so binding them
        existentially is equivalent to binding them universally.
        """
        saved, self.scoped = self.scoped, []
        try:
            f = build()
        finally:
            mine, self.scoped = self.scoped, saved
        if not mine:
            return f
        body = conj([c for _, _, c in mine] + [f])
        for q, r, _ in reversed(mine):
            body = PEx(q, PEx(r, body))
        return body

    def quant(self, q: Quant) -> Formula:
        name = self.imap.fresh("b")
        outer = self.bound.get(q.var)
        guard: Formula = True
        self.bound[q.var] = name
        try:
            if q.bound is not None:
                guard = self._local(lambda: self.member(Id(q.var), q.bound))
            body = self._local(lambda: self.formula(q.body))
        finally:
            if outer is None:
                del self.bound[q.var]
            else:
                self.bound[q.var] = outer
        if q.kind == "forall":
            return PAll(name, disj([neg(guard), body]))
        return PEx(name, conj([guard, body]))


def inject(e: Expr, imap: Optional[InjectionMap] = None) -> tuple[Formula, InjectionMap]:
    """Arithmetic image of a formula; raises :class:`NotApplicable` outside the fragment."""
    imap = imap or InjectionMap()
    return _Injector(imap).formula(e), imap


def _conjuncts(e: Expr) -> list[Expr]:
    if isinstance(e, OpApp) and e.op == "and":
        return _conjuncts(e.args[0]) + _conjuncts(e.args[1])
    return [e]


@dataclass
class Decision:
    verdict: str  # valid | invalid | not-applicable | resource-failure
    detail: str = ""
    dropped: list[str] = field(default_factory=list)
    sentence: str = ""
    eliminated: str = ""


def decide_formulas(hypotheses: list[Expr], goal: Expr, bound: int = DEFAULT_BOUND) -> Decision:
    imap = InjectionMap()
    try:
        g, _ = inject(goal, imap)
    except NotApplicable as err:
        return Decision("not-applicable", str(err))
    hyps: list[Formula] = []
    dropped: list[str] = []
    for h in hypotheses:
        for part in _conjuncts(h):
            side_before = len(imap.side_conditions)
            snapshot = dict(imap.variables), imap.counter
            try:
                f, _ = inject(part, imap)
                hyps.append(f)
            except NotApplicable:
                del imap.side_conditions[side_before:]
                imap.variables, imap.counter = snapshot[0], snapshot[1]
                dropped.append(print_expr(part))
    body = disj([neg(conj(hyps + imap.side_conditions)), g])
    sentence: Formula = body
    for v in sorted(free_vars(body), reverse=True):
        sentence = PAll(v, sentence)
    try:
        counter = cooper_eliminate(PNot(sentence) if not isinstance(sentence, bool) else (not sentence), bound)
    except ResourceFailure as err:
        return Decision("resource-failure", str(err), dropped, format_formula(sentence))
    sat = evaluate(counter)
    return Decision("invalid" if sat else "valid", "", dropped, format_formula(sentence),
                    format_formula(counter))


def decide(ob, bound: int = DEFAULT_BOUND) -> Decision:
    return decide_formulas([h for _, h in ob.hypotheses], ob.goal, bound)
