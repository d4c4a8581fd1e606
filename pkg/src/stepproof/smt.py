"""SMT-LIB 2 (AUFLIRA) translation and an external solver driver.

Sorts are assigned conservatively: a symbol is numeric or boolean only when a
hypothesis bounds it (``x \\in Nat``, ``x \\in Real``, ``x \\in BOOLEAN``).
Everything else lives in one uninterpreted sort ``U``. Hypotheses outside the
translatable fragment are left out and listed; a goal outside it makes the
backend not applicable.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

from stepproof.printer import print_expr
from stepproof.syntax import (
    Apply, Bool, Choose, Dec, Expr, FunApp, Hashed, Id, Num, OpApp, Prime, Quant, Str,
    Witness, walk,
)

SOLVER_ENV = "STEPPROOF_SMT_SOLVER"
DEFAULT_COMMAND = "z3 -smt2 {file}"

INT, REAL, BOOL, OPAQUE = "Int", "Real", "Bool", "U"
_SET_SORT = {"Nat": INT, "Int": INT, "Real": REAL, "BOOLEAN": BOOL}


class Untranslatable(Exception):
    pass


@dataclass
class SortAssignment:
    sorts: dict[str, str] = field(default_factory=dict)  # printed term -> sort
    origins: dict[str, str] = field(default_factory=dict)
    conflicts: set[str] = field(default_factory=set)

    def sort_of(self, key: str) -> str:
        if key in self.conflicts:
            raise Untranslatable(f"conflicting sorts for {key}")
        return self.sorts.get(key, OPAQUE)


def _conjuncts(e: Expr) -> list[Expr]:
    if isinstance(e, OpApp) and e.op == "and":
        return _conjuncts(e.args[0]) + _conjuncts(e.args[1])
    return [e]


def _antecedents(goal: Expr) -> list[Expr]:
    """Left sides along the right spine of nested implications."""
    out = []
    while isinstance(goal, OpApp) and goal.op == "implies":
        out.append(goal.args[0])
        goal = goal.args[1]
    return out


_ATOMIC = (Id, Prime, Apply, FunApp, Witness, Choose)


def detect_sorts(ob) -> SortAssignment:
    """Sorts forced by membership hypotheses; all other symbols stay opaque."""
    sa = SortAssignment()
    assumed = [h for _, h in ob.hypotheses] + _antecedents(ob.goal)
    for h in assumed:
        for c in _conjuncts(h):
            if not (isinstance(c, OpApp) and c.op == "in"):
                continue
            t, s = c.args
            if not isinstance(t, _ATOMIC + (Hashed,)) or not isinstance(s, Id):
                continue
            sort = _SET_SORT.get(s.name)
            if sort is None:
                continue
            key = print_expr(t)
            old = sa.sorts.get(key)
            if old is not None and old != sort:
                sa.conflicts.add(key)
            sa.sorts[key] = sort
            sa.origins[key] = "bound-annotation"
    return sa


@dataclass
class SmtScript:
    declarations: list[str]
    assertions: list[str]
    comments: list[str]
    logic: str = "AUFLIRA"

    def text(self) -> str:
        lines = [f"(set-logic {self.logic})"]
        lines += [f"; {c}" for c in self.comments]
        lines += self.declarations
        lines += [f"(assert {a})" for a in self.assertions]
        lines.append("(check-sat)")
        return "\n".join(lines) + "\n"


@dataclass
class Translation:
    script: Optional[SmtScript]
    omitted: list[str]
    reason: str = ""

    @property
    def applicable(self) -> bool:
        return self.script is not None


def _num(v) -> str:
    if isinstance(v, Fraction):
        n, d = v.numerator, v.denominator
        body = f"(/ {abs(n)}.0 {d}.0)" if d != 1 else f"{abs(n)}.0"
        return f"(- {body})" if n < 0 else body
    return f"(- {-v})" if v < 0 else str(v)


class _Translator:
    def __init__(self, sorts: SortAssignment):
        self.sa = sorts
        self.symbols: dict[tuple[str, str], str] = {}  # (namespace, text) -> name
        self.decls: list[str] = []
        self.comments: list[str] = []
        self.strings: dict[str, str] = {}
        self.bound: list[dict[str, tuple[str, str]]] = []
        self.counter = 0

    # symbols
    def _symbol(self, ns: str, text: str, sort: str) -> str:
        key = (ns, text)
        if key not in self.symbols:
            self.counter += 1
            name = f"s{self.counter}"
            self.symbols[key] = name
            self.decls.append(f"(declare-fun {name} () {sort})")
            self.comments.append(f"{name} : {sort} = {text}".replace("\n", " "))
        return self.symbols[key]

    def _lookup_bound(self, name: str):
        for scope in reversed(self.bound):
            if name in scope:
                return scope[name]
        return None

    # terms: return (smt text, sort)
    def term(self, e: Expr) -> tuple[str, str]:
        if isinstance(e, Num):
            return _num(e.value), INT
        if isinstance(e, Dec):
            return _num(Fraction(e.text)), REAL
        if isinstance(e, Str):
            if e.value not in self.strings:
                self.strings[e.value] = self._symbol("str", repr(e.value), OPAQUE)
            return self.strings[e.value], OPAQUE
        if isinstance(e, Bool):
            return ("true" if e.value else "false"), BOOL
        if isinstance(e, Id):
            b = self._lookup_bound(e.name)
            if b is not None:
                return b
        if isinstance(e, OpApp) and e.op in ("plus", "minus", "times", "neg", "div", "mod"):
            return self.arith(e)
        if isinstance(e, _ATOMIC + (Hashed,)):
            if self._mentions_bound(e) and not isinstance(e, Id):
                raise Untranslatable(f"{print_expr(e)} depends on a bound variable")
            if isinstance(e, Id) and e.name in _SET_SORT:
                raise Untranslatable("set constant in term position")
            text = print_expr(e)
            sort = self.sa.sort_of(text)
            return self._symbol("term", text, sort), sort
        raise Untranslatable(f"{print_expr(e)} is outside the translated fragment")

    def _mentions_bound(self, e: Expr) -> bool:
        names = {x.name for x in walk(e) if isinstance(x, Id)}
        return any(self._lookup_bound(n) is not None for n in names)

    def numeric(self, e: Expr) -> tuple[str, str]:
        t, s = self.term(e)
        if s not in (INT, REAL):
            raise Untranslatable(f"{print_expr(e)} is not known to be numeric")
        return t, s

    @staticmethod
    def lift(pairs):
        if any(s == REAL for _, s in pairs):
            return [t if s == REAL else f"(to_real {t})" for t, s in pairs], REAL
        return [t for t, _ in pairs], INT

    def arith(self, e: OpApp) -> tuple[str, str]:
        if e.op == "neg":
            t, s = self.numeric(e.args[0])
            return f"(- {t})", s
        pairs = [self.numeric(a) for a in e.args]
        if e.op in ("div", "mod"):
            if pairs[0][1] != INT or not isinstance(e.args[1], Num) or e.args[1].value <= 0:
                raise Untranslatable("division needs an integer and a positive literal divisor")
            return f"({e.op} {pairs[0][0]} {pairs[1][0]})", INT
        if e.op == "times" and not any(isinstance(a, (Num, Dec)) for a in e.args):
            raise Untranslatable(f"nonlinear product {print_expr(e)}")
        ts, s = self.lift(pairs)
        op = {"plus": "+", "minus": "-", "times": "*"}[e.op]
        return f"({op} {ts[0]} {ts[1]})", s

    # formulas
    def formula(self, e: Expr) -> str:
        if isinstance(e, Bool):
            return "true" if e.value else "false"
        if isinstance(e, Quant):
            return self.quant(e)
        if isinstance(e, OpApp):
            a = e.args
            if e.op in ("and", "or"):
                return f"({e.op} {self.formula(a[0])} {self.formula(a[1])})"
            if e.op == "not":
                return f"(not {self.formula(a[0])})"
            if e.op == "implies":
                return f"(=> {self.formula(a[0])} {self.formula(a[1])})"
            if e.op == "equiv":
                return f"(= {self.formula(a[0])} {self.formula(a[1])})"
            if e.op in ("eq", "neq"):
                f = self.equality(a[0], a[1])
                return f if e.op == "eq" else f"(not {f})"
            if e.op in ("lt", "le", "gt", "ge"):
                ts, _ = self.lift([self.numeric(a[0]), self.numeric(a[1])])
                op = {"lt": "<", "le": "<=", "gt": ">", "ge": ">="}[e.op]
                return f"({op} {ts[0]} {ts[1]})"
            if e.op in ("in", "notin"):
                f = self.member(a[0], a[1])
                return f if e.op == "in" else f"(not {f})"
            raise Untranslatable(f"{e.op} is outside the translated fragment")
        if isinstance(e, _ATOMIC + (Hashed,)):
            if isinstance(e, Id) and self._lookup_bound(e.name) is not None:
                t, s = self._lookup_bound(e.name)
                if s != BOOL:
                    raise Untranslatable(f"bound {e.name} used as a formula")
                return t
            text = print_expr(e)
            if self.sa.sorts.get(text) == BOOL:
                return self.term(e)[0]
            if self._mentions_bound(e):
                raise Untranslatable(f"{text} depends on a bound variable")
            return self._symbol("prop", text, BOOL)
        raise Untranslatable(f"{print_expr(e)} is outside the translated fragment")

    def equality(self, l: Expr, r: Expr) -> str:
        if isinstance(l, Bool) or isinstance(r, Bool):
            other, lit = (r, l) if isinstance(l, Bool) else (l, r)
            t, s = self.term(other)
            if s != BOOL:
                raise Untranslatable("boolean literal compared with a non-boolean")
            return t if lit.value else f"(not {t})"
        lt_, ls = self.term(l)
        rt, rs = self.term(r)
        if ls == rs:
            return f"(= {lt_} {rt})"
        if {ls, rs} == {INT, REAL}:
            ts, _ = self.lift([(lt_, ls), (rt, rs)])
            return f"(= {ts[0]} {ts[1]})"
        raise Untranslatable(f"sort mismatch between {print_expr(l)} and {print_expr(r)}")

    def member(self, t: Expr, s: Expr) -> str:
        if isinstance(s, Id) and s.name in _SET_SORT:
            want = _SET_SORT[s.name]
            v, vs = self.term(t)
            if want == BOOL:
                if vs != BOOL:
                    raise Untranslatable("membership in BOOLEAN of a non-boolean symbol")
                return "true"
            if vs == INT:
                return f"(>= {v} 0)" if s.name == "Nat" else "true"
            if vs == REAL:
                if s.name == "Real":
                    return "true"
                cond = f"(is_int {v})"
                return f"(and {cond} (>= {v} 0.0))" if s.name == "Nat" else cond
            raise Untranslatable(f"membership of opaque {print_expr(t)} in {s.name}")
        if isinstance(s, OpApp) and s.op == "range":
            v, vs = self.numeric(t)
            ts, _ = self.lift([(v, vs), self.numeric(s.args[0]), self.numeric(s.args[1])])
            return f"(and (<= {ts[1]} {ts[0]}) (<= {ts[0]} {ts[2]}))"
        raise Untranslatable(f"membership in {print_expr(s)} is outside the translated fragment")

    def quant(self, q: Quant) -> str:
        if q.bound is None:
            sort = OPAQUE
        elif isinstance(q.bound, Id) and q.bound.name in _SET_SORT:
            sort = _SET_SORT[q.bound.name]
        elif isinstance(q.bound, OpApp) and q.bound.op == "range":
            sort = INT
        else:
            raise Untranslatable(f"quantifier bound {print_expr(q.bound)} is outside the fragment")
        self.counter += 1
        name = f"b{self.counter}"
        # the guard is translated with the variable in scope
        self.bound.append({q.var: (name, sort)})
        try:
            guard = self.member(Id(q.var), q.bound) if q.bound is not None else "true"
            body = self.formula(q.body)
        finally:
            self.bound.pop()
        if q.kind == "forall":
            return f"(forall (({name} {sort})) (=> {guard} {body}))"
        return f"(exists (({name} {sort})) (and {guard} {body}))"


def translate(ob, sorts: Optional[SortAssignment] = None) -> Translation:
    sorts = sorts or detect_sorts(ob)
    tr = _Translator(sorts)
    try:
        goal = tr.formula(ob.goal)
    except Untranslatable as err:
        return Translation(None, [], str(err))
    asserted: list[str] = []
    omitted: list[str] = []
    for _, h in ob.hypotheses:
        for c in _conjuncts(h):
            mark = (len(tr.decls), len(tr.comments), dict(tr.symbols), dict(tr.strings), tr.counter)
            try:
                asserted.append(tr.formula(c))
            except Untranslatable:
                # roll back declarations made by the abandoned hypothesis
                del tr.decls[mark[0]:]
                del tr.comments[mark[1]:]
                tr.symbols, tr.strings, tr.counter = mark[2], mark[3], mark[4]
                omitted.append(print_expr(c))
    decls = ["(declare-sort U 0)"] + tr.decls
    if len(tr.strings) > 1:
        asserted.insert(0, "(distinct " + " ".join(tr.strings.values()) + ")")
    asserted.append(f"(not {goal})")
    return Translation(SmtScript(decls, asserted, tr.comments), omitted)


@dataclass
class SolverResult:
    status: str  # valid | unknown | invalid-hint | solver-error
    output: str = ""


def solver_argv(template: str, path: Path) -> list[str]:
    argv = [a.replace("{file}", str(path)) for a in shlex.split(template)]
    override = os.environ.get(SOLVER_ENV)
    if override:
        argv[0] = override
    return argv


def run_solver(script: SmtScript, template: str = DEFAULT_COMMAND, timeout: float = 10.0,
               path: Optional[Path] = None) -> SolverResult:
    if timeout <= 0:
        return SolverResult("unknown", "timeout")
    scratch = path is None
    if scratch:
        fd, name = tempfile.mkstemp(suffix=".smt2")
        os.close(fd)
        path = Path(name)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(script.text())
    try:
        proc = subprocess.run(solver_argv(template, path), capture_output=True, text=True,
                              timeout=timeout)
    except FileNotFoundError as err:
        return SolverResult("solver-error", f"solver binary not found: {err.filename}")
    except subprocess.TimeoutExpired:
        return SolverResult("unknown", "timeout")
    finally:
        if scratch:
            path.unlink(missing_ok=True)
    out = proc.stdout + proc.stderr
    first = next((line.strip() for line in proc.stdout.splitlines() if line.strip()), "")
    if proc.returncode != 0 and first not in ("sat", "unsat", "unknown"):
        return SolverResult("solver-error", out)
    status = {"unsat": "valid", "sat": "invalid-hint", "unknown": "unknown"}.get(first)
    if status is None:
        return SolverResult("solver-error", out)
    return SolverResult(status, out)


def script_path(build_dir: Path, fingerprint: str) -> Path:
    return build_dir / "smt" / f"{fingerprint}.smt2"
