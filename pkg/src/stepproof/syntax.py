"""Abstract syntax for specifications, expressions and hierarchical proofs.

All nodes are frozen dataclasses: structural equality, hashable, safe to
share between threads and processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union


class Expr:
    """Base class of expression nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Num(Expr):
    value: int


@dataclass(frozen=True)
class Dec(Expr):
    """Decimal literal, kept as its source text (e.g. ``1.0``)."""

    text: str


@dataclass(frozen=True)
class Str(Expr):
    value: str


@dataclass(frozen=True)
class Bool(Expr):
    value: bool


@dataclass(frozen=True)
class Id(Expr):
    """Reference to a constant, variable, bound name or 0-ary operator."""

    name: str


@dataclass(frozen=True)
class Apply(Expr):
    """Application of a user-defined operator.

    ``primed`` marks the primed version of a hidden state-level operator:
    ``O'(a)`` denotes ``O(b)'`` where ``a`` is the primed form of ``b``.
    """

    op: str
    args: tuple[Expr, ...]
    primed: bool = False


@dataclass(frozen=True)
class OpApp(Expr):
    """Application of a built-in operator (see ``BUILTIN_ARITY``)."""

    op: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class Quant(Expr):
    kind: str  # "forall" | "exists"
    var: str
    bound: Optional[Expr]
    body: Expr


@dataclass(frozen=True)
class Choose(Expr):
    var: str
    bound: Optional[Expr]
    body: Expr


@dataclass(frozen=True)
class If(Expr):
    cond: Expr
    then: Expr
    other: Expr


@dataclass(frozen=True)
class Case(Expr):
    arms: tuple[tuple[Expr, Expr], ...]
    other: Optional[Expr] = None


@dataclass(frozen=True)
class SetEnum(Expr):
    elems: tuple[Expr, ...]


@dataclass(frozen=True)
class SetFilter(Expr):
    var: str
    bound: Expr
    pred: Expr


@dataclass(frozen=True)
class FunLit(Expr):
    var: str
    domain: Expr
    body: Expr


@dataclass(frozen=True)
class FunApp(Expr):
    fn: Expr
    arg: Expr


@dataclass(frozen=True)
class Tuple(Expr):
    elems: tuple[Expr, ...]


@dataclass(frozen=True)
class Prime(Expr):
    expr: Expr


@dataclass(frozen=True)
class Label(Expr):
    name: str
    expr: Expr


@dataclass(frozen=True)
class SubRef(Expr):
    """Subexpression reference such as ``O(3, 4)!2!1`` or ``O(3, 4)!l``."""

    target: str
    args: tuple[Expr, ...]
    path: tuple[Union[int, str], ...]


@dataclass(frozen=True)
class Always(Expr):
    """``[]e``; only admitted in theorem statements."""

    expr: Expr


@dataclass(frozen=True)
class ActionBox(Expr):
    """``[A]_v``; only admitted directly under ``Always``."""

    action: Expr
    sub: Expr


@dataclass(frozen=True)
class Hashed(Expr):
    """Opaque atom standing for a hidden non-substitutive application."""

    digest: str
    role: str  # "formula" | "term"


@dataclass(frozen=True)
class Witness(Expr):
    """Named choice term introduced during proof search."""

    name: str
    args: tuple[Expr, ...] = ()


TRUE = Bool(True)
FALSE = Bool(False)

# Arity of each built-in operator; None means variadic.
BUILTIN_ARITY: dict[str, Optional[int]] = {
    "and": 2, "or": 2, "not": 1, "implies": 2, "equiv": 2,
    "eq": 2, "neq": 2, "in": 2, "notin": 2, "subseteq": 2,
    "lt": 2, "le": 2, "gt": 2, "ge": 2,
    "plus": 2, "minus": 2, "times": 2, "div": 2, "mod": 2, "neg": 1,
    "cup": 2, "cap": 2, "setminus": 2, "range": 2,
    "powerset": 1, "domain": 1, "unchanged": 1,
}

BUILTIN_CONSTANTS = frozenset({"Nat", "Int", "Real", "BOOLEAN"})

FORMULA_OPS = frozenset({
    "and", "or", "not", "implies", "equiv", "eq", "neq", "in", "notin",
    "subseteq", "lt", "le", "gt", "ge", "unchanged",
})


def And(a: Expr, b: Expr) -> OpApp:
    return OpApp("and", (a, b))


def Or(a: Expr, b: Expr) -> OpApp:
    return OpApp("or", (a, b))


def Not(a: Expr) -> OpApp:
    return OpApp("not", (a,))


def Implies(a: Expr, b: Expr) -> OpApp:
    return OpApp("implies", (a, b))


def Eq(a: Expr, b: Expr) -> OpApp:
    return OpApp("eq", (a, b))


def conj(items) -> Expr:
    items = list(items)
    if not items:
        return TRUE
    out = items[0]
    for it in items[1:]:
        out = And(out, it)
    return out


def disj(items) -> Expr:
    items = list(items)
    if not items:
        return FALSE
    out = items[0]
    for it in items[1:]:
        out = Or(out, it)
    return out


def children(e: Expr) -> list[Expr]:
    """Immediate subexpressions in abstract-syntax order.

    Labels are transparent: the children of ``l::(e)`` are those of ``e``.
    Optional bounds come before bodies.
    """
    if isinstance(e, Label):
        return children(e.expr)
    if isinstance(e, (Apply, OpApp, SubRef)):
        return list(e.args)
    if isinstance(e, (Quant, Choose)):
        return ([e.bound] if e.bound is not None else []) + [e.body]
    if isinstance(e, If):
        return [e.cond, e.then, e.other]
    if isinstance(e, Case):
        out: list[Expr] = []
        for p, v in e.arms:
            out += [p, v]
        if e.other is not None:
            out.append(e.other)
        return out
    if isinstance(e, (SetEnum, Tuple)):
        return list(e.elems)
    if isinstance(e, SetFilter):
        return [e.bound, e.pred]
    if isinstance(e, FunLit):
        return [e.domain, e.body]
    if isinstance(e, FunApp):
        return [e.fn, e.arg]
    if isinstance(e, (Prime, Always)):
        return [e.expr]
    if isinstance(e, ActionBox):
        return [e.action, e.sub]
    if isinstance(e, Witness):
        return list(e.args)
    return []


def walk(e: Expr) -> Iterator[Expr]:
    """Pre-order traversal, including label nodes themselves."""
    yield e
    if isinstance(e, Label):
        yield from walk(e.expr)
        return
    for c in children(e):
        yield from walk(c)


def contains_prime(e: Expr) -> bool:
    return any(isinstance(x, Prime) or (isinstance(x, Apply) and x.primed) for x in walk(e))


# ---------------------------------------------------------------- proofs


@dataclass(frozen=True)
class StepRef:
    """Reference ``<level>name`` to a proof step."""

    level: int
    name: str

    def __str__(self) -> str:
        return f"<{self.level}>{self.name}"


FactRef = Union[StepRef, str]


class ProofNode:
    __slots__ = ()


@dataclass(frozen=True)
class Leaf(ProofNode):
    kind: str  # "BY" | "OBVIOUS" | "OMITTED"
    facts: tuple[FactRef, ...] = ()
    defs: tuple[str, ...] = ()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class UseStep(ProofNode):
    level: int
    facts: tuple[FactRef, ...] = ()
    defs: tuple[str, ...] = ()
    name: str = ""
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class AssertStep(ProofNode):
    level: int
    name: str
    assertion: Expr
    proof: Optional[ProofNode] = None
    line: int = field(default=0, compare=False)

    @property
    def ref(self) -> StepRef:
        return StepRef(self.level, self.name)


@dataclass(frozen=True)
class QedStep(ProofNode):
    level: int
    name: str = ""
    proof: Optional[ProofNode] = None
    line: int = field(default=0, compare=False)

    @property
    def ref(self) -> StepRef:
        return StepRef(self.level, self.name)


@dataclass(frozen=True)
class Sequence(ProofNode):
    steps: tuple[ProofNode, ...]


# ---------------------------------------------------------------- modules


@dataclass(frozen=True)
class OperatorDef:
    name: str
    params: tuple[str, ...]
    body: Expr
    substitutive: Optional[bool] = None  # None: not yet classified
    usable_by_default: bool = False
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Theorem:
    name: str
    statement: Expr
    proof: Optional[ProofNode] = None
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ModuleAst:
    name: str
    extends: tuple[str, ...] = ()
    constants: tuple[str, ...] = ()
    variables: tuple[str, ...] = ()
    definitions: tuple[OperatorDef, ...] = ()
    theorems: tuple[Theorem, ...] = ()

    def definition(self, name: str) -> Optional[OperatorDef]:
        for d in self.definitions:
            if d.name == name:
                return d
        return None

    def theorem(self, name: str) -> Optional[Theorem]:
        for t in self.theorems:
            if t.name == name:
                return t
        return None


def map_children(e: Expr, fn) -> Expr:
    """Rebuild ``e`` with ``fn`` applied to every immediate subexpression.

    Binder variables are left alone; callers that care about scoping must
    handle ``Quant``/``Choose``/``SetFilter``/``FunLit`` themselves.
    """
    if isinstance(e, Apply):
        return Apply(e.op, tuple(fn(a) for a in e.args), e.primed)
    if isinstance(e, OpApp):
        return OpApp(e.op, tuple(fn(a) for a in e.args))
    if isinstance(e, SubRef):
        return SubRef(e.target, tuple(fn(a) for a in e.args), e.path)
    if isinstance(e, Quant):
        return Quant(e.kind, e.var, None if e.bound is None else fn(e.bound), fn(e.body))
    if isinstance(e, Choose):
        return Choose(e.var, None if e.bound is None else fn(e.bound), fn(e.body))
    if isinstance(e, If):
        return If(fn(e.cond), fn(e.then), fn(e.other))
    if isinstance(e, Case):
        return Case(tuple((fn(p), fn(v)) for p, v in e.arms), None if e.other is None else fn(e.other))
    if isinstance(e, SetEnum):
        return SetEnum(tuple(fn(x) for x in e.elems))
    if isinstance(e, Tuple):
        return Tuple(tuple(fn(x) for x in e.elems))
    if isinstance(e, SetFilter):
        return SetFilter(e.var, fn(e.bound), fn(e.pred))
    if isinstance(e, FunLit):
        return FunLit(e.var, fn(e.domain), fn(e.body))
    if isinstance(e, FunApp):
        return FunApp(fn(e.fn), fn(e.arg))
    if isinstance(e, Prime):
        return Prime(fn(e.expr))
    if isinstance(e, Label):
        return Label(e.name, fn(e.expr))
    if isinstance(e, Always):
        return Always(fn(e.expr))
    if isinstance(e, ActionBox):
        return ActionBox(fn(e.action), fn(e.sub))
    if isinstance(e, Witness):
        return Witness(e.name, tuple(fn(a) for a in e.args))
    return e


BINDERS = (Quant, Choose, SetFilter, FunLit)
