"""The trusted rewrite core.

Every expression handed to a backend goes through :func:`preprocess`, a fixed
pipeline: resolve subexpression references, expand usable definitions,
distribute primes, hash hidden non-substitutive applications, drop labels.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from stepproof.modules import Signature
from stepproof.printer import print_expr
from stepproof.syntax import (
    BINDERS, Apply, Case, Choose, Expr, FunLit, Hashed, Id, If, Label, ModuleAst,
    OpApp, OperatorDef, Prime, Quant, SetFilter, SubRef, Tuple, Eq, children, conj,
    map_children, walk,
)


class RewriteError(Exception):
    def __init__(self, message: str, kind: str):
        super().__init__(message)
        self.kind = kind  # unexpandable-prime | double-prime | out-of-range | unknown-label | arity-mismatch | unknown-operator


@dataclass(frozen=True)
class UsabilityContext:
    usable: frozenset[str] = frozenset()
    # name -> "BY" | "USE" | "default"
    derivation: tuple[tuple[str, str], ...] = field(default=(), compare=False)

    @classmethod
    def of(cls, names: Iterable[str], origin: str = "BY") -> "UsabilityContext":
        names = sorted(set(names))
        return cls(frozenset(names), tuple((n, origin) for n in names))


# ---------------------------------------------------------------- substitution


def free_names(e: Expr) -> set[str]:
    if isinstance(e, Id):
        return {e.name}
    if isinstance(e, BINDERS):
        out: set[str] = set()
        if isinstance(e, (Quant, Choose)):
            if e.bound is not None:
                out |= free_names(e.bound)
            out |= free_names(e.body) - {e.var}
        elif isinstance(e, SetFilter):
            out |= free_names(e.bound) | (free_names(e.pred) - {e.var})
        else:
            out |= free_names(e.domain) | (free_names(e.body) - {e.var})
        return out
    out = set()
    for c in children(e):
        out |= free_names(c)
    return out


def _all_names(e: Expr) -> set[str]:
    out = set()
    for x in walk(e):
        if isinstance(x, Id):
            out.add(x.name)
        elif isinstance(x, BINDERS):
            out.add(x.var)
    return out


def fresh_name(base: str, avoid: set[str]) -> str:
    k = 1
    while f"{base}_{k}" in avoid:
        k += 1
    return f"{base}_{k}"


def subst(e: Expr, mapping: dict[str, Expr], avoid: frozenset[str] = frozenset()) -> Expr:
    """Capture-avoiding simultaneous substitution of free identifiers."""
    if not mapping:
        return e
    if isinstance(e, Id):
        return mapping.get(e.name, e)
    if isinstance(e, BINDERS):
        inner = {k: v for k, v in mapping.items() if k != e.var}
        body = e.body if not isinstance(e, SetFilter) else e.pred
        if isinstance(e, FunLit):
            body = e.body
        relevant = {k: v for k, v in inner.items() if k in free_names(body)}
        var = e.var
        if any(var in free_names(v) for v in relevant.values()):
            taken = set(avoid) | _all_names(body)
            for v in relevant.values():
                taken |= free_names(v)
            var = fresh_name(e.var, taken)
            inner = dict(inner)
            inner[e.var] = Id(var)
        if isinstance(e, (Quant, Choose)):
            bound = None if e.bound is None else subst(e.bound, mapping, avoid)
            new_body = subst(e.body, inner, avoid)
            if isinstance(e, Quant):
                return Quant(e.kind, var, bound, new_body)
            return Choose(var, bound, new_body)
        if isinstance(e, SetFilter):
            return SetFilter(var, subst(e.bound, mapping, avoid), subst(e.pred, inner, avoid))
        return FunLit(var, subst(e.domain, mapping, avoid), subst(e.body, inner, avoid))
    return map_children(e, lambda c: subst(c, mapping, avoid))


def strip_labels(e: Expr) -> Expr:
    if isinstance(e, Label):
        return strip_labels(e.expr)
    return map_children(e, strip_labels)


# ---------------------------------------------------------------- references


def _defs_of(module: Union[ModuleAst, Signature]) -> dict[str, OperatorDef]:
    if isinstance(module, Signature):
        return module.defs
    return {d.name: d for d in module.definitions}


def resolve_ref(ref: SubRef, module: Union[ModuleAst, Signature]) -> Expr:
    """Instantiate the target definition and follow the path.

    A positional step ``i`` selects the i-th child in abstract-syntax order;
    a label selects the unique labelled subexpression of the current node.
    """
    defs = _defs_of(module)
    d = defs.get(ref.target)
    if d is None:
        raise RewriteError(f"unknown operator {ref.target}", "unknown-operator")
    if len(d.params) != len(ref.args):
        raise RewriteError(
            f"{ref.target} expects {len(d.params)} arguments, got {len(ref.args)}", "arity-mismatch")
    cur = subst(d.body, dict(zip(d.params, ref.args)))
    for step in ref.path:
        if isinstance(step, int):
            kids = children(cur)
            if not 1 <= step <= len(kids):
                raise RewriteError(
                    f"position {step} out of range in {print_expr(cur)} ({len(kids)} subexpressions)",
                    "out-of-range")
            cur = kids[step - 1]
        else:
            found = [x for x in walk(cur) if isinstance(x, Label) and x.name == step]
            if not found:
                raise RewriteError(f"no label {step} in {ref.target}", "unknown-label")
            cur = found[0]
        while isinstance(cur, Label):
            cur = cur.expr
    return cur


def resolve_refs(e: Expr, module: Union[ModuleAst, Signature]) -> Expr:
    if isinstance(e, SubRef):
        args = tuple(resolve_refs(a, module) for a in e.args)
        return resolve_refs(resolve_ref(SubRef(e.target, args, e.path), module), module)
    return map_children(e, lambda c: resolve_refs(c, module))


# ---------------------------------------------------------------- expansion


def _unchanged(arg: Expr) -> Expr:
    if isinstance(arg, Tuple):
        return conj(Eq(Prime(x), x) for x in arg.elems)
    return Eq(Prime(arg), arg)


def expand_usable(e: Expr, ctx: UsabilityContext, sig: Signature,
                  order: Optional[list[str]] = None, strategy: str = "inner") -> Expr:
    """Beta-reduce applications of usable operators until none remain.

    No arithmetic is evaluated. ``order`` expands one operator name per pass,
    cycling until a fixpoint; ``strategy`` chooses whether arguments are
    expanded before (``inner``) or after (``outer``) substitution.
    """
    avoid = frozenset(sig.defs) | sig.constants | sig.variables
    if order is None:
        return _expand(e, ctx.usable, sig, avoid, strategy)
    while True:
        prev = e
        for name in order:
            if name in ctx.usable:
                e = _expand(e, frozenset({name}), sig, avoid, strategy)
        e = _expand(e, frozenset(), sig, avoid, strategy)  # builtin UNCHANGED
        if e == prev:
            return e


def _expand(e: Expr, usable: frozenset[str], sig: Signature, avoid: frozenset[str], strategy: str) -> Expr:
    def go(x: Expr) -> Expr:
        if isinstance(x, Apply) and not x.primed and x.op in usable:
            d = sig.defs[x.op]
            args = tuple(go(a) for a in x.args) if strategy == "inner" else x.args
            return go(subst(d.body, dict(zip(d.params, args)), avoid))
        if isinstance(x, Id) and x.name in usable and x.name in sig.defs and not sig.defs[x.name].params:
            return go(sig.defs[x.name].body)
        if isinstance(x, OpApp) and x.op == "unchanged":
            return go(_unchanged(x.args[0]))
        return map_children(x, go)

    return go(e)


# ---------------------------------------------------------------- substitutivity


def classify_substitutive(d: OperatorDef, env: dict[str, Optional[bool]]) -> bool:
    """Conservative syntactic check: prime-free and built only from substitutive operators."""
    for x in walk(d.body):
        if isinstance(x, Prime) or (isinstance(x, Apply) and x.primed):
            return False
        if isinstance(x, OpApp) and x.op == "unchanged":
            return False
        if isinstance(x, (Apply, SubRef)):
            name = x.op if isinstance(x, Apply) else x.target
            if env.get(name) is not True:
                return False
        if isinstance(x, Id) and x.name in env and env[x.name] is not True:
            return False
    return True


# ---------------------------------------------------------------- priming


def distribute_prime(e: Expr, sig: Signature) -> Expr:
    """Push every prime down to variables; constants absorb it."""

    def hidden(name: str, args: tuple[Expr, ...], bound: frozenset[str]) -> Expr:
        level = sig.levels.get(name, 0)
        if not sig.substitutive.get(name, False) or level >= 2:
            text = print_expr(Apply(name, args) if args else Id(name))
            raise RewriteError(
                f"prime applied to hidden non-substitutive operator: ({text})'", "unexpandable-prime")
        new_args = tuple(go(a, True, bound) for a in args)
        if level == 0:
            return Apply(name, new_args) if args else Id(name)
        return Apply(name, new_args, primed=True) if args else Prime(Id(name))

    def go(x: Expr, primed: bool, bound: frozenset[str]) -> Expr:
        if isinstance(x, Prime):
            if primed:
                raise RewriteError("double priming is not allowed", "double-prime")
            return go(x.expr, True, bound)
        if not primed:
            if isinstance(x, BINDERS):
                return _map_binder(x, lambda c, inner: go(c, False, bound | inner))
            return map_children(x, lambda c: go(c, False, bound))
        if isinstance(x, Id):
            if x.name in bound:
                return x
            if x.name in sig.variables:
                return Prime(x)
            if x.name in sig.defs:
                return hidden(x.name, (), bound)
            return x
        if isinstance(x, Apply):
            if x.primed:
                raise RewriteError("double priming is not allowed", "double-prime")
            return hidden(x.op, x.args, bound)
        if isinstance(x, Hashed):
            raise RewriteError("prime applied to a hashed atom", "unexpandable-prime")
        if isinstance(x, BINDERS):
            return _map_binder(x, lambda c, inner: go(c, True, bound | inner))
        return map_children(x, lambda c: go(c, True, bound))

    return go(e, False, frozenset())


def _map_binder(x: Expr, fn) -> Expr:
    """Apply ``fn(child, newly_bound)`` to the children of a binder node."""
    v = frozenset({x.var})
    if isinstance(x, Quant):
        return Quant(x.kind, x.var, None if x.bound is None else fn(x.bound, frozenset()), fn(x.body, v))
    if isinstance(x, Choose):
        return Choose(x.var, None if x.bound is None else fn(x.bound, frozenset()), fn(x.body, v))
    if isinstance(x, SetFilter):
        return SetFilter(x.var, fn(x.bound, frozenset()), fn(x.pred, v))
    return FunLit(x.var, fn(x.domain, frozenset()), fn(x.body, v))


def prime_expr(e: Expr, sig: Signature) -> Expr:
    """``distribute_prime(e')``."""
    return distribute_prime(Prime(e), sig)


# ---------------------------------------------------------------- hashing


def digest_of(e: Expr) -> str:
    return hashlib.sha256(print_expr(e).encode("utf-8")).hexdigest()


_FORMULA_ARGS = {"and", "or", "not", "implies", "equiv"}


def hash_hidden(e: Expr, ctx: UsabilityContext, sig: Signature) -> Expr:
    """Replace hidden non-substitutive applications by opaque digests of their text."""

    def opaque(name: str) -> bool:
        return name in sig.defs and name not in ctx.usable and not sig.substitutive.get(name, False)

    def go(x: Expr, role: str) -> Expr:
        if isinstance(x, Apply) and not x.primed and opaque(x.op):
            return Hashed(digest_of(x), role)
        if isinstance(x, Id) and opaque(x.name) and not sig.defs[x.name].params:
            return Hashed(digest_of(x), role)
        if isinstance(x, OpApp):
            r = "formula" if x.op in _FORMULA_ARGS else "term"
            return OpApp(x.op, tuple(go(a, r) for a in x.args))
        if isinstance(x, (Quant, Choose)):
            return type(x)(*((x.kind,) if isinstance(x, Quant) else ()), x.var,
                           None if x.bound is None else go(x.bound, "term"), go(x.body, "formula"))
        if isinstance(x, SetFilter):
            return SetFilter(x.var, go(x.bound, "term"), go(x.pred, "formula"))
        if isinstance(x, If):
            return If(go(x.cond, "formula"), go(x.then, role), go(x.other, role))
        if isinstance(x, Case):
            return Case(tuple((go(p, "formula"), go(v, role)) for p, v in x.arms),
                        None if x.other is None else go(x.other, role))
        if isinstance(x, (Label, Prime)):
            return map_children(x, lambda c: go(c, role))
        return map_children(x, lambda c: go(c, "term"))

    return go(e, "formula")


# ---------------------------------------------------------------- pipeline


def preprocess(e: Expr, ctx: UsabilityContext, sig: Signature) -> Expr:
    e = resolve_refs(e, sig)
    e = expand_usable(e, ctx, sig)
    e = distribute_prime(e, sig)
    e = hash_hidden(e, ctx, sig)
    return strip_labels(e)


def primed_nodes_ok(e: Expr, sig: Signature) -> bool:
    """Every prime wraps a variable or a hidden state-level 0-ary operator."""
    for x in walk(e):
        if isinstance(x, Prime):
            if not isinstance(x.expr, Id):
                return False
            if x.expr.name not in sig.variables and x.expr.name not in sig.defs:
                return False
    return True
