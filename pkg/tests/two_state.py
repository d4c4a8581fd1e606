"""A direct evaluator of expressions over a pair of states.

It gives ``e'`` its meaning by evaluating ``e`` with every variable read
from the next state. Results of the prime-distribution pass are compared
against it.
"""

from __future__ import annotations

import random
from itertools import product

from stepproof.syntax import (
    Bool, Case, Id, If, Num, OpApp, Prime, Quant, SetEnum, SetFilter, Tuple,
)

VARIABLES = ("u", "v")
CONSTANTS = ("c", "d", "S")
DOMAIN = (0, 1, 2)


class Undefined(Exception):
    """Division by zero and similar: the sample is skipped."""


def evaluate(e, now: dict, nxt: dict, bound: dict | None = None, primed: bool = False):
    bound = bound or {}
    ev = lambda x, b=bound, p=primed: evaluate(x, now, nxt, b, p)  # noqa: E731
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Bool):
        return e.value
    if isinstance(e, Id):
        if e.name in bound:
            return bound[e.name]
        if e.name in VARIABLES:
            return (nxt if primed else now)[e.name]
        return now[e.name]  # constants agree in both states
    if isinstance(e, Prime):
        return ev(e.expr, bound, True)
    if isinstance(e, If):
        return ev(e.then) if ev(e.cond) else ev(e.other)
    if isinstance(e, Case):
        for guard, value in e.arms:
            if ev(guard):
                return ev(value)
        if e.other is None:
            raise Undefined("no case arm applies")
        return ev(e.other)
    if isinstance(e, SetEnum):
        return frozenset(ev(x) for x in e.elems)
    if isinstance(e, Tuple):
        return tuple(ev(x) for x in e.elems)
    if isinstance(e, SetFilter):
        return frozenset(x for x in ev(e.bound) if ev(e.pred, {**bound, e.var: x}))
    if isinstance(e, Quant):
        items = [ev(e.body, {**bound, e.var: x}) for x in ev(e.bound)]
        return all(items) if e.kind == "forall" else any(items)
    if isinstance(e, OpApp):
        a = [ev(x) for x in e.args]
        op = e.op
        table = {
            "and": lambda: a[0] and a[1], "or": lambda: a[0] or a[1], "not": lambda: not a[0],
            "implies": lambda: (not a[0]) or a[1], "equiv": lambda: a[0] == a[1],
            "eq": lambda: a[0] == a[1], "neq": lambda: a[0] != a[1],
            "lt": lambda: a[0] < a[1], "le": lambda: a[0] <= a[1],
            "gt": lambda: a[0] > a[1], "ge": lambda: a[0] >= a[1],
            "plus": lambda: a[0] + a[1], "minus": lambda: a[0] - a[1],
            "times": lambda: a[0] * a[1], "neg": lambda: -a[0],
            "in": lambda: a[0] in a[1], "notin": lambda: a[0] not in a[1],
            "cup": lambda: a[0] | a[1], "cap": lambda: a[0] & a[1],
            "setminus": lambda: a[0] - a[1], "subseteq": lambda: a[0] <= a[1],
            "range": lambda: frozenset(range(a[0], a[1] + 1)),
        }
        if op in ("div", "mod"):
            if a[1] <= 0:
                raise Undefined("division by a non-positive number")
            return a[0] // a[1] if op == "div" else a[0] % a[1]
        return table[op]()
    raise TypeError(f"no two-state meaning for {type(e).__name__}")


# ---------------------------------------------------------------- generator


class Generator:
    """Well-sorted, prime-free random expressions over u, v (variables) and c, d, S (constants)."""

    def __init__(self, rng: random.Random):
        self.rng = rng

    def int_(self, depth: int, bound: tuple = ()):
        r = self.rng
        if depth <= 0 or r.random() < 0.3:
            pool = [Id("u"), Id("v"), Id("c"), Id("d"), Num(r.randint(0, 3))] + [Id(b) for b in bound]
            return r.choice(pool)
        kind = r.choice(["plus", "minus", "times", "mod", "if", "case", "neg"])
        if kind == "if":
            return If(self.bool_(depth - 1, bound), self.int_(depth - 1, bound), self.int_(depth - 1, bound))
        if kind == "case":
            return Case(((self.bool_(depth - 1, bound), self.int_(depth - 1, bound)),),
                        self.int_(depth - 1, bound))
        if kind == "neg":
            return OpApp("neg", (self.int_(depth - 1, bound),))
        if kind == "mod":
            return OpApp("mod", (self.int_(depth - 1, bound), Num(r.randint(1, 3))))
        return OpApp(kind, (self.int_(depth - 1, bound), self.int_(depth - 1, bound)))

    def set_(self, depth: int, bound: tuple = ()):
        r = self.rng
        if depth <= 0 or r.random() < 0.4:
            return r.choice([Id("S"), SetEnum(tuple(Num(x) for x in r.sample(DOMAIN, 2))),
                             OpApp("range", (Num(0), Num(2)))])
        kind = r.choice(["cup", "cap", "setminus", "enum", "filter"])
        if kind == "enum":
            return SetEnum(tuple(self.int_(depth - 1, bound) for _ in range(r.randint(1, 3))))
        if kind == "filter":
            x = f"k{len(bound)}"
            return SetFilter(x, self.set_(depth - 1, bound), self.bool_(depth - 1, bound + (x,)))
        return OpApp(kind, (self.set_(depth - 1, bound), self.set_(depth - 1, bound)))

    def bool_(self, depth: int, bound: tuple = ()):
        r = self.rng
        if depth <= 0 or r.random() < 0.2:
            return OpApp(r.choice(["eq", "lt", "le", "neq"]), (self.int_(0, bound), self.int_(0, bound)))
        kind = r.choice(["and", "or", "implies", "not", "cmp", "in", "subseteq", "forall", "exists", "equiv"])
        if kind in ("and", "or", "implies", "equiv"):
            return OpApp(kind, (self.bool_(depth - 1, bound), self.bool_(depth - 1, bound)))
        if kind == "not":
            return OpApp("not", (self.bool_(depth - 1, bound),))
        if kind == "cmp":
            return OpApp(r.choice(["eq", "lt", "ge", "gt"]), (self.int_(depth - 1, bound), self.int_(depth - 1, bound)))
        if kind == "in":
            return OpApp(r.choice(["in", "notin"]), (self.int_(depth - 1, bound), self.set_(depth - 1, bound)))
        if kind == "subseteq":
            return OpApp("subseteq", (self.set_(depth - 1, bound), self.set_(depth - 1, bound)))
        x = f"k{len(bound)}"
        return Quant(kind, x, self.set_(depth - 1, bound), self.bool_(depth - 1, bound + (x,)))


def sprinkle_primes(e, rng: random.Random, p: float = 0.25):
    """Wrap randomly chosen, non-overlapping subexpressions of ``e`` in primes."""
    if rng.random() < p:
        return Prime(e)
    from stepproof.syntax import map_children
    return map_children(e, lambda c: sprinkle_primes(c, rng, p))


def state_pairs(rng: random.Random, count: int):
    """Random (now, next) assignments; constants are shared."""
    for _ in range(count):
        consts = {"c": rng.choice(DOMAIN), "d": rng.choice(DOMAIN),
                  "S": frozenset(x for x in DOMAIN if rng.random() < 0.5)}
        now = {**consts, **{v: rng.choice(DOMAIN) for v in VARIABLES}}
        nxt = {**consts, **{v: rng.choice(DOMAIN) for v in VARIABLES}}
        yield now, nxt


def all_state_pairs():
    for c, d in product(DOMAIN, DOMAIN):
        for s in ((), (0,), (1, 2), DOMAIN):
            for u, v, u2, v2 in product(DOMAIN, repeat=4):
                base = {"c": c, "d": d, "S": frozenset(s)}
                yield {**base, "u": u, "v": v}, {**base, "u": u2, "v": v2}
