"""Brute-force truth of closed Presburger sentences over finite windows.

Why a finite window is enough: with the outer variables fixed, the matrix
below a quantifier is (after eliminating the inner quantifiers) a boolean
combination of atoms ``c*x + t < 0`` and ``m | c*x + t``. Beyond the most
extreme root of the comparison atoms, every comparison is constant in ``x``
and every divisibility atom is periodic, so the behaviour of the whole
formula repeats with period ``P = lcm(m / gcd(m, c))``. Searching from one
period below the lowest root to one period above the highest root therefore
sees every behaviour.

The atoms of the eliminated formula are not known without running an
elimination, so each level keeps a *shadow*: a superset description of the
linear parts, constant ranges and moduli that the textbook elimination step
can produce. Over-approximating only widens windows, which keeps the search
exact. The shadow is computed from coefficients alone and never calls the
code under test.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from math import ceil, floor, gcd

import numpy as np


def lcm(a: int, b: int) -> int:
    return a * b // gcd(a, b)


@dataclass(frozen=True)
class Atom:
    kind: str  # lt | le | eq | dvd
    coeffs: tuple[int, ...]
    const: int
    modulus: int = 0


@dataclass(frozen=True)
class Sentence:
    quants: tuple[str, ...]  # "E" or "A" per variable, outermost first
    matrix: tuple  # ("atom", Atom) | ("not", m) | ("and", m, m) | ("or", m, m)

    @property
    def arity(self) -> int:
        return len(self.quants)


def atoms_of(m) -> list[Atom]:
    if m[0] == "atom":
        return [m[1]]
    return [a for sub in m[1:] for a in atoms_of(sub)]


# ---------------------------------------------------------------- shadow forms


@dataclass(frozen=True)
class Form:
    kind: str  # cmp | dvd
    lin: tuple[int, ...]
    lo: int
    hi: int
    modulus: int = 0


def _scale(k: int, lo: int, hi: int) -> tuple[int, int]:
    a, b = k * lo, k * hi
    return min(a, b), max(a, b)


def _merge(forms) -> list[Form]:
    """Union constant ranges of forms sharing a linear part and modulus."""
    table: dict[tuple, tuple[int, int]] = {}
    for f in forms:
        key = (f.kind, f.lin, f.modulus)
        if key in table:
            lo, hi = table[key]
            table[key] = (min(lo, f.lo), max(hi, f.hi))
        else:
            table[key] = (f.lo, f.hi)
    return [Form(k, lin, lo, hi, m) for (k, lin, m), (lo, hi) in sorted(table.items())]


def matrix_forms(s: Sentence) -> list[Form]:
    out = []
    for a in atoms_of(s.matrix):
        if a.kind == "dvd":
            out.append(Form("dvd", a.coeffs, a.const, a.const, a.modulus))
        else:
            # one either side covers strictness, equality and negation variants
            out.append(Form("cmp", a.coeffs, a.const - 1, a.const + 1))
    return _merge(out)


def eliminate(forms: list[Form], k: int) -> list[Form]:
    """Shadow of the formula after eliminating variable ``k`` (the last one)."""
    keep = [Form(f.kind, f.lin[:k], f.lo, f.hi, f.modulus) for f in forms if f.lin[k] == 0]
    with_x = [f for f in forms if f.lin[k] != 0]
    if not with_x:
        return _merge(keep)
    l = 1
    for f in with_x:
        l = lcm(l, abs(f.lin[k]))
    delta = l
    for f in with_x:
        if f.kind == "dvd":
            delta = lcm(delta, f.modulus * (l // abs(f.lin[k])))
    # candidate values of l*x: a boundary term plus an offset in [-delta, delta]
    bounds: list[tuple[tuple[int, ...], int, int]] = [((0,) * k, 0, 0)]
    for f in with_x:
        if f.kind != "cmp":
            continue
        s = l // abs(f.lin[k])
        sign = 1 if f.lin[k] > 0 else -1
        lin = tuple(-sign * s * c for c in f.lin[:k])
        lo, hi = _scale(-sign * s, f.lo, f.hi)
        bounds.append((lin, lo - 1, hi + 1))
    out = list(keep)
    for blin, blo, bhi in bounds:
        if l > 1:
            out.append(Form("dvd", blin, blo, bhi, l))
        for f in with_x:
            s = l // abs(f.lin[k])
            sign = 1 if f.lin[k] > 0 else -1
            lin = tuple(sign * b + s * c for b, c in zip(blin, f.lin[:k]))
            lo1, hi1 = _scale(sign, blo - delta, bhi + delta)
            lo2, hi2 = _scale(s, f.lo, f.hi)
            m = f.modulus * s if f.kind == "dvd" else 0
            out.append(Form(f.kind, lin, lo1 + lo2, hi1 + hi2, m))
    return _merge(out)


def shadows(s: Sentence) -> list[list[Form]]:
    """``result[k]`` describes the formula below quantifier ``k`` over variables ``0..k``."""
    n = s.arity
    levels = [None] * n
    levels[n - 1] = matrix_forms(s)
    for k in range(n - 1, 0, -1):
        levels[k - 1] = eliminate(levels[k], k)
    return levels


def windows(s: Sentence, margin: int = 0) -> list[tuple[int, int]]:
    """Per-variable search ranges, each valid for every value of the outer variables in range.

    ``margin`` widens every range; inner ranges then follow the widened outer
    ones. Any margin must give the same truth value.
    """
    box: list[tuple[int, int]] = []
    for k, forms in enumerate(shadows(s)):
        lows, highs, period = [], [], 1
        for f in forms:
            c = f.lin[k]
            if c == 0:
                continue
            if f.kind == "dvd":
                period = lcm(period, f.modulus // gcd(f.modulus, abs(c)))
                continue
            # root of c*x + sum(lin_i * x_i) + const = 0 over the box
            lo, hi = f.lo, f.hi
            for coef, (a, b) in zip(f.lin[:k], box):
                p, q = _scale(coef, a, b)
                lo, hi = lo + p, hi + q
            r1, r2 = -lo / c, -hi / c
            lows.append(floor(min(r1, r2)))
            highs.append(ceil(max(r1, r2)))
        low = (min(lows) if lows else 0) - 1 - period - margin
        high = (max(highs) if highs else 0) + 1 + period + margin
        box.append((low, high))
    return box


def cells(s: Sentence) -> int:
    total = 1
    for lo, hi in windows(s):
        total *= hi - lo + 1
    return total


# ---------------------------------------------------------------- evaluation


def _eval(m, grids):
    tag = m[0]
    if tag == "atom":
        a: Atom = m[1]
        t = a.const
        for c, g in zip(a.coeffs, grids):
            if c:
                t = t + c * g
        t = np.broadcast_to(np.asarray(t), np.broadcast_shapes(*(g.shape for g in grids)))
        if a.kind == "lt":
            return t < 0
        if a.kind == "le":
            return t <= 0
        if a.kind == "eq":
            return t == 0
        return t % a.modulus == 0
    if tag == "not":
        return ~_eval(m[1], grids)
    x, y = _eval(m[1], grids), _eval(m[2], grids)
    return (x & y) if tag == "and" else (x | y)


def truth(s: Sentence, margin: int = 0) -> bool:
    return truth_in_box(s, windows(s, margin))


def truth_in_box(s: Sentence, box: list[tuple[int, int]]) -> bool:
    n = s.arity
    grids = []
    for k, (lo, hi) in enumerate(box):
        shape = [1] * n
        shape[k] = hi - lo + 1
        grids.append(np.arange(lo, hi + 1, dtype=np.int64).reshape(shape))
    values = _eval(s.matrix, grids)
    for k in range(n - 1, -1, -1):
        values = values.all(axis=k) if s.quants[k] == "A" else values.any(axis=k)
    return bool(values)


# ---------------------------------------------------------------- generation


def random_sentence(rng: random.Random, max_quants: int = 3, max_atoms: int = 3) -> Sentence:
    n = rng.randint(1, max_quants)
    quants = tuple(rng.choice("EA") for _ in range(n))

    def atom() -> Atom:
        coeffs = [0] * n
        for k in rng.sample(range(n), rng.randint(1, min(n, 2))):
            coeffs[k] = rng.choice([c for c in range(-5, 6) if c])
        kind = rng.choice(["lt", "le", "eq", "dvd", "lt", "le"])
        if kind == "dvd":
            return Atom(kind, tuple(coeffs), rng.randint(-5, 5), rng.randint(2, 5))
        return Atom(kind, tuple(coeffs), rng.randint(-10, 10))

    def matrix(size: int):
        if size == 1:
            m = ("atom", atom())
            return ("not", m) if rng.random() < 0.2 else m
        left = rng.randint(1, size - 1)
        return (rng.choice(["and", "or"]), matrix(left), matrix(size - left))

    return Sentence(quants, matrix(rng.randint(1, max_atoms)))


def format_sentence(s: Sentence) -> str:
    names = [f"x{k}" for k in range(s.arity)]

    def term(a: Atom) -> str:
        parts = [f"{c} * {v}" for c, v in zip(a.coeffs, names) if c]
        return " + ".join(parts + [str(a.const)])

    def go(m) -> str:
        if m[0] == "atom":
            a = m[1]
            if a.kind == "dvd":
                return f"({term(a)}) % {a.modulus} = 0"
            return f"{term(a)} {dict(lt='<', le='<=', eq='=')[a.kind]} 0"
        if m[0] == "not":
            return f"~({go(m[1])})"
        op = "/\\" if m[0] == "and" else "\\/"
        return f"({go(m[1])}) {op} ({go(m[2])})"

    text = go(s.matrix)
    for q, v in reversed(list(zip(s.quants, names))):
        text = f"\\{q} {v} \\in Int : {text}"
    return text
