"""Canonical pretty-printer. ``parse_expr(print_expr(e)) == e`` for parser output.

The printed form is also the canonical text hashed by the rewrite engine and
used for obligation fingerprints, so any change here changes every digest.
"""

from __future__ import annotations

from stepproof.syntax import (
    ActionBox, Always, Apply, Bool, Case, Choose, Dec, Expr, FunApp, FunLit, Hashed,
    Id, If, Label, Num, OpApp, Prime, Quant, SetEnum, SetFilter, Str, SubRef, Tuple,
    Witness,
)

INFIX = {
    "equiv": ("<=>", 1, "left"),
    "implies": ("=>", 2, "right"),
    "or": ("\\/", 3, "left"),
    "and": ("/\\", 4, "left"),
    "eq": ("=", 6, "none"),
    "neq": ("#", 6, "none"),
    "lt": ("<", 6, "none"),
    "le": ("<=", 6, "none"),
    "gt": (">", 6, "none"),
    "ge": (">=", 6, "none"),
    "in": ("\\in", 6, "none"),
    "notin": ("\\notin", 6, "none"),
    "subseteq": ("\\subseteq", 6, "none"),
    "range": ("..", 7, "none"),
    "cup": ("\\cup", 8, "left"),
    "cap": ("\\cap", 8, "left"),
    "setminus": ("\\", 8, "left"),
    "plus": ("+", 9, "left"),
    "minus": ("-", 9, "left"),
    "times": ("*", 10, "left"),
    "div": ("\\div", 10, "left"),
    "mod": ("%", 10, "left"),
}

PREFIX = {"not": ("~", 5), "neg": ("-", 11), "powerset": ("SUBSET ", 11),
          "domain": ("DOMAIN ", 11), "unchanged": ("UNCHANGED ", 11)}

ATOM = 12
OPEN = 0  # binders that extend to the right


def _prec(e: Expr) -> int:
    if isinstance(e, OpApp):
        if e.op in INFIX:
            return INFIX[e.op][1]
        if e.op in PREFIX:
            return PREFIX[e.op][1]
    if isinstance(e, (Quant, Choose, If, Case, Always)):
        return OPEN
    if isinstance(e, Label):
        return 11
    return ATOM


def print_expr(e: Expr) -> str:
    return _p(e)


def _wrap(e: Expr, need: int) -> str:
    s = _p(e)
    p = _prec(e)
    if p < need or (p == OPEN and need > OPEN):
        return f"({s})"
    return s


def _str_lit(v: str) -> str:
    return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _p(e: Expr) -> str:
    if isinstance(e, Num):
        return str(e.value) if e.value >= 0 else f"(-{-e.value})"
    if isinstance(e, Dec):
        return e.text
    if isinstance(e, Str):
        return _str_lit(e.value)
    if isinstance(e, Bool):
        return "TRUE" if e.value else "FALSE"
    if isinstance(e, Id):
        return e.name
    if isinstance(e, Apply):
        head = e.op + ("'" if e.primed else "")
        return f"{head}({', '.join(_p(a) for a in e.args)})"
    if isinstance(e, SubRef):
        head = e.target + (f"({', '.join(_p(a) for a in e.args)})" if e.args else "")
        return head + "".join(f"!{x}" for x in e.path)
    if isinstance(e, OpApp):
        if e.op in INFIX:
            sym, prec, assoc = INFIX[e.op]
            lhs_need = prec if assoc == "left" else prec + 1
            rhs_need = prec if assoc == "right" else prec + 1
            return f"{_wrap(e.args[0], lhs_need)} {sym} {_wrap(e.args[1], rhs_need)}"
        if e.op in PREFIX:
            sym, prec = PREFIX[e.op]
            inner = _wrap(e.args[0], prec if e.op == "not" else ATOM)
            return f"{sym}{inner}"
        raise ValueError(f"unknown built-in operator {e.op}")
    if isinstance(e, Quant):
        q = "\\A" if e.kind == "forall" else "\\E"
        return f"{q} {_binder(e.var, e.bound)} : {_p(e.body)}"
    if isinstance(e, Choose):
        return f"CHOOSE {_binder(e.var, e.bound)} : {_p(e.body)}"
    if isinstance(e, If):
        return f"IF {_p(e.cond)} THEN {_p(e.then)} ELSE {_p(e.other)}"
    if isinstance(e, Case):
        # arms other than the last must not swallow the following "[]"
        parts = []
        arms = list(e.arms)
        for i, (c, v) in enumerate(arms):
            last = i == len(arms) - 1 and e.other is None
            parts.append(f"{_wrap(c, 1)} -> {_p(v) if last else _wrap(v, 1)}")
        if e.other is not None:
            parts.append(f"OTHER -> {_p(e.other)}")
        return "CASE " + " [] ".join(parts)
    if isinstance(e, SetEnum):
        return "{" + ", ".join(_p(x) for x in e.elems) + "}"
    if isinstance(e, SetFilter):
        return f"{{{e.var} \\in {_wrap(e.bound, 7)} : {_p(e.pred)}}}"
    if isinstance(e, FunLit):
        return f"[{e.var} \\in {_p(e.domain)} |-> {_p(e.body)}]"
    if isinstance(e, FunApp):
        return f"{_wrap(e.fn, ATOM)}[{_p(e.arg)}]"
    if isinstance(e, Tuple):
        return "<<" + ", ".join(_p(x) for x in e.elems) + ">>"
    if isinstance(e, Prime):
        return f"{_wrap(e.expr, ATOM)}'"
    if isinstance(e, Label):
        return f"{e.name}::({_p(e.expr)})"
    if isinstance(e, Always):
        if isinstance(e.expr, ActionBox):
            return f"[][{_p(e.expr.action)}]_{_wrap(e.expr.sub, ATOM)}"
        return f"[]{_wrap(e.expr, ATOM)}"
    if isinstance(e, ActionBox):
        return f"[{_p(e.action)}]_{_wrap(e.sub, ATOM)}"
    if isinstance(e, Hashed):
        return f"${e.role[0]}{e.digest}"
    if isinstance(e, Witness):
        return "?" + e.name + (f"({', '.join(_p(a) for a in e.args)})" if e.args else "")
    raise TypeError(f"cannot print {type(e).__name__}")


def _binder(var: str, bound) -> str:
    return var if bound is None else f"{var} \\in {_wrap(bound, 7)}"
