"""The fixed base of standard facts that proofs may cite by name.

Each lemma carries its typing hypotheses explicitly: ``n + 0 = n`` is only
stated for ``n`` known to be a number.
"""

from __future__ import annotations

from functools import lru_cache

from stepproof.parser import parse_expr
from stepproof.syntax import Expr

LEMMA_TEXT: dict[str, str] = {
    "AndIsBool": "\\A p, q : (p /\\ q) \\in BOOLEAN",
    "OrIsBool": "\\A p, q : (p \\/ q) \\in BOOLEAN",
    "NotIsBool": "\\A p : (~p) \\in BOOLEAN",
    "ImpliesIsBool": "\\A p, q : (p => q) \\in BOOLEAN",
    "EqIsBool": "\\A p, q : (p = q) \\in BOOLEAN",
    "AddZeroNat": "\\A n : n \\in Nat => n + 0 = n",
    "AddZeroInt": "\\A n : n \\in Int => n + 0 = n",
    "NatIsInt": "\\A n : n \\in Nat => n \\in Int",
    "NatNonNeg": "\\A n : n \\in Nat => 0 <= n",
    "SetExtensionality": "\\A S, T : (\\A x : x \\in S <=> x \\in T) => S = T",
    "EmptySetEmpty": "\\A x : ~(x \\in {})",
}

# Extra vocabulary a lemma needs before the prover loads it on its own: at
# least one of these must occur in the obligation.
TRIGGERS: dict[str, frozenset[str]] = {
    "SetExtensionality": frozenset({"cup", "cap", "setminus", "subseteq", "powerset", "{}", "{...}", "filter"}),
}

# Facts that select a backend rather than add a hypothesis.
PRAGMAS = {"SimpleArithmetic": "presburger", "RealArithmetic": "smt"}


class UnknownLemma(KeyError):
    pass


@lru_cache(maxsize=None)
def cite_lemma(name: str) -> Expr:
    try:
        return parse_expr(LEMMA_TEXT[name])
    except KeyError:
        raise UnknownLemma(name) from None


def lemma_names() -> list[str]:
    return sorted(LEMMA_TEXT)
