"""Canonical sequent text and its fingerprint.

Shared by the obligation engine (to name obligations) and the trace kernel
(to bind a trace to the obligation it claims to prove).
"""

from __future__ import annotations

import hashlib
from typing import Iterable

from stepproof.printer import print_expr
from stepproof.syntax import Expr


def sequent_text(hypotheses: Iterable[tuple[str, Expr]], goal: Expr,
                 usable: Iterable[str] = (), pragmas: Iterable[str] = ()) -> str:
    lines = [f"HYP {name}: {print_expr(h)}" for name, h in hypotheses]
    lines.append("DEFS " + ",".join(sorted(usable)))
    if pragmas:
        lines.append("PRAGMA " + ",".join(sorted(pragmas)))
    lines.append(f"GOAL {print_expr(goal)}")
    return "\n".join(lines)


def fingerprint(hypotheses: Iterable[tuple[str, Expr]], goal: Expr,
                usable: Iterable[str] = (), pragmas: Iterable[str] = ()) -> str:
    text = sequent_text(hypotheses, goal, usable, pragmas)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
