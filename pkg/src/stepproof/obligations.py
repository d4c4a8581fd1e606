"""Walk hierarchical proofs and emit one self-contained obligation per leaf."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from stepproof.canon import fingerprint, sequent_text
from stepproof.lemmas import LEMMA_TEXT, PRAGMAS, cite_lemma
from stepproof.modules import Signature
from stepproof.parser import parse_expr
from stepproof.printer import print_expr
from stepproof.rewrite import (
    RewriteError, UsabilityContext, distribute_prime, expand_usable, preprocess,
)
from stepproof.syntax import (
    ActionBox, Always, AssertStep, Expr, FactRef, Id, Leaf, ModuleAst, OpApp, Prime,
    ProofNode, QedStep, Sequence, StepRef, Theorem, UseStep, And, Implies, conj, walk,
)


class ProofError(Exception):
    """Structural problem in a proof: bad citation, unsupported statement shape."""

    def __init__(self, message: str, kind: str, line: int = 0):
        super().__init__(message)
        self.kind = kind  # unknown-fact | temporal-citation | unknown-definition | unsupported-temporal-form | stuttering
        self.line = line


@dataclass(frozen=True)
class Obligation:
    id: str
    hypotheses: tuple[tuple[str, Expr], ...]
    goal: Expr
    usable: frozenset[str]
    module: str
    theorem: str
    path: tuple[str, ...]
    status_hint: str = "normal"  # normal | omitted | rejected
    pragmas: tuple[str, ...] = ()
    reason: str = ""
    position: tuple[int, ...] = field(default=(), compare=False)
    line: int = field(default=0, compare=False)

    @property
    def label(self) -> str:
        return self.theorem + "".join(f" {p}" for p in self.path)

    def sequent(self) -> str:
        return sequent_text(self.hypotheses, self.goal, self.usable, self.pragmas)


# ---------------------------------------------------------------- invariance


def _vars_of(e: Expr, sig: Signature) -> set[str]:
    full = expand_usable(e, UsabilityContext.of(sig.defs), sig)
    return {x.name for x in walk(full) if isinstance(x, Id) and x.name in sig.variables}


def invariance_parts(stmt: Expr) -> Optional[tuple[Expr, Expr, Expr, Expr]]:
    """Match ``Init /\\ [][Next]_v => []Inv``; returns (Init, Next, v, Inv)."""
    if not (isinstance(stmt, OpApp) and stmt.op == "implies"):
        return None
    lhs, rhs = stmt.args
    if not (isinstance(lhs, OpApp) and lhs.op == "and" and isinstance(rhs, Always)):
        return None
    conjuncts = _conjuncts(lhs)
    boxes = [c for c in conjuncts if isinstance(c, Always)]
    if len(boxes) != 1 or conjuncts[-1] is not boxes[0]:
        return None
    box = boxes[0]
    init = conj(conjuncts[:-1])
    if not isinstance(box.expr, ActionBox):
        return None
    inv = rhs.expr
    if any(isinstance(x, (Always, ActionBox)) for e in (init, box.expr.action, inv) for x in walk(e)):
        return None
    return init, box.expr.action, box.expr.sub, inv


def invariance_goal(stmt: Expr, sig: Signature) -> tuple[Expr, Expr]:
    """The two premises of the invariance rule, unexpanded and with ``Inv'`` kept whole."""
    parts = invariance_parts(stmt)
    if parts is None:
        raise ProofError(f"unsupported temporal form: {print_expr(stmt)}", "unsupported-temporal-form")
    init, nxt, sub, inv = parts
    # stuttering steps [Next]_v leave v unchanged; Inv must depend on v only
    missing = _vars_of(inv, sig) - _vars_of(sub, sig)
    if missing:
        raise ProofError(
            f"invariant mentions {', '.join(sorted(missing))} which the subscript does not cover",
            "stuttering")
    # constant conjuncts of the antecedent hold in every state, so they also
    # guard the inductive step
    assumptions = [c for c in _conjuncts(init) if sig.level(c, set()) == 0]
    step_lhs = conj(assumptions + [inv, nxt])
    return Implies(init, inv), Implies(step_lhs, Prime(inv))


def _conjuncts(e: Expr) -> list[Expr]:
    if isinstance(e, OpApp) and e.op == "and":
        return _conjuncts(e.args[0]) + _conjuncts(e.args[1])
    return [e]


def apply_invariance_rule(thm: Theorem, module: ModuleAst,
                          usable: Iterable[str] = ()) -> tuple[Expr, Expr]:
    """Initial and step goals, with usable definitions expanded and primes distributed."""
    sig = Signature(module)
    ctx = UsabilityContext.of(usable)
    a, b = invariance_goal(thm.statement, sig)
    return (distribute_prime(expand_usable(a, ctx, sig), sig),
            distribute_prime(expand_usable(b, ctx, sig), sig))


def is_temporal(e: Expr) -> bool:
    return any(isinstance(x, (Always, ActionBox)) for x in walk(e))


def level_goal(thm: Theorem, sig: Signature) -> Expr:
    if is_temporal(thm.statement):
        a, b = invariance_goal(thm.statement, sig)
        return And(a, b)
    return thm.statement


# ---------------------------------------------------------------- interpretation


class _Interpreter:
    def __init__(self, module: ModuleAst, sig: Signature, thm: Theorem, earlier: list[Theorem]):
        self.module = module
        self.sig = sig
        self.thm = thm
        self.theorems = {t.name: t for t in earlier}
        self.out: list[Obligation] = []

    def resolve_fact(self, ref: FactRef, scope: dict[str, Expr], line: int) -> tuple[str, Optional[Expr], Optional[str]]:
        """Returns (name, formula or None, pragma or None)."""
        if isinstance(ref, StepRef):
            key = str(ref)
            if key not in scope:
                raise ProofError(f"unknown or out-of-scope step {key}", "unknown-fact", line)
            return key, scope[key], None
        if ref in PRAGMAS:
            return ref, None, PRAGMAS[ref]
        if ref in LEMMA_TEXT:
            return ref, cite_lemma(ref), None
        if ref in self.theorems:
            t = self.theorems[ref]
            if is_temporal(t.statement):
                raise ProofError(f"theorem {ref} is temporal and cannot be cited", "temporal-citation", line)
            return ref, t.statement, None
        raise ProofError(f"unknown fact {ref}", "unknown-fact", line)

    def check_defs(self, defs: Iterable[str], line: int) -> None:
        for d in defs:
            if d not in self.sig.defs:
                raise ProofError(f"unknown definition {d}", "unknown-definition", line)

    def leaf(self, node: Optional[ProofNode], goal: Expr, scope: dict[str, Expr],
             used_facts: list[FactRef], used_defs: list[str], path: tuple[str, ...],
             position: tuple[int, ...], line: int) -> None:
        if node is None or (isinstance(node, Leaf) and node.kind == "OMITTED"):
            kind = "omitted"
            facts: tuple[FactRef, ...] = ()
            defs: tuple[str, ...] = ()
            line = node.line if node is not None else line
        else:
            assert isinstance(node, Leaf)
            kind = "normal"
            facts, defs, line = node.facts, node.defs, node.line or line
        self.check_defs(defs, line)
        hyps: list[tuple[str, Expr]] = []
        pragmas: list[str] = []
        seen: set[str] = set()
        for ref in list(facts) + list(used_facts):
            name, formula, pragma = self.resolve_fact(ref, scope, line)
            if name in seen:
                continue
            seen.add(name)
            if pragma is not None:
                pragmas.append(pragma)
            else:
                hyps.append((name, formula))
        usable = list(dict.fromkeys(list(defs) + used_defs))
        usable += [d.name for d in self.module.definitions if d.usable_by_default and d.name not in usable]
        ctx = UsabilityContext(frozenset(usable), tuple(
            [(n, "BY") for n in defs] + [(n, "USE") for n in used_defs if n not in defs]))
        status, reason = kind, ""
        try:
            p_hyps = tuple((n, preprocess(h, ctx, self.sig)) for n, h in hyps)
            p_goal = preprocess(goal, ctx, self.sig)
        except RewriteError as err:
            p_hyps, p_goal = tuple(hyps), goal
            status = "rejected" if kind == "normal" else kind
            reason = f"{err.kind}: {err}"
        prag = tuple(dict.fromkeys(pragmas))
        self.out.append(Obligation(
            id=fingerprint(p_hyps, p_goal, ctx.usable, prag),
            hypotheses=p_hyps, goal=p_goal, usable=ctx.usable,
            module=self.module.name, theorem=self.thm.name, path=path,
            status_hint=status, pragmas=prag, reason=reason, position=position, line=line))

    def proof(self, node: Optional[ProofNode], goal: Expr, scope: dict[str, Expr],
              used_facts: list[FactRef], used_defs: list[str], path: tuple[str, ...],
              position: tuple[int, ...], line: int) -> None:
        if not isinstance(node, Sequence):
            self.leaf(node, goal, scope, used_facts, used_defs, path, position, line)
            return
        scope = dict(scope)
        used_facts = list(used_facts)
        used_defs = list(used_defs)
        for i, step in enumerate(node.steps):
            pos = position + (i,)
            if isinstance(step, UseStep):
                self.check_defs(step.defs, step.line)
                for f in step.facts:
                    self.resolve_fact(f, scope, step.line)
                    used_facts.append(f)
                used_defs += [d for d in step.defs if d not in used_defs]
            elif isinstance(step, AssertStep):
                self.proof(step.proof, step.assertion, scope, used_facts, used_defs,
                           path + (str(step.ref),), pos, step.line)
                scope[str(step.ref)] = step.assertion
            elif isinstance(step, QedStep):
                label = f"<{step.level}>{step.name or 'QED'}"
                self.proof(step.proof, goal, scope, used_facts, used_defs,
                           path + (label,), pos, step.line)


def interpret_proof(thm: Theorem, module: ModuleAst, sig: Optional[Signature] = None) -> list[Obligation]:
    """Obligations for one theorem of a flattened module, in document order."""
    sig = sig or Signature(module)
    earlier = []
    for t in module.theorems:
        if t.name == thm.name:
            break
        earlier.append(t)
    it = _Interpreter(module, sig, thm, earlier)
    it.proof(thm.proof, level_goal(thm, sig), {}, [], [], (), (), thm.line)
    return it.out


def module_obligations(module: ModuleAst, sig: Optional[Signature] = None) -> list[Obligation]:
    sig = sig or Signature(module)
    out: list[Obligation] = []
    for i, t in enumerate(module.theorems):
        for ob in interpret_proof(t, module, sig):
            out.append(_with_position(ob, (i,) + ob.position))
    return out


def _with_position(ob: Obligation, pos: tuple[int, ...]) -> Obligation:
    from dataclasses import replace
    return replace(ob, position=pos)


# ---------------------------------------------------------------- reporting


def list_unproven(module: ModuleAst) -> list[tuple[str, tuple[str, ...]]]:
    out: list[tuple[str, tuple[str, ...]]] = []

    def visit(node: Optional[ProofNode], thm: str, path: tuple[str, ...]) -> None:
        if node is None or (isinstance(node, Leaf) and node.kind == "OMITTED"):
            out.append((thm, path))
        elif isinstance(node, Sequence):
            for step in node.steps:
                if isinstance(step, AssertStep):
                    visit(step.proof, thm, path + (str(step.ref),))
                elif isinstance(step, QedStep):
                    visit(step.proof, thm, path + (f"<{step.level}>{step.name or 'QED'}",))

    for t in module.theorems:
        visit(t.proof, t.name, ())
    return out


def report_failure(ob: Obligation, attempts: Iterable[tuple[str, str]] = (),
                   module: Optional[ModuleAst] = None) -> str:
    """Readable account of a failed obligation: hypotheses, goal, provenance, attempts.

    Hypotheses and goal are shown as the backends saw them, with every usable
    definition expanded.
    """
    lines = [f"{ob.module}: {ob.label or ob.theorem} (line {ob.line})"]
    if ob.status_hint == "omitted":
        lines.append("  status: omitted, not attempted")
    elif ob.status_hint == "rejected":
        lines.append(f"  status: rejected by the rewrite engine ({ob.reason})")
    if ob.usable:
        lines.append("  usable: " + ", ".join(sorted(ob.usable)))
    for name, h in ob.hypotheses:
        lines.append(f"  {name}: {print_expr(h)}")
    lines.append(f"  PROVE {print_expr(ob.goal)}")
    for backend, reason in attempts:
        lines.append(f"  {backend}: {reason}")
    return "\n".join(lines)


# ---------------------------------------------------------------- dump


def obligation_record(ob: Obligation) -> dict:
    return {
        "id": ob.id,
        "module": ob.module,
        "theorem": ob.theorem,
        "path": list(ob.path),
        "hypotheses": [[n, print_expr(h)] for n, h in ob.hypotheses],
        "goal": print_expr(ob.goal),
        "usable": sorted(ob.usable),
        "pragmas": list(ob.pragmas),
        "status": ob.status_hint,
        "line": ob.line,
    }


def obligation_from_record(rec: dict) -> Obligation:
    def p(text: str) -> Expr:
        return parse_expr(text, internal=True)

    return Obligation(
        id=rec["id"], hypotheses=tuple((n, p(t)) for n, t in rec["hypotheses"]),
        goal=p(rec["goal"]), usable=frozenset(rec.get("usable", ())), module=rec["module"],
        theorem=rec["theorem"], path=tuple(rec["path"]), status_hint=rec.get("status", "normal"),
        pragmas=tuple(rec.get("pragmas", ())), line=rec.get("line", 0))


def write_dump(obs: Iterable[Obligation], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ob in obs:
            fh.write(json.dumps(obligation_record(ob), sort_keys=True) + "\n")


def read_dump(path: Path) -> list[Obligation]:
    with open(path, encoding="utf-8") as fh:
        return [obligation_from_record(json.loads(line)) for line in fh if line.strip()]


def make_obligation(hypotheses: Iterable[tuple[str, Expr]], goal: Expr, module: str = "adhoc",
                    theorem: str = "adhoc", usable: Iterable[str] = (),
                    pragmas: Iterable[str] = ()) -> Obligation:
    """A stand-alone obligation, e.g. for tests or the command line."""
    hyps = tuple(hypotheses)
    usable = frozenset(usable)
    pragmas = tuple(pragmas)
    return Obligation(fingerprint(hyps, goal, usable, pragmas), hyps, goal, usable,
                      module, theorem, (), pragmas=pragmas)
