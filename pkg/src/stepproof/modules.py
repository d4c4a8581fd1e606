"""Module flattening, scope checking and the operator signature."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Optional

from stepproof.syntax import (
    Always, Apply, Choose, Expr, FunLit, Id, Label, ModuleAst, OperatorDef,
    Prime, Quant, SetFilter, SubRef, BUILTIN_CONSTANTS, children, walk,
)

# Modules every file may extend without providing a source.
BUILTIN_MODULES = frozenset({"Naturals", "Integers", "Reals", "Std", "TLAPS", "FiniteSets"})


class FlattenError(Exception):
    def __init__(self, message: str, kind: str):
        super().__init__(message)
        self.kind = kind  # missing-module | import-cycle | duplicate-name


class ScopeError(Exception):
    def __init__(self, message: str, line: int = 0):
        super().__init__(message)
        self.line = line


def flatten(root: ModuleAst, library: Mapping[str, ModuleAst]) -> ModuleAst:
    """Merge ``root`` and everything it transitively extends into one module.

    Extended modules come first, in depth-first post-order; each module is
    included once even when reached along several paths.
    """
    ordered: list[ModuleAst] = []
    state: dict[str, str] = {}

    def visit(m: ModuleAst, trail: tuple[str, ...]) -> None:
        state[m.name] = "active"
        for dep in m.extends:
            if state.get(dep) == "active":
                cycle = " -> ".join(trail + (m.name, dep))
                raise FlattenError(f"import cycle: {cycle}", "import-cycle")
            if state.get(dep) == "done":
                continue
            if dep in library:
                visit(library[dep], trail + (m.name,))
            elif dep in BUILTIN_MODULES:
                state[dep] = "done"
            else:
                raise FlattenError(f"module {dep} (extended by {m.name}) not found", "missing-module")
        state[m.name] = "done"
        ordered.append(m)

    visit(root, ())
    if len(ordered) == 1:
        return replace(root, extends=())

    owner: dict[str, str] = {}
    constants, variables, defs, thms = [], [], [], []
    for m in ordered:
        names = list(m.constants) + list(m.variables) + [d.name for d in m.definitions] + [t.name for t in m.theorems]
        for n in names:
            if n in owner:
                raise FlattenError(f"{n} is declared in both {owner[n]} and {m.name}", "duplicate-name")
            owner[n] = m.name
        constants += m.constants
        variables += m.variables
        defs += m.definitions
        thms += m.theorems
    return ModuleAst(root.name, (), tuple(constants), tuple(variables), tuple(defs), tuple(thms))


# ---------------------------------------------------------------- signature


@dataclass
class Signature:
    """Name resolution and operator classification for a flattened module."""

    module: ModuleAst
    defs: dict[str, OperatorDef] = field(init=False)

    def __post_init__(self) -> None:
        self.defs = {d.name: d for d in self.module.definitions}

    @cached_property
    def constants(self) -> frozenset[str]:
        return frozenset(self.module.constants)

    @cached_property
    def variables(self) -> frozenset[str]:
        return frozenset(self.module.variables)

    def is_variable(self, name: str) -> bool:
        return name in self.variables

    @cached_property
    def substitutive(self) -> dict[str, bool]:
        from stepproof.rewrite import classify_substitutive

        env: dict[str, bool] = {}
        for d in self.module.definitions:
            env[d.name] = classify_substitutive(d, env)
        return env

    @cached_property
    def levels(self) -> dict[str, int]:
        """0 constant, 1 state, 2 action; parameters count as constants."""
        out: dict[str, int] = {}
        for d in self.module.definitions:
            out[d.name] = self.level(d.body, set(d.params), out)
        return out

    def level(self, e: Expr, bound: set[str], env: Optional[dict[str, int]] = None) -> int:
        env = self.levels if env is None else env
        if isinstance(e, Id):
            if e.name in bound:
                return 0
            if e.name in self.variables:
                return 1
            return env.get(e.name, 0)
        if isinstance(e, Prime) or (isinstance(e, Apply) and e.primed):
            return 2
        if isinstance(e, Apply):
            lv = env.get(e.op, 0)
            return max([lv] + [self.level(a, bound, env) for a in e.args])
        if isinstance(e, (Quant, Choose, SetFilter, FunLit)):
            inner = bound | {e.var}
            parts = [self.level(c, inner, env) for c in children(e)]
            return max(parts, default=0)
        return max((self.level(c, bound, env) for c in children(e)), default=0)


def check_module(module: ModuleAst) -> None:
    """Scope checks on a flattened module; raises :class:`ScopeError`."""
    declared = set(module.constants) | set(module.variables) | BUILTIN_CONSTANTS
    arity: dict[str, int] = {}

    def check(e: Expr, bound: frozenset[str], line: int, where: str) -> None:
        if isinstance(e, Id):
            if e.name in bound or e.name in declared:
                return
            if e.name in arity:
                if arity[e.name] != 0:
                    raise ScopeError(f"{where}: operator {e.name} expects {arity[e.name]} arguments", line)
                return
            raise ScopeError(f"{where}: unknown identifier {e.name}", line)
        if isinstance(e, (Apply, SubRef)):
            name = e.op if isinstance(e, Apply) else e.target
            if name not in arity:
                raise ScopeError(f"{where}: unknown operator {name}", line)
            if arity[name] != len(e.args):
                raise ScopeError(f"{where}: operator {name} expects {arity[name]} arguments, got {len(e.args)}", line)
        if isinstance(e, (Quant, Choose, SetFilter, FunLit)):
            if e.var in declared or e.var in arity or e.var in bound:
                raise ScopeError(f"{where}: bound name {e.var} shadows an existing name", line)
            if isinstance(e, (Quant, Choose)):
                if e.bound is not None:
                    check(e.bound, bound, line, where)
                check(e.body, bound | {e.var}, line, where)
            elif isinstance(e, SetFilter):
                check(e.bound, bound, line, where)
                check(e.pred, bound | {e.var}, line, where)
            else:
                check(e.domain, bound, line, where)
                check(e.body, bound | {e.var}, line, where)
            return
        if isinstance(e, Label):
            check(e.expr, bound, line, where)
            return
        for c in children(e):
            check(c, bound, line, where)

    for d in module.definitions:
        for p in d.params:
            if p in declared or p in arity:
                raise ScopeError(f"parameter {p} of {d.name} shadows an existing name", d.line)
        if any(isinstance(x, Always) for x in walk(d.body)):
            raise ScopeError(f"temporal operator in definition of {d.name}", d.line)
        # only earlier definitions are in scope, which also rules out recursion
        check(d.body, frozenset(d.params), d.line, f"definition of {d.name}")
        arity[d.name] = len(d.params)
    for t in module.theorems:
        check(t.statement, frozenset(), t.line, f"theorem {t.name}")
