"""Proof trace data and its parenthesized text format.

Grammar (formulas are printed expressions inside double quotes, with ``\\``
and ``"`` escaped by a backslash)::

    trace  := (trace "<fingerprint>" node)
    node   := (close RULE "formula"...)
            | (rule NAME (prem "formula"...) (args "text"...) intro* branch*)
    intro  := (intro "name" "definition")
    branch := (branch ("formula"...) node)

A ``rule`` node with no branch is itself closing (for instance membership in
the empty set). The writer and the reader are iterative so that long
single-branch chains do not hit the interpreter's recursion limit.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union


@dataclass
class Close:
    rule: str
    formulas: tuple[str, ...]


@dataclass
class RuleNode:
    rule: str
    prems: tuple[str, ...]
    args: tuple[str, ...] = ()
    intros: tuple[tuple[str, str], ...] = ()
    branches: list[tuple[tuple[str, ...], "Node"]] = field(default_factory=list)


Node = Union[Close, RuleNode, None]


@dataclass
class ProofTrace:
    fingerprint: str
    root: Node


class TraceSyntaxError(ValueError):
    pass


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def dumps(trace: ProofTrace) -> str:
    out: list[str] = [f"(trace {_q(trace.fingerprint)}"]
    # stack of pending text pieces / nodes, processed in order
    stack: list[Union[str, Node]] = [")"]
    stack.append(trace.root)
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            out.append(item)
            continue
        if item is None:
            out.append(" (open)")
            continue
        if isinstance(item, Close):
            out.append(f"\n(close {item.rule}" + "".join(" " + _q(f) for f in item.formulas) + ")")
            continue
        head = [f"\n(rule {item.rule} (prem" + "".join(" " + _q(p) for p in item.prems) + ")"]
        head.append(" (args" + "".join(" " + _q(a) for a in item.args) + ")")
        for name, d in item.intros:
            head.append(f" (intro {_q(name)} {_q(d)})")
        out.append("".join(head))
        stack.append(")")
        for added, child in reversed(item.branches):
            stack.append(")")
            stack.append(child)
            stack.append(" (branch (" + " ".join(_q(a) for a in added) + ")")
    return "".join(out) + "\n"


_TOKEN = re.compile(r'\s*(?:(\()|(\))|"((?:[^"\\]|\\.)*)"|([^\s()"]+))')


def _tokens(text: str) -> list[tuple[str, str]]:
    toks = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise TraceSyntaxError(f"unexpected character at offset {pos}")
        pos = m.end()
        if m.group(1):
            toks.append(("(", "("))
        elif m.group(2):
            toks.append((")", ")"))
        elif m.group(3) is not None:
            toks.append(("str", re.sub(r"\\(.)", r"\1", m.group(3))))
        elif m.group(4):
            toks.append(("sym", m.group(4)))
    return toks


def _sexprs(text: str):
    """Nested lists of ``("str", s)``/``("sym", s)`` leaves; iterative."""
    stack: list[list] = [[]]
    for kind, val in _tokens(text):
        if kind == "(":
            stack.append([])
        elif kind == ")":
            if len(stack) == 1:
                raise TraceSyntaxError("unbalanced parenthesis")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append((kind, val))
    if len(stack) != 1 or len(stack[0]) != 1:
        raise TraceSyntaxError("expected exactly one top-level expression")
    return stack[0][0]


def _sym(x) -> str:
    if isinstance(x, tuple) and x[0] == "sym":
        return x[1]
    raise TraceSyntaxError(f"expected a symbol, got {x!r}")


def _str(x) -> str:
    if isinstance(x, tuple) and x[0] == "str":
        return x[1]
    raise TraceSyntaxError(f"expected a string, got {x!r}")


def _tagged(x, tag: str) -> list:
    if not isinstance(x, list) or not x or _sym(x[0]) != tag:
        raise TraceSyntaxError(f"expected ({tag} ...)")
    return x[1:]


def loads(text: str) -> ProofTrace:
    top = _sexprs(text)
    body = _tagged(top, "trace")
    if len(body) != 2:
        raise TraceSyntaxError("trace needs a fingerprint and a root node")
    fp = _str(body[0])
    root_holder: list[Node] = [None]
    # work items: (sexpr, setter)
    work = [(body[1], lambda n: root_holder.__setitem__(0, n))]
    while work:
        sx, setter = work.pop()
        if not isinstance(sx, list) or not sx:
            raise TraceSyntaxError("expected a node")
        tag = _sym(sx[0])
        if tag == "open":
            setter(None)
        elif tag == "close":
            if len(sx) < 2:
                raise TraceSyntaxError("close needs a rule name")
            setter(Close(_sym(sx[1]), tuple(_str(f) for f in sx[2:])))
        elif tag == "rule":
            if len(sx) < 4:
                raise TraceSyntaxError("rule needs a name, premises and arguments")
            node = RuleNode(_sym(sx[1]), tuple(_str(p) for p in _tagged(sx[2], "prem")),
                            tuple(_str(a) for a in _tagged(sx[3], "args")))
            intros = []
            rest = sx[4:]
            while rest and isinstance(rest[0], list) and rest[0] and rest[0][0] == ("sym", "intro"):
                parts = _tagged(rest[0], "intro")
                if len(parts) != 2:
                    raise TraceSyntaxError("intro needs a name and a definition")
                intros.append((_str(parts[0]), _str(parts[1])))
                rest = rest[1:]
            node.intros = tuple(intros)
            for br in rest:
                parts = _tagged(br, "branch")
                if len(parts) != 2 or not isinstance(parts[0], list):
                    raise TraceSyntaxError("branch needs an added-formula list and a node")
                added = tuple(_str(a) for a in parts[0])
                slot = len(node.branches)
                node.branches.append((added, None))
                work.append((parts[1], _branch_setter(node, slot)))
            setter(node)
        else:
            raise TraceSyntaxError(f"unknown node kind {tag}")
    return ProofTrace(fp, root_holder[0])


def _branch_setter(node: RuleNode, slot: int):
    def put(child: Node) -> None:
        added, _ = node.branches[slot]
        node.branches[slot] = (added, child)
    return put


def iter_nodes(root: Node):
    stack = [root]
    while stack:
        n = stack.pop()
        yield n
        if isinstance(n, RuleNode):
            stack.extend(child for _, child in reversed(n.branches))
