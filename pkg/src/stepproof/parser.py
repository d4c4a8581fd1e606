"""Lexer and recursive-descent parser for the module/proof language.

Operator precedence, loosest first::

    <=>   =>   \\/   /\\   ~   (= # < =< > >= \\in \\notin \\subseteq)
    ..   (\\cup \\cap \\)   (+ -)   (* \\div %)   unary -   postfix ' f[x]

Quantifiers, CHOOSE, IF and CASE extend as far to the right as possible.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from stepproof.syntax import (
    ActionBox, Always, Apply, AssertStep, Bool, Case, Choose, Dec, Expr, FunApp,
    FunLit, Hashed, Id, If, Label, Leaf, ModuleAst, Num, OpApp, OperatorDef, Prime,
    ProofNode, QedStep, Quant, Sequence, SetEnum, SetFilter, StepRef, Str, SubRef,
    Theorem, Tuple, UseStep, Witness, contains_prime, walk,
)


class ParseError(Exception):
    """Syntax or well-formedness error with a source position."""

    def __init__(self, message: str, line: int = 0, col: int = 0, kind: str = "syntax"):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col
        self.kind = kind

    def format(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.line}:{self.col}: error: {self.message}"


KEYWORDS = {
    "MODULE", "EXTENDS", "CONSTANT", "CONSTANTS", "VARIABLE", "VARIABLES",
    "THEOREM", "LEMMA", "COROLLARY", "PROOF", "BY", "OBVIOUS", "OMITTED",
    "DEF", "DEFS", "QED", "USE", "CHOOSE", "IF", "THEN", "ELSE", "CASE",
    "OTHER", "TRUE", "FALSE", "SUBSET", "DOMAIN", "UNCHANGED",
}

BACKSLASH_WORDS = {
    "\\A": "\\A", "\\E": "\\E", "\\in": "\\in", "\\notin": "\\notin",
    "\\cup": "\\cup", "\\union": "\\cup", "\\cap": "\\cap", "\\intersect": "\\cap",
    "\\subseteq": "\\subseteq", "\\div": "\\div", "\\lnot": "~", "\\neg": "~",
    "\\land": "/\\", "\\lor": "\\/", "\\equiv": "<=>",
}

SYMBOLS = [
    "<=>", "|->", "/\\", "\\/", "=>", "==", "=<", "<=", ">=", "/=", "::", "..",
    "->", "[]", "<<", ">>", "=", "#", "<", ">", "+", "-", "*", "%", "~", "(",
    ")", "{", "}", "[", "]", ",", ":", "'", "!", "_", "\\",
]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<linecomment>\\\*[^\n]*)
  | (?P<blockcomment>\(\*)
  | (?P<sep>-{4,})
  | (?P<end>={4,})
  | (?P<step><(?P<lvl>\d+)>(?P<sname>[A-Za-z0-9_]*)\.?)
  | (?P<dec>\d+\.\d+)
  | (?P<num>\d+)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
  | (?P<witness>\?[A-Za-z_][A-Za-z0-9_]*)
  | (?P<hashed>\$(?P<role>[ft])(?P<hex>[0-9a-f]+))
  | (?P<bsword>\\[A-Za-z]+)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident num dec str kw op step sep end witness hashed eof
    value: object
    line: int
    col: int


def tokenize(source: str, internal: bool = False) -> list[Token]:
    toks: list[Token] = []
    i, line, line_start = 0, 1, 0
    n = len(source)
    while i < n:
        col = i - line_start + 1
        m = _TOKEN_RE.match(source, i)
        if m is not None:
            kind = m.lastgroup
            # lastgroup reports the innermost named group; normalize.
            for k in ("ws", "nl", "linecomment", "blockcomment", "sep", "end", "step",
                      "dec", "num", "str", "ident", "witness", "hashed", "bsword"):
                if m.group(k) is not None:
                    kind = k
                    break
            text = m.group(0)
            if kind == "ws" or kind == "linecomment":
                i = m.end()
                continue
            if kind == "nl":
                i = m.end()
                line += 1
                line_start = i
                continue
            if kind == "blockcomment":
                depth, j = 1, m.end()
                while j < n and depth:
                    if source.startswith("(*", j):
                        depth += 1
                        j += 2
                    elif source.startswith("*)", j):
                        depth -= 1
                        j += 2
                    else:
                        if source[j] == "\n":
                            line += 1
                            line_start = j + 1
                        j += 1
                if depth:
                    raise ParseError("unterminated comment", line, col)
                i = j
                continue
            if kind == "step":
                toks.append(Token("step", StepRef(int(m.group("lvl")), m.group("sname")), line, col))
            elif kind == "dec":
                toks.append(Token("dec", text, line, col))
            elif kind == "num":
                toks.append(Token("num", int(text), line, col))
            elif kind == "str":
                body = text[1:-1].replace('\\"', '"').replace("\\\\", "\\")
                toks.append(Token("str", body, line, col))
            elif kind == "ident":
                toks.append(Token("kw" if text in KEYWORDS else "ident", text, line, col))
            elif kind in ("witness", "hashed"):
                if not internal:
                    raise ParseError(f"unexpected character {text[0]!r}", line, col)
                if kind == "witness":
                    toks.append(Token("witness", text[1:], line, col))
                else:
                    toks.append(Token("hashed", (m.group("hex"), m.group("role")), line, col))
            elif kind == "bsword":
                if text == "\\X":
                    raise ParseError("unsupported operator \\X", line, col)
                if text in BACKSLASH_WORDS:
                    toks.append(Token("op", BACKSLASH_WORDS[text], line, col))
                else:
                    # a lone backslash (set difference) followed by a word
                    toks.append(Token("op", "\\", line, col))
                    i += 1
                    continue
            else:
                toks.append(Token(kind, text, line, col))
            i = m.end()
            continue
        for sym in SYMBOLS:
            if source.startswith(sym, i):
                toks.append(Token("op", sym, line, col))
                i += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {source[i]!r}", line, col)
    toks.append(Token("eof", None, line, i - line_start + 1))
    return toks


BINARY = {
    "<=>": (1, "equiv", "left"),
    "=>": (2, "implies", "right"),
    "\\/": (3, "or", "left"),
    "/\\": (4, "and", "left"),
    "=": (6, "eq", "none"),
    "#": (6, "neq", "none"),
    "/=": (6, "neq", "none"),
    "<": (6, "lt", "none"),
    "=<": (6, "le", "none"),
    "<=": (6, "le", "none"),
    ">": (6, "gt", "none"),
    ">=": (6, "ge", "none"),
    "\\in": (6, "in", "none"),
    "\\notin": (6, "notin", "none"),
    "\\subseteq": (6, "subseteq", "none"),
    "..": (7, "range", "none"),
    "\\cup": (8, "cup", "left"),
    "\\cap": (8, "cap", "left"),
    "\\": (8, "setminus", "left"),
    "+": (9, "plus", "left"),
    "-": (9, "minus", "left"),
    "*": (10, "times", "left"),
    "\\div": (10, "div", "left"),
    "%": (10, "mod", "left"),
}

NOT_PREC = 5
NEG_PREC = 11

_STOP_KEYWORDS = {"THEN", "ELSE", "OTHER"}


class Parser:
    def __init__(self, source: str, internal: bool = False):
        self.toks = tokenize(source, internal)
        self.pos = 0
        self.internal = internal
        self.allow_temporal = False

    # ------------------------------------------------------------ helpers

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.toks[self.pos]
        if self.pos < len(self.toks) - 1:
            self.pos += 1
        return t

    def at(self, kind: str, value: object = None) -> bool:
        t = self.tok
        return t.kind == kind and (value is None or t.value == value)

    def at_op(self, value: str) -> bool:
        return self.at("op", value)

    def at_kw(self, value: str) -> bool:
        return self.at("kw", value)

    def error(self, message: str, tok: Optional[Token] = None, kind: str = "syntax") -> ParseError:
        t = tok or self.tok
        return ParseError(message, t.line, t.col, kind)

    def describe(self, t: Token) -> str:
        if t.kind == "eof":
            return "end of input"
        if t.kind == "step":
            return f"step label {t.value}"
        return repr(str(t.value))

    def expect_op(self, value: str) -> Token:
        if not self.at_op(value):
            raise self.error(f"expected {value!r}, found {self.describe(self.tok)}")
        return self.advance()

    def expect_kw(self, value: str) -> Token:
        if not self.at_kw(value):
            raise self.error(f"expected {value}, found {self.describe(self.tok)}")
        return self.advance()

    def expect_ident(self) -> str:
        if not self.at("ident"):
            raise self.error(f"expected identifier, found {self.describe(self.tok)}")
        return str(self.advance().value)

    # ------------------------------------------------------------ expressions

    def parse_expr(self) -> Expr:
        return self.parse_binary(0)

    def parse_binary(self, min_prec: int) -> Expr:
        # leading bullet of a conjunction/disjunction list
        if self.at_op("/\\") or self.at_op("\\/"):
            self.advance()
        left = self.parse_unary(min_prec)
        while True:
            t = self.tok
            if t.kind != "op" or t.value not in BINARY:
                return left
            prec, name, assoc = BINARY[t.value]
            if prec < min_prec:
                return left
            self.advance()
            right = self.parse_binary(prec if assoc == "right" else prec + 1)
            left = OpApp(name, (left, right))
            if assoc == "none":
                nt = self.tok
                if nt.kind == "op" and nt.value in BINARY and BINARY[nt.value][0] == prec:
                    raise self.error(f"operator {nt.value!r} is not associative; add parentheses")

    def parse_unary(self, min_prec: int) -> Expr:
        if self.at_op("~"):
            self.advance()
            return OpApp("not", (self.parse_binary(max(NOT_PREC, min_prec)),))
        if self.at_op("-"):
            self.advance()
            return OpApp("neg", (self.parse_binary(max(NEG_PREC, min_prec)),))
        for kw, op in (("SUBSET", "powerset"), ("DOMAIN", "domain"), ("UNCHANGED", "unchanged")):
            if self.at_kw(kw):
                self.advance()
                return OpApp(op, (self.parse_binary(NEG_PREC),))
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        e = self.parse_primary()
        while True:
            if self.at_op("'"):
                t = self.advance()
                if contains_prime(e):
                    raise ParseError("double priming is not allowed", t.line, t.col, "double-prime")
                e = Prime(e)
            elif self.at_op("["):
                self.advance()
                arg = self.parse_expr()
                self.expect_op("]")
                e = FunApp(e, arg)
            else:
                return e

    def parse_args(self) -> tuple[Expr, ...]:
        self.expect_op("(")
        args = [self.parse_expr()]
        while self.at_op(","):
            self.advance()
            args.append(self.parse_expr())
        self.expect_op(")")
        return tuple(args)

    def parse_list(self, close: str) -> tuple[Expr, ...]:
        items: list[Expr] = []
        if self.at_op(close):
            self.advance()
            return ()
        items.append(self.parse_expr())
        while self.at_op(","):
            self.advance()
            items.append(self.parse_expr())
        self.expect_op(close)
        return tuple(items)

    def parse_path(self) -> tuple:
        path: list = []
        while self.at_op("!"):
            self.advance()
            if self.at("num"):
                t = self.advance()
                if t.value < 1:
                    raise ParseError("positional indices start at 1", t.line, t.col)
                path.append(int(t.value))
            else:
                path.append(self.expect_ident())
        return tuple(path)

    def parse_binders(self) -> list[tuple[str, Optional[Expr]]]:
        """``x, y \\in S, z : ...`` up to (not including) the colon."""
        out: list[tuple[str, Optional[Expr]]] = []
        pending: list[str] = []
        while True:
            pending.append(self.expect_ident())
            if self.at_op("\\in"):
                self.advance()
                bound = self.parse_binary(7)
                out.extend((v, bound) for v in pending)
                pending = []
            if self.at_op(","):
                self.advance()
                continue
            break
        out.extend((v, None) for v in pending)
        return out

    def parse_primary(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(int(t.value))
        if t.kind == "dec":
            self.advance()
            return Dec(str(t.value))
        if t.kind == "str":
            self.advance()
            return Str(str(t.value))
        if t.kind == "witness":
            self.advance()
            args = self.parse_args() if self.at_op("(") else ()
            return Witness(str(t.value), args)
        if t.kind == "hashed":
            self.advance()
            hexd, role = t.value
            return Hashed(hexd, "formula" if role == "f" else "term")
        if t.kind == "kw":
            return self.parse_keyword_expr()
        if t.kind == "ident":
            name = str(self.advance().value)
            if self.at_op("::"):
                self.advance()
                inner = self.parse_postfix()
                return Label(name, inner)
            if self.internal and self.at_op("'") and self.peek().kind == "op" and self.peek().value == "(":
                self.advance()
                return Apply(name, self.parse_args(), primed=True)
            if self.at_op("("):
                args = self.parse_args()
                if self.at_op("!"):
                    return SubRef(name, args, self.parse_path())
                return Apply(name, args)
            if self.at_op("!"):
                return SubRef(name, (), self.parse_path())
            return Id(name)
        if t.kind == "op":
            v = t.value
            if v == "(":
                self.advance()
                e = self.parse_expr()
                self.expect_op(")")
                return e
            if v == "{":
                return self.parse_set()
            if v == "[":
                return self.parse_function()
            if v == "<<":
                self.advance()
                return Tuple(self.parse_list(">>"))
            if v in ("\\A", "\\E"):
                self.advance()
                binders = self.parse_binders()
                self.expect_op(":")
                body = self.parse_expr()
                kind = "forall" if v == "\\A" else "exists"
                for var, bound in reversed(binders):
                    body = Quant(kind, var, bound, body)
                return body
            if v == "[]":
                if not self.allow_temporal:
                    raise self.error("temporal operator [] is only allowed in theorem statements")
                self.advance()
                if self.at_op("["):
                    self.advance()
                    action = self.parse_expr()
                    self.expect_op("]")
                    self.expect_op("_")
                    sub = self.parse_postfix()
                    return Always(ActionBox(action, sub))
                return Always(self.parse_postfix())
        raise self.error(f"unexpected {self.describe(t)} in expression")

    def parse_keyword_expr(self) -> Expr:
        t = self.tok
        v = t.value
        if v == "TRUE":
            self.advance()
            return Bool(True)
        if v == "FALSE":
            self.advance()
            return Bool(False)
        if v == "CHOOSE":
            self.advance()
            var = self.expect_ident()
            bound = None
            if self.at_op("\\in"):
                self.advance()
                bound = self.parse_binary(7)
            self.expect_op(":")
            return Choose(var, bound, self.parse_expr())
        if v == "IF":
            self.advance()
            c = self.parse_expr()
            self.expect_kw("THEN")
            a = self.parse_expr()
            self.expect_kw("ELSE")
            b = self.parse_expr()
            return If(c, a, b)
        if v == "CASE":
            self.advance()
            arms = []
            other = None
            while True:
                if self.at_kw("OTHER"):
                    self.advance()
                    self.expect_op("->")
                    other = self.parse_expr()
                    break
                p = self.parse_expr()
                self.expect_op("->")
                arms.append((p, self.parse_expr()))
                if self.at_op("[]"):
                    self.advance()
                    continue
                break
            if not arms:
                raise self.error("CASE needs at least one arm")
            return Case(tuple(arms), other)
        if v in ("SUBSET", "DOMAIN", "UNCHANGED"):
            return self.parse_unary(0)
        raise self.error(f"unexpected keyword {v} in expression")

    def parse_set(self) -> Expr:
        self.expect_op("{")
        if self.at_op("}"):
            self.advance()
            return SetEnum(())
        if self.at("ident") and self.peek().kind == "op" and self.peek().value == "\\in":
            save = self.pos
            var = str(self.advance().value)
            self.advance()
            bound = self.parse_binary(7)
            if self.at_op(":"):
                self.advance()
                pred = self.parse_expr()
                self.expect_op("}")
                return SetFilter(var, bound, pred)
            self.pos = save
        return SetEnum(self.parse_list("}"))

    def parse_function(self) -> Expr:
        self.expect_op("[")
        var = self.expect_ident()
        self.expect_op("\\in")
        dom = self.parse_expr()
        self.expect_op("|->")
        body = self.parse_expr()
        self.expect_op("]")
        return FunLit(var, dom, body)

    # ------------------------------------------------------------ proofs

    def parse_fact_list(self) -> tuple[tuple, tuple]:
        facts: list = []
        defs: list[str] = []
        while self.at("step") or self.at("ident"):
            t = self.advance()
            facts.append(t.value if t.kind == "step" else str(t.value))
            if not self.at_op(","):
                break
            self.advance()
        if self.at_kw("DEF") or self.at_kw("DEFS"):
            self.advance()
            defs.append(self.expect_ident())
            while self.at_op(","):
                self.advance()
                defs.append(self.expect_ident())
        return tuple(facts), tuple(defs)

    def parse_proof_opt(self, parent_level: int) -> Optional[ProofNode]:
        if self.at_kw("PROOF"):
            self.advance()
        t = self.tok
        if self.at_kw("BY"):
            self.advance()
            facts, defs = self.parse_fact_list()
            if not facts and not defs:
                raise self.error("BY needs at least one fact or definition")
            return Leaf("BY", facts, defs, line=t.line)
        if self.at_kw("OBVIOUS"):
            self.advance()
            return Leaf("OBVIOUS", line=t.line)
        if self.at_kw("OMITTED"):
            self.advance()
            return Leaf("OMITTED", line=t.line)
        if t.kind == "step" and t.value.level > parent_level:
            return self.parse_sequence(t.value.level)
        return None

    def parse_sequence(self, level: int) -> Sequence:
        steps: list[ProofNode] = []
        names: set[str] = set()
        while self.at("step") and self.tok.value.level == level:
            t = self.advance()
            name = t.value.name
            if name:
                if name in names:
                    raise ParseError(f"duplicate step label <{level}>{name}", t.line, t.col, "duplicate-label")
                names.add(name)
            if self.at_kw("QED"):
                self.advance()
                steps.append(QedStep(level, name, self.parse_proof_opt(level), line=t.line))
                return Sequence(tuple(steps))
            if self.at_kw("USE"):
                self.advance()
                facts, defs = self.parse_fact_list()
                if not facts and not defs:
                    raise self.error("USE needs at least one fact or definition")
                steps.append(UseStep(level, facts, defs, name, line=t.line))
                continue
            if not name:
                raise ParseError("assertion steps need a label", t.line, t.col)
            assertion = self.parse_expr()
            steps.append(AssertStep(level, name, assertion, self.parse_proof_opt(level), line=t.line))
        if self.at("step") and self.tok.value.level > level:
            raise self.error(f"step {self.tok.value} cannot start here")
        raise self.error(f"proof at level <{level}> must end with a QED step")

    # ------------------------------------------------------------ modules

    def parse_module(self) -> ModuleAst:
        self.expect_sep()
        self.expect_kw("MODULE")
        name = self.expect_ident()
        self.expect_sep()
        extends: list[str] = []
        constants: list[str] = []
        variables: list[str] = []
        defs: list[OperatorDef] = []
        thms: list[Theorem] = []
        seen: dict[str, Token] = {}

        def declare(n: str, t: Token) -> None:
            if n in seen:
                raise ParseError(f"duplicate declaration of {n}", t.line, t.col, "duplicate-definition")
            seen[n] = t

        while not self.at("end"):
            t = self.tok
            if self.at("eof"):
                raise self.error("missing module terminator ====")
            if self.at("sep"):
                self.advance()
                continue
            if self.at_kw("EXTENDS"):
                self.advance()
                extends.extend(self.ident_list())
            elif self.at_kw("CONSTANT") or self.at_kw("CONSTANTS"):
                self.advance()
                for n in self.ident_list():
                    declare(n, t)
                    constants.append(n)
            elif self.at_kw("VARIABLE") or self.at_kw("VARIABLES"):
                self.advance()
                for n in self.ident_list():
                    declare(n, t)
                    variables.append(n)
            elif self.at_kw("THEOREM") or self.at_kw("LEMMA") or self.at_kw("COROLLARY"):
                self.advance()
                nt = self.tok
                tname = self.expect_ident()
                declare(tname, nt)
                self.expect_op("==")
                self.allow_temporal = True
                try:
                    stmt = self.parse_expr()
                finally:
                    self.allow_temporal = False
                thms.append(Theorem(tname, stmt, self.parse_proof_opt(0), line=t.line))
            elif self.at("ident"):
                dname = self.expect_ident()
                declare(dname, t)
                params: list[str] = []
                if self.at_op("("):
                    self.advance()
                    params.append(self.expect_ident())
                    while self.at_op(","):
                        self.advance()
                        params.append(self.expect_ident())
                    self.expect_op(")")
                if len(set(params)) != len(params):
                    raise ParseError(f"repeated parameter in definition of {dname}", t.line, t.col)
                self.expect_op("==")
                body = self.parse_expr()
                check_labels(body, t)
                defs.append(OperatorDef(dname, tuple(params), body, line=t.line))
            else:
                raise self.error(f"unexpected {self.describe(t)} at module level")
        self.advance()
        if not self.at("eof"):
            raise self.error("text after module terminator")
        return ModuleAst(name, tuple(extends), tuple(constants), tuple(variables), tuple(defs), tuple(thms))

    def expect_sep(self) -> None:
        if not self.at("sep"):
            raise self.error(f"expected ----, found {self.describe(self.tok)}")
        self.advance()

    def ident_list(self) -> list[str]:
        out = [self.expect_ident()]
        while self.at_op(","):
            self.advance()
            out.append(self.expect_ident())
        return out


def check_labels(body: Expr, at: Token) -> None:
    seen: set[str] = set()
    for node in walk(body):
        if isinstance(node, Label):
            if node.name in seen:
                raise ParseError(f"duplicate label {node.name}", at.line, at.col, "duplicate-label")
            seen.add(node.name)


def parse_module(source: str) -> ModuleAst:
    """Parse one module; raises :class:`ParseError` on any defect."""
    return Parser(source).parse_module()


def parse_expr(source: str, internal: bool = False, temporal: bool = False) -> Expr:
    """Parse a standalone expression.

    ``internal`` admits the notation used only in obligation dumps and traces
    (witness terms ``?w``, hashed atoms ``$f..`` and primed operators ``O'(a)``).
    """
    p = Parser(source, internal)
    p.allow_temporal = temporal
    e = p.parse_expr()
    if not p.at("eof"):
        raise p.error(f"unexpected {p.describe(p.tok)} after expression")
    return e
