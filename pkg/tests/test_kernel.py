import ast
import copy
from pathlib import Path

import pytest

from stepproof import kernel
from stepproof.obligations import make_obligation, module_obligations
from stepproof.parser import parse_expr, parse_module
from stepproof.tableau import Budget, prove_obligation
from stepproof.tracefmt import Close, ProofTrace, RuleNode, dumps, iter_nodes, loads

SOURCES = {
    "and": ((), "a /\\ b => b /\\ a"),
    "eq": (("e = f",), "O(e) = O(f)"),
    "exists": ((), "(\\E x : P(x)) /\\ (\\E y : Q(y)) => (\\E x : P(x) /\\ TRUE) /\\ (\\E y : Q(y) \\/ FALSE)"),
    "enum": ((), "\\A x \\in {1, 2} : x >= 1"),
    "arith": (("x = 1",), "x + 1 = 2"),
    "empty": ((), "x \\in {} => FALSE"),
    "lemma": (("n \\in Nat",), "n + 0 = n"),
    "constant": ((), "(\\E x : P(x, a)) => \\E y : P(y, a)"),
}


def obligation(key: str):
    hyps, goal = SOURCES[key]
    return make_obligation([(f"h{i}", parse_expr(h)) for i, h in enumerate(hyps)], parse_expr(goal))


def proof(key: str):
    ob = obligation(key)
    res = prove_obligation(ob, use_lemmas=key == "lemma")
    assert res.proved and kernel.check(ob, res.trace).accepted
    return ob, res.trace


def first(trace: ProofTrace, pred):
    return next(n for n in iter_nodes(trace.root) if n is not None and pred(n))


def rule_node(name: str):
    return lambda n: isinstance(n, RuleNode) and n.rule == name


def close_node(kind: str):
    return lambda n: isinstance(n, Close) and n.rule == kind


def text_edit(old: str, new: str, count: int = -1):
    def mutate(trace: ProofTrace, ob):
        text = dumps(trace)
        assert old in text, old
        return loads(text.replace(old, new, count)), ob
    return mutate


def node_edit(pred, change):
    def mutate(trace: ProofTrace, ob):
        t = copy.deepcopy(trace)
        change(first(t, pred))
        return t, ob
    return mutate


def drop_first_closure(trace, ob):
    t = copy.deepcopy(trace)
    for n in iter_nodes(t.root):
        if isinstance(n, RuleNode):
            for i, (added, child) in enumerate(n.branches):
                if isinstance(child, Close):
                    n.branches[i] = (added, None)
                    return t, ob
    raise AssertionError("no closure found")


def truncate_root(trace, ob):
    return ProofTrace(trace.fingerprint, None), ob


def other_obligation(trace, ob):
    return trace, obligation("empty")


def forged_invalid_obligation(trace, ob):
    """Reuse a proof of x + 1 = 2 for the false claim x + 1 = 3."""
    bad = make_obligation([("h0", parse_expr("x = 1"))], parse_expr("x + 1 = 3"))
    text = dumps(trace).replace(ob.id, bad.id).replace("= 2", "= 3")
    return loads(text), bad


def set_field(attr, value):
    return lambda n: setattr(n, attr, value)


def keep_one_branch(n):
    n.branches = n.branches[:1]


def swap_branches(n):
    n.branches = n.branches[::-1]


def neq_refl_on_distinct_terms(trace, ob):
    return ProofTrace(trace.fingerprint, Close("neq-refl", ("~O(e) = O(f)",))), ob


def intro_on_alpha(n):
    n.intros = (("sk9", "CHOOSE x : a"),)


MUTATIONS = [
    ("dropped closure", "and", drop_first_closure, "unclosed-branch"),
    ("empty proof", "and", truncate_root, "unclosed-branch"),
    ("replayed on another obligation", "and", other_obligation, "fingerprint-mismatch"),
    ("edited fingerprint", "and", text_edit('(trace "', '(trace "0'), "fingerprint-mismatch"),
    ("forged proof of a false claim", "arith", forged_invalid_obligation, "malformed-instance"),
    ("unknown rule", "and", node_edit(rule_node("and"), set_field("rule", "and-magic")), "unknown-rule"),
    ("unknown closure", "and", node_edit(close_node("contra"), set_field("rule", "magic")), "unknown-rule"),
    ("swapped closing formulas", "and", node_edit(close_node("contra"), lambda n: setattr(n, "formulas", n.formulas[::-1])),
     "malformed-instance"),
    ("closing formula not on branch", "and", node_edit(close_node("contra"), set_field("formulas", ("c", "~c"))),
     "malformed-instance"),
    ("altered alpha conclusion", "and", text_edit('(branch ("a" "b")', '(branch ("a" "c")'), "malformed-instance"),
    ("dropped alpha conclusion", "and", text_edit('(branch ("a" "b")', '(branch ("a")'), "malformed-instance"),
    ("missing beta branch", "and", node_edit(rule_node("not-and"), keep_one_branch), "malformed-instance"),
    ("swapped beta branches", "and", node_edit(rule_node("not-and"), swap_branches), "malformed-instance"),
    ("premise not on branch", "and", text_edit('(prem "a /\\\\ b")', '(prem "a /\\\\ c")'), "malformed-instance"),
    ("smuggled conclusion", "and", text_edit('(branch ("a" "b")', '(branch ("a" "b" "FALSE")'), "malformed-instance"),
    ("garbage formula", "and", text_edit('(prem "a /\\\\ b")', '(prem "a /\\\\ (")'), "malformed-instance"),
    ("flipped rewrite direction", "eq", text_edit('(args "rl")', '(args "lr")'), "malformed-instance"),
    ("equation not on branch", "eq", text_edit('(prem "e = f"', '(prem "e = g"'), "malformed-instance"),
    ("reflexivity closure on distinct terms", "eq", neq_refl_on_distinct_terms, "malformed-instance"),
    ("witness named like an obligation constant", "constant", text_edit("sk1", "a"), "non-fresh-term"),
    ("stale witness reused for another term", "exists", text_edit("sk2", "sk1"), "non-fresh-term"),
    ("altered witness definition", "exists", text_edit('"CHOOSE x : P(x)"', '"CHOOSE x : Q(x)"'), "malformed-instance"),
    ("witness introduced by a non-delta rule", "and", node_edit(rule_node("and"), intro_on_alpha), "malformed-instance"),
    ("instance does not match its term", "exists", text_edit('(args "?sk1") (branch ("~(P(?sk1)',
                                                             '(args "?sk2") (branch ("~(P(?sk1)', 1),
     "malformed-instance"),
    ("missing enumeration case", "enum", node_edit(rule_node("not-forall-enum"), keep_one_branch), "malformed-instance"),
    ("unknown lemma", "lemma", node_edit(rule_node("lemma"), set_field("args", ("Bogus",))), "malformed-instance"),
    ("closure of the wrong kind", "and", node_edit(close_node("contra"), set_field("rule", "false")),
     "malformed-instance"),
]


@pytest.mark.parametrize("name,key,mutate,reason", MUTATIONS, ids=[m[0] for m in MUTATIONS])
def test_mutated_traces_are_rejected(name, key, mutate, reason):
    ob, trace = proof(key)
    bad, target = mutate(trace, ob)
    verdict = kernel.check(target, bad)
    assert not verdict.accepted, name
    assert verdict.reason == reason, verdict


def test_curated_suite_has_at_least_twenty_cases():
    assert len(MUTATIONS) >= 20
    assert len({m[0] for m in MUTATIONS}) == len(MUTATIONS)


def test_unmutated_sources_are_accepted():
    for key in SOURCES:
        proof(key)


def test_rejection_reports_a_position():
    ob, trace = proof("and")
    bad, _ = drop_first_closure(trace, ob)
    verdict = kernel.check(ob, bad)
    assert verdict.position > 0 and verdict.detail


# ---------------------------------------------------------------- audit table


def test_audit_table_contents_and_determinism():
    rows = kernel.audit_rule_table()
    assert rows == kernel.audit_rule_table()
    schemas = dict(rows)
    assert schemas["and"] == "alpha-and: from A /\\ B derive A, B"
    assert "\\A x \\in S : P and t \\in S derive P[t/x]" in schemas["forall-member"]
    assert len(rows) == len(set(name for name, _ in rows))


def test_kernel_does_not_depend_on_the_prover():
    src = Path(kernel.__file__).read_text()
    imported = set()
    for node in ast.walk(ast.parse(src)):
        if isinstance(node, ast.ImportFrom):
            imported.add(node.module)
        elif isinstance(node, ast.Import):
            imported.update(a.name for a in node.names)
    assert not any(m and "tableau" in m for m in imported)
    assert not any(m and "rewrite" in m for m in imported)


# ---------------------------------------------------------------- corpus certification


def test_every_corpus_trace_is_accepted():
    corpus = Path(__file__).parent.parent / "corpus"
    checked = 0
    for path in sorted(corpus.glob("*.mt")):
        for ob in module_obligations(parse_module(path.read_text())):
            if ob.status_hint != "normal" or ob.pragmas:
                continue
            res = prove_obligation(ob, Budget(5, 50_000))
            if not res.proved:
                res = prove_obligation(ob, Budget(10, 400_000), use_lemmas=True)
            assert res.proved, ob.label if hasattr(ob, "label") else ob.id
            assert kernel.check(ob, loads(dumps(res.trace))).accepted
            checked += 1
    assert checked >= 50
