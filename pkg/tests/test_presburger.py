import random

import pytest

from stepproof import presburger as pb
from stepproof.obligations import make_obligation
from stepproof.parser import parse_expr

import cooper_oracle as oracle


def decide(goal: str, *hyps: str) -> pb.Decision:
    return pb.decide_formulas([parse_expr(h) for h in hyps], parse_expr(goal))


def to_formula(s: oracle.Sentence) -> pb.Formula:
    """The oracle's sentence built directly with the backend's constructors."""
    names = [f"x{k}" for k in range(s.arity)]

    def lin(a):
        return pb.Lin({v: c for v, c in zip(names, a.coeffs) if c}, a.const)

    def go(m):
        if m[0] == "atom":
            a = m[1]
            if a.kind == "dvd":
                return pb.dvd(a.modulus, lin(a))
            return {"lt": pb.lt, "le": pb.le, "eq": pb.eq}[a.kind](lin(a))
        if m[0] == "not":
            return pb.neg(go(m[1]))
        return (pb.conj if m[0] == "and" else pb.disj)([go(m[1]), go(m[2])])

    f = go(s.matrix)
    for q, v in reversed(list(zip(s.quants, names))):
        f = pb.PEx(v, f) if q == "E" else pb.PAll(v, f)
    return f


def sentences(seed: int, count: int, max_cells: int = 2_000_000):
    """Random sentences whose search windows are small enough to enumerate."""
    rng = random.Random(seed)
    out, rejected = [], 0
    while len(out) < count:
        s = oracle.random_sentence(rng)
        if oracle.cells(s) > max_cells:
            rejected += 1
            continue
        out.append(s)
    return out, rejected


# ---------------------------------------------------------------- injection


def test_nat_membership_becomes_nonnegativity():
    f, imap = pb.inject(parse_expr("x \\in Nat /\\ x + 0 = x"))
    assert imap.variables == {"x": "v1"}
    assert pb.format_formula(f) == pb.format_formula(pb.le(pb.Lin({"v1": -1})))


def test_foreign_application_is_one_variable():
    f, imap = pb.inject(parse_expr("f(3) < f(3) + 1"))
    assert imap.variables == {"f(3)": "v1"}
    assert f is True  # v1 < v1 + 1 normalizes away


def test_set_goal_is_not_applicable():
    assert decide("S \\cup T = T \\cup S").verdict == "not-applicable"


def test_foreign_term_over_bound_variable_is_refused():
    assert decide("\\E x \\in Int : f(x) = x").verdict == "not-applicable"


def test_division_under_a_binder_stays_under_it():
    assert decide("\\E x \\in Int : (-3 * x + 4) % 2 = 0").verdict == "valid"
    assert decide("\\A x \\in Int : x % 2 = 0 \\/ x % 2 = 1").verdict == "valid"
    assert decide("\\A x \\in Int : x \\div 2 * 2 = x").verdict == "invalid"


def test_non_arithmetic_hypotheses_are_dropped_and_listed():
    d = decide("n + 0 = n", "n \\in Nat /\\ S = {}")
    assert d.verdict == "valid"
    assert d.dropped == ["S = {}"]


# ---------------------------------------------------------------- elimination


def _ground(f: pb.Formula, var: str, value: int) -> bool:
    g = pb.PEx(var, pb.conj([pb.eq(pb.Lin.var(var) - pb.Lin(const=value)), f]))
    return pb.evaluate(pb.cooper_eliminate(g, 10**6))


def test_exists_twice_x_gives_divisibility():
    y = pb.Lin.var("y")
    out = pb.cooper_eliminate(pb.PEx("x", pb.eq(pb.Lin({"x": 2}) - y)), 10**6)
    assert isinstance(out, pb.LinearAtom) and out.kind == "dvd" and out.modulus == 2
    for v in range(-10, 11):
        brute = any(2 * x == v for x in range(-10, 11))
        assert _ground(out, "y", v) == brute


def test_exists_strictly_between_y_and_y_plus_two():
    x, y = pb.Lin.var("x"), pb.Lin.var("y")
    f = pb.PEx("x", pb.conj([pb.lt(y - x), pb.lt(x - y - pb.Lin(const=2))]))
    out = pb.cooper_eliminate(f, 10**6)
    for v in range(-10, 11):
        assert _ground(out, "y", v) is True


def test_every_natural_is_even_or_odd():
    x = pb.Lin.var("x")
    f = pb.PAll("x", pb.disj([pb.lt(x), pb.dvd(2, x), pb.dvd(2, x + pb.Lin(const=1))]))
    assert pb.cooper_eliminate(f, 10**6) is True


def test_elimination_output_is_quantifier_free_and_deterministic():
    s = pb.PAll("a", pb.PEx("x", pb.conj([pb.lt(pb.Lin.var("a") - pb.Lin({"x": 3})),
                                          pb.dvd(4, pb.Lin({"x": 1, "b": 1}))])))
    one = pb.cooper_eliminate(s, 10**6)
    two = pb.cooper_eliminate(s, 10**6)
    assert one == two
    assert pb.free_vars(one) <= {"b"}
    assert pb.format_formula(one) == pb.format_formula(two)


def test_resource_bound_is_an_honest_failure():
    d = pb.decide_formulas([], parse_expr("\\E x \\in Int : 97 * x + 3 = 89 * y"), bound=50)
    assert d.verdict == "resource-failure"


# ---------------------------------------------------------------- decide


@pytest.mark.parametrize("goal,hyps,verdict", [
    ("n + 0 = n", ("n \\in Nat",), "valid"),
    ("0 = 1", (), "invalid"),
    ("x * x >= 0", (), "not-applicable"),
    ("x - 1 < x", (), "valid"),
    ("x >= 0", ("x \\in Nat",), "valid"),
    ("x >= 0", (), "invalid"),
    ("x \\in 1..3 => x # 0", (), "valid"),
])
def test_decide_examples(goal, hyps, verdict):
    ob = make_obligation([(f"h{i}", parse_expr(h)) for i, h in enumerate(hyps)], parse_expr(goal))
    assert pb.decide(ob).verdict == verdict


# ---------------------------------------------------------------- oracles


def test_oracle_windows_are_stable_under_widening():
    batch, _ = sentences(17, 200, max_cells=200_000)
    for s in batch:
        assert oracle.truth(s) == oracle.truth(s, margin=7)


def test_naive_small_cube_is_not_enough():
    """The derived windows matter: a fixed small search box answers some sentences wrongly."""
    batch, _ = sentences(23, 300, max_cells=200_000)
    wrong = 0
    for s in batch:
        wrong += oracle.truth_in_box(s, [(-2, 2)] * s.arity) != oracle.truth(s)
    assert wrong > 0


def test_cooper_agrees_with_bounded_enumeration():
    batch, _ = sentences(2026, 1000)
    assert sum(s.arity == 3 for s in batch) > 250
    for s in batch:
        got = pb.evaluate(pb.cooper_eliminate(to_formula(s), 10**6))
        assert got == oracle.truth(s), oracle.format_sentence(s)


def test_text_route_agrees_with_bounded_enumeration():
    batch, _ = sentences(77, 300)
    for s in batch:
        d = pb.decide_formulas([], parse_expr(oracle.format_sentence(s)))
        assert d.verdict == ("valid" if oracle.truth(s) else "invalid"), oracle.format_sentence(s)


# ---------------------------------------------------------------- injection soundness

TERMS = ["x", "y", "f(x)", "f(y)", "g(x)"]


def _random_goal(rng: random.Random) -> tuple[str, list[str], list[tuple], bool]:
    atoms = []
    for _ in range(rng.randint(1, 3)):
        coeffs = {t: rng.randint(-2, 2) for t in rng.sample(TERMS, 2)}
        atoms.append((coeffs, rng.randint(-2, 2), rng.choice(["<", "<=", "="])))
    hyps = [f"{t} \\in Nat" for t in TERMS if rng.random() < 0.3]
    shape = rng.choice(["or", "implies"])
    texts = [" + ".join(f"{c} * {t}" for t, c in co.items()) + f" + {k} {op} 0" for co, k, op in atoms]
    if shape == "or":
        goal = " \\/ ".join(f"({t})" for t in texts)
    else:
        goal = f"({texts[0]}) => (" + (" \\/ ".join(f"({t})" for t in texts[1:]) or "FALSE") + ")"
    return goal, hyps, atoms, shape == "implies"


def _holds(goal_atoms, implication: bool, hyps, env) -> bool:
    def atom(a):
        co, k, op = a
        v = sum(c * env[t] for t, c in co.items()) + k
        return {"<": v < 0, "<=": v <= 0, "=": v == 0}[op]

    if not all(env[h.split(" ")[0]] >= 0 for h in hyps):
        return True
    if implication:
        return (not atom(goal_atoms[0])) or any(atom(a) for a in goal_atoms[1:])
    return any(atom(a) for a in goal_atoms)


def test_valid_verdicts_survive_finite_interpretations():
    rng = random.Random(8)
    valid_seen = 0
    for _ in range(400):
        goal, hyps, atoms, implication = _random_goal(rng)
        d = decide(goal, *hyps)
        assert d.verdict in ("valid", "invalid")
        if d.verdict != "valid":
            continue
        valid_seen += 1
        for _ in range(60):
            dom = range(-3, 4)
            f = {v: rng.choice(dom) for v in dom}
            g = {v: rng.choice(dom) for v in dom}
            x, y = rng.choice(dom), rng.choice(dom)
            env = {"x": x, "y": y, "f(x)": f[x], "f(y)": f[y], "g(x)": g[x]}
            assert _holds(atoms, implication, hyps, env), goal
    assert valid_seen >= 10
