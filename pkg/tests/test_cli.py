import json
import logging
import shutil
import time
from collections import Counter
from pathlib import Path

import pytest

from stepproof import cli, manager

CORPUS = Path(__file__).parent.parent / "corpus"
needs_solver = pytest.mark.skipif(shutil.which("z3") is None, reason="no z3 binary on PATH")

SMALL = r"""---- MODULE M ----
CONSTANTS x, p, q
THEOREM Prop == p /\ q => q /\ p
  OBVIOUS
THEOREM Skipped == p => p
  OMITTED
THEOREM NonLinear == x \in Nat => x * x = 2 * x
  BY SimpleArithmetic
====
"""

HASHING = r"""---- MODULE H ----
VARIABLES e, f
O(x) == x' = x
THEOREM Hidden == O(e /\ f) = O(f /\ e)
  OBVIOUS
THEOREM Usable == O(e /\ f) = O(f /\ e)
  BY DEF O
====
"""

PROPOSITIONAL = r"""---- MODULE P ----
CONSTANTS a, b, c
THEOREM Swap == a /\ b => b /\ a
  OBVIOUS
THEOREM Chain == (a => b) /\ (b => c) => (a => c)
<1>1. a /\ (a => b) => b
  OBVIOUS
<1> QED BY <1>1
====
"""


def write(tmp_path: Path, name: str, text: str) -> Path:
    path = tmp_path / name
    path.write_text(text)
    return path


def run(*argv) -> int:
    return cli.main([str(a) for a in argv])


@pytest.fixture
def corpus(tmp_path: Path) -> Path:
    dest = tmp_path / "corpus"
    dest.mkdir()
    for p in CORPUS.glob("*.mt"):
        shutil.copy(p, dest / p.name)
    return dest


# ---------------------------------------------------------------- exit codes


def test_peterson_is_fully_proved(corpus, capsys):
    assert run("check", corpus / "Peterson.mt", "--no-cache") == 0
    out = capsys.readouterr().out
    assert "Peterson: 53 proved, 0 failed, 0 omitted" in out


@needs_solver
def test_arithmetic_module_is_fully_proved(corpus, capsys):
    assert run("check", corpus / "Counter.mt", "--no-cache") == 0
    out = capsys.readouterr().out
    assert "proved AddZero [presburger" in out
    assert "proved RealStep [smt" in out


def test_omitted_fails_unless_allowed(tmp_path):
    path = write(tmp_path, "P.mt", PROPOSITIONAL.replace("<1> QED BY <1>1", "<1> QED OMITTED"))
    assert run("check", path, "--no-cache") == 1
    assert run("check", path, "--no-cache", "--allow-omitted") == 0


def test_missing_file_is_an_input_error(tmp_path, capsys):
    assert run("check", tmp_path / "Nope.mt") == 2
    assert "Nope.mt" in capsys.readouterr().err


def test_syntax_error_is_an_input_error(tmp_path, capsys):
    path = write(tmp_path, "Bad.mt", "---- MODULE Bad ----\nTHEOREM T == /\\ =>\n====\n")
    assert run("check", path) == 2
    assert "Bad.mt:" in capsys.readouterr().err


def test_unknown_fact_is_an_input_error(tmp_path):
    path = write(tmp_path, "U.mt", "---- MODULE U ----\nCONSTANTS p\nTHEOREM T == p => p\n  BY NoSuchFact\n====\n")
    assert run("check", path) == 2


def test_crash_is_an_internal_error(tmp_path, monkeypatch, capsys):
    def boom(*_):
        raise RuntimeError("simulated")
    monkeypatch.setattr(manager, "check_file", boom)
    assert run("check", write(tmp_path, "P.mt", PROPOSITIONAL)) == 3
    assert "internal error" in capsys.readouterr().err


def test_kernel_rejection_is_never_a_proof(tmp_path, monkeypatch, capsys):
    """The certification gate: a tableau proof the kernel refuses becomes an internal error."""
    from stepproof import kernel

    monkeypatch.setattr(manager.kernel, "check",
                        lambda ob, tr: kernel.Verdict(False, "unclosed-branch", (1,), "simulated"))
    assert run("check", write(tmp_path, "P.mt", PROPOSITIONAL), "--no-cache") == 3
    out = capsys.readouterr().out
    assert "proved" not in out.replace("0 proved", "")


# ---------------------------------------------------------------- dispatch


def test_nonlinear_goal_fails_with_reasons_from_each_backend(tmp_path, capsys):
    assert run("check", write(tmp_path, "M.mt", SMALL), "--no-cache", "--allow-omitted") == 1
    out = capsys.readouterr().out
    assert "FAILED NonLinear" in out
    assert "presburger: not-applicable" in out
    assert "tableau: saturated-open-branch" in out
    assert "tableau-retry:" in out


def test_pragma_runs_its_backend_first(corpus):
    _, obs = manager.obligations_for(corpus / "Counter.mt")
    policy = manager.DispatchPolicy()
    add_zero = next(o for o in obs if o.label == "AddZero")
    assert policy.backends_for(add_zero) == ["presburger", "tableau", "tableau-retry"]
    real = next(o for o in obs if o.label == "RealStep")
    assert policy.backends_for(real)[0] == "smt"
    plain = manager.DispatchPolicy().backends_for(manager.obligations_for(corpus / "Peterson.mt")[1][0])
    assert plain == ["tableau", "tableau-retry"]
    rec = manager.dispatch(add_zero, policy)
    assert rec.status == "proved" and rec.backend == "presburger"


def test_backend_flag_forces_one_backend(tmp_path, capsys):
    path = write(tmp_path, "P.mt", PROPOSITIONAL)
    assert run("check", path, "--no-cache", "--backend", "presburger") == 1
    assert run("check", path, "--no-cache", "--backend", "tableau") == 0


@pytest.mark.parametrize("backend", manager.BACKENDS)
def test_hidden_operator_is_opaque_on_every_backend(tmp_path, backend):
    """Equal-looking hashed applications with different argument text never unify."""
    path = write(tmp_path, "H.mt", HASHING)
    opts = manager.RunOptions(backend=backend, use_cache=False, timeout=3, only="Hidden",
                              build_dir=tmp_path / "build")
    report, _, _ = manager.check_file(path, opts)
    assert [r.status for r in report.records] == ["failed"]


def test_hidden_operator_proves_once_usable(tmp_path):
    report, _, _ = manager.check_file(write(tmp_path, "H.mt", HASHING),
                                      manager.RunOptions(use_cache=False, only="Usable"))
    assert [r.status for r in report.records] == ["proved"]


# ---------------------------------------------------------------- selection and listing


def test_only_restricts_to_a_step(tmp_path, capsys):
    path = write(tmp_path, "P.mt", PROPOSITIONAL)
    assert run("check", path, "--no-cache", "--only", "Chain <1>1") == 0
    out = capsys.readouterr().out
    assert "Chain <1>1" in out and "Swap" not in out and "1 proved" in out


def test_list_unproven(tmp_path, capsys):
    assert run("check", write(tmp_path, "M.mt", SMALL), "--list-unproven") == 0
    assert capsys.readouterr().out.split() == ["Skipped"]


# ---------------------------------------------------------------- caching


def _labels_run(report) -> Counter:
    return Counter(r.status for r in report.records)


def test_cache_hit_speedup_and_same_verdicts(corpus):
    path = corpus / "Peterson.mt"
    t0 = time.perf_counter()
    first, _, _ = manager.check_file(path, manager.RunOptions())
    cold = time.perf_counter() - t0
    t0 = time.perf_counter()
    second, _, _ = manager.check_file(path, manager.RunOptions())
    warm = time.perf_counter() - t0
    assert first.status_multiset() == second.status_multiset()
    assert _labels_run(second) == Counter(cached=53)
    assert cold >= 10 * warm, (cold, warm)


def test_editing_one_leaf_reverifies_only_affected_obligations(corpus):
    path = corpus / "Counter.mt"
    before, obs_before, _ = manager.check_file(path, manager.RunOptions(backend="presburger"))
    old = "<2>1. N \\in Nat /\\ Inv /\\ Inc => Inv'"
    new = "<2>1. Inv /\\ N \\in Nat /\\ Inc => Inv'"
    path.write_text(path.read_text().replace(old, new))
    after, obs_after, _ = manager.check_file(path, manager.RunOptions(backend="presburger"))
    changed = {o.id for o in obs_after} - {o.id for o in obs_before}
    assert {o.label for o in obs_after if o.id in changed} == {"CounterInv <1>2 <2>1", "CounterInv <1>2 <2>QED"}
    fresh = {r.fingerprint for r in after.records if r.status != "cached"}
    proved_before = {r.fingerprint for r in before.records if r.proved}
    assert fresh == {o.id for o in obs_after} - proved_before
    assert changed <= fresh


def test_corrupt_cache_is_discarded_with_a_warning(tmp_path, caplog):
    path = write(tmp_path, "P.mt", PROPOSITIONAL)
    manager.check_file(path, manager.RunOptions())
    cache = tmp_path / manager.CACHE_DIR / manager.CACHE_FILE
    cache.write_text("{not json\n")
    with caplog.at_level(logging.WARNING):
        report, _, _ = manager.check_file(path, manager.RunOptions())
    assert "corrupt" in caplog.text
    assert all(r.status == "proved" for r in report.records)
    rebuilt = [json.loads(line) for line in cache.read_text().splitlines()]
    assert len(rebuilt) == len(report.records)


def test_stale_toolchain_entries_are_ignored(tmp_path):
    path = write(tmp_path, "P.mt", PROPOSITIONAL)
    manager.check_file(path, manager.RunOptions())
    cache = tmp_path / manager.CACHE_DIR / manager.CACHE_FILE
    cache.write_text(cache.read_text().replace(manager.TOOLCHAIN_VERSION, "older"))
    report, _, _ = manager.check_file(path, manager.RunOptions())
    assert not any(r.status == "cached" for r in report.records)


def test_worker_count_does_not_change_verdicts(corpus):
    path = corpus / "Counter.mt"
    one, _, _ = manager.check_file(path, manager.RunOptions(use_cache=False, jobs=1))
    two, _, _ = manager.check_file(path, manager.RunOptions(use_cache=False, jobs=3))
    assert one.status_multiset() == two.status_multiset()
    assert [r.label for r in one.records] == [r.label for r in two.records]


# ---------------------------------------------------------------- dumps and traces


def test_emitted_traces_check_standalone(tmp_path, capsys):
    path = write(tmp_path, "P.mt", PROPOSITIONAL)
    dumps, traces = tmp_path / "obs", tmp_path / "traces"
    assert run("check", path, "--no-cache", "--dump-obligations", dumps, "--emit-traces", traces) == 0
    dump = dumps / "P.jsonl"
    files = sorted(traces.glob("*.trace"))
    assert len(files) == 3
    for f in files:
        assert cli.check_trace_main([str(dump), str(f)]) == 0
        assert run("check-trace", dump, f) == 0
    bad = tmp_path / "bad.trace"
    bad.write_text(files[0].read_text().replace("(close", "(closed", 1))
    assert cli.check_trace_main([str(dump), str(bad)]) == 1
    other = tmp_path / "other.trace"
    other.write_text(files[0].read_text().replace('(trace "', '(trace "0', 1))
    assert cli.check_trace_main([str(dump), str(other)]) == 1
    assert "fingerprint-mismatch" in capsys.readouterr().out
