"""Proof manager: loads a module, generates obligations and dispatches them to backends.

Tableau proofs are only recorded as proved after the trace kernel accepts
their trace. Proved verdicts are cached in ``.proofcache/`` next to the root
file, keyed by obligation fingerprint and toolchain version.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from stepproof import kernel, presburger, smt, tracefmt
from stepproof.modules import FlattenError, ScopeError, Signature, check_module, flatten
from stepproof.obligations import Obligation, ProofError, module_obligations
from stepproof.parser import ParseError, parse_module
from stepproof.syntax import ModuleAst
from stepproof.tableau import Budget, prove_obligation

log = logging.getLogger("stepproof")

TOOLCHAIN_VERSION = "stepproof-0.1.0/backends-1"
CACHE_DIR = ".proofcache"
CACHE_FILE = "verdicts.jsonl"

BACKENDS = ("tableau", "tableau-retry", "presburger", "smt")
DEFAULT_ORDER = ("tableau", "tableau-retry")


class InputError(Exception):
    """Problem with the user's files: parse, scope, flattening or proof structure."""


# ---------------------------------------------------------------- loading


def load_module(path: Path) -> ModuleAst:
    """Parse ``path`` and flatten it with sibling ``.mt`` files it extends."""
    if not path.is_file():
        raise InputError(f"{path}: error: no such file")
    library: dict[str, ModuleAst] = {}

    def parse(p: Path) -> ModuleAst:
        try:
            m = parse_module(p.read_text(encoding="utf-8"))
        except ParseError as err:
            raise InputError(err.format(str(p))) from err
        except UnicodeDecodeError as err:
            raise InputError(f"{p}:1:1: error: not UTF-8 text ({err.reason})") from err
        if m.name != p.stem:
            raise InputError(f"{p}:1:1: error: module {m.name} must live in {m.name}.mt")
        return m

    root = parse(path)
    pending = list(root.extends)
    while pending:
        name = pending.pop()
        if name in library:
            continue
        candidate = path.parent / f"{name}.mt"
        if candidate.is_file():
            library[name] = parse(candidate)
            pending.extend(library[name].extends)
    try:
        flat = flatten(root, library)
        check_module(flat)
    except FlattenError as err:
        raise InputError(f"{path}:1:1: error: {err}") from err
    except ScopeError as err:
        raise InputError(f"{path}:{err.line}:1: error: {err}") from err
    return flat


def obligations_for(path: Path) -> tuple[ModuleAst, list[Obligation]]:
    module = load_module(path)
    try:
        return module, module_obligations(module, Signature(module))
    except ProofError as err:
        raise InputError(f"{path}:{err.line}:1: error: {err}") from err


# ---------------------------------------------------------------- verdicts


@dataclass
class DispatchPolicy:
    order: tuple[str, ...] = DEFAULT_ORDER
    forced: Optional[str] = None  # --backend
    timeout: float = 10.0
    solver: str = smt.DEFAULT_COMMAND
    build_dir: Path = Path("build")

    def backends_for(self, ob: Obligation) -> list[str]:
        if self.forced:
            return [self.forced]
        # pragma-selected backends run first, then the default chain
        chosen = [p for p in ob.pragmas if p in BACKENDS]
        return chosen + [b for b in self.order if b not in chosen]


@dataclass
class VerdictRecord:
    fingerprint: str
    label: str
    position: tuple[int, ...]
    line: int
    status: str  # proved | failed | omitted | cached | error
    backend: str = ""
    seconds: float = 0.0
    attempts: list[tuple[str, str]] = field(default_factory=list)
    trace: str = ""  # accepted tableau trace text

    @property
    def proved(self) -> bool:
        return self.status in ("proved", "cached")


def _record(ob: Obligation, status: str, **kw) -> VerdictRecord:
    return VerdictRecord(ob.id, ob.label, ob.position, ob.line, status, **kw)


def _try_tableau(ob: Obligation, budget: Budget, lemmas: bool) -> tuple[str, str, str]:
    """(outcome, reason, trace text); outcome is proved | failed | error."""
    result = prove_obligation(ob, budget, use_lemmas=lemmas)
    if not result.proved:
        return "failed", result.reason, ""
    verdict = kernel.check(ob, result.trace)
    if not verdict.accepted:
        return "error", f"trace rejected by the kernel: {verdict.reason} {verdict.detail}".strip(), ""
    return "proved", "", tracefmt.dumps(result.trace)


def dispatch(ob: Obligation, policy: DispatchPolicy) -> VerdictRecord:
    start = time.perf_counter()
    if ob.status_hint == "omitted":
        return _record(ob, "omitted")
    if ob.status_hint == "rejected":
        return _record(ob, "failed", attempts=[("rewrite", ob.reason)])
    attempts: list[tuple[str, str]] = []
    for backend in policy.backends_for(ob):
        if backend == "tableau":
            budget = Budget(seconds=min(2.0, policy.timeout), steps=20_000)
            outcome, reason, trace = _try_tableau(ob, budget, lemmas=False)
        elif backend == "tableau-retry":
            budget = Budget(seconds=policy.timeout, steps=400_000)
            outcome, reason, trace = _try_tableau(ob, budget, lemmas=True)
        elif backend == "presburger":
            d = presburger.decide(ob)
            outcome = "proved" if d.verdict == "valid" else "failed"
            reason, trace = (d.verdict + (f": {d.detail}" if d.detail else "")), ""
        elif backend == "smt":
            tr = smt.translate(ob)
            trace = ""
            if not tr.applicable:
                outcome, reason = "failed", f"not-applicable: {tr.reason}"
            else:
                res = smt.run_solver(tr.script, policy.solver, policy.timeout,
                                     smt.script_path(policy.build_dir, ob.id))
                outcome = "proved" if res.status == "valid" else "failed"
                reason = res.status
                if tr.omitted:
                    reason += f" (omitted {len(tr.omitted)} hypotheses)"
        else:
            outcome, reason, trace = "failed", f"unknown backend {backend}", ""
        if outcome == "proved":
            return _record(ob, "proved", backend=backend, seconds=time.perf_counter() - start,
                           attempts=attempts, trace=trace)
        attempts.append((backend, reason))
        if outcome == "error":
            return _record(ob, "error", seconds=time.perf_counter() - start, attempts=attempts)
    return _record(ob, "failed", seconds=time.perf_counter() - start, attempts=attempts)


# ---------------------------------------------------------------- cache


class FingerprintCache:
    """Line-delimited proved verdicts; unreadable files are discarded with a warning."""

    def __init__(self, directory: Path, version: str = TOOLCHAIN_VERSION):
        self.path = directory / CACHE_FILE
        self.version = version
        self.entries: dict[str, dict] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        try:
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                if not isinstance(rec, dict) or not {"fingerprint", "backend", "version"} <= rec.keys():
                    raise ValueError("record lacks required fields")
                if rec["version"] == self.version:
                    self.entries[rec["fingerprint"]] = rec
        except (ValueError, UnicodeDecodeError) as err:
            log.warning("proof cache %s is corrupt (%s); rebuilding it", self.path, err)
            self.entries = {}
            self.path.unlink()

    def lookup(self, fingerprint: str) -> Optional[dict]:
        return self.entries.get(fingerprint)

    def store(self, records: Iterable[VerdictRecord]) -> None:
        fresh = [r for r in records if r.status == "proved" and r.fingerprint not in self.entries]
        if not fresh:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            for r in fresh:
                rec = {"fingerprint": r.fingerprint, "status": "proved", "backend": r.backend,
                       "version": self.version}
                self.entries[r.fingerprint] = rec
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


# ---------------------------------------------------------------- run


@dataclass
class RunOptions:
    only: Optional[str] = None
    backend: Optional[str] = None
    timeout: float = 10.0
    jobs: int = 1
    allow_omitted: bool = False
    use_cache: bool = True
    solver: str = smt.DEFAULT_COMMAND
    build_dir: Optional[Path] = None


@dataclass
class RunReport:
    module: str
    records: list[VerdictRecord]
    seconds: float

    def counts(self) -> dict[str, int]:
        out = {"proved": 0, "cached": 0, "failed": 0, "omitted": 0, "error": 0}
        for r in self.records:
            out[r.status] += 1
        return out

    def summary(self) -> str:
        c = self.counts()
        text = f"{c['proved'] + c['cached']} proved, {c['failed']} failed, {c['omitted']} omitted"
        if c["cached"]:
            text += f" ({c['cached']} cached)"
        if c["error"]:
            text += f", {c['error']} internal errors"
        return text

    def exit_code(self, allow_omitted: bool) -> int:
        c = self.counts()
        if c["error"]:
            return 3
        if c["failed"] or (c["omitted"] and not allow_omitted):
            return 1
        return 0

    def status_multiset(self) -> list[tuple[str, str]]:
        """Statuses with cache hits counted as proofs; for comparing runs."""
        return sorted((r.fingerprint, "proved" if r.proved else r.status) for r in self.records)


def select(obs: list[Obligation], only: Optional[str]) -> list[Obligation]:
    if not only:
        return obs
    return [o for o in obs if o.label == only or o.label.startswith(only + " ")]


def verify(obs: list[Obligation], policy: DispatchPolicy, jobs: int = 1,
           cache: Optional[FingerprintCache] = None) -> list[VerdictRecord]:
    """Verdicts in document order, independent of worker count and completion order."""
    records: dict[int, VerdictRecord] = {}
    pending: list[tuple[int, Obligation]] = []
    for i, ob in enumerate(obs):
        hit = cache.lookup(ob.id) if cache and ob.status_hint == "normal" else None
        if hit:
            records[i] = _record(ob, "cached", backend=hit["backend"])
        else:
            pending.append((i, ob))
    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(dispatch, [o for _, o in pending], [policy] * len(pending)))
    else:
        results = [dispatch(o, policy) for _, o in pending]
    for (i, _), r in zip(pending, results):
        records[i] = r
    ordered = [records[i] for i in sorted(records, key=lambda k: (obs[k].position, k))]
    if cache:
        cache.store(ordered)
    return ordered


def check_file(path: Path, options: RunOptions) -> tuple[RunReport, list[Obligation], ModuleAst]:
    start = time.perf_counter()
    module, obs = obligations_for(path)
    obs = select(obs, options.only)
    policy = DispatchPolicy(forced=options.backend, timeout=options.timeout, solver=options.solver,
                            build_dir=options.build_dir or path.parent / "build")
    cache = FingerprintCache(path.parent / CACHE_DIR) if options.use_cache else None
    records = verify(obs, policy, options.jobs, cache)
    return RunReport(module.name, records, time.perf_counter() - start), obs, module


def record_json(r: VerdictRecord) -> dict:
    d = asdict(r)
    d.pop("trace")
    return d
