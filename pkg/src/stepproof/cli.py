"""Command line: ``stepproof check FILE`` and ``check-trace DUMP TRACE``.

Exit codes: 0 success, 1 proof failures or omissions, 2 input errors,
3 internal errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from stepproof import kernel, manager, tracefmt
from stepproof.obligations import list_unproven, read_dump, report_failure, write_dump

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


def _check_parser(sub) -> None:
    p = sub.add_parser("check", help="verify every proof in a module")
    p.add_argument("file", type=Path)
    p.add_argument("--only", metavar="PATH", help="theorem name or step path, e.g. 'Safety <1>2'")
    p.add_argument("--backend", choices=manager.BACKENDS, help="use only this backend")
    p.add_argument("--timeout", type=float, default=10.0, help="seconds per backend attempt")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--allow-omitted", action="store_true", help="omitted proofs do not fail the run")
    p.add_argument("--no-cache", action="store_true", help="ignore and do not update the proof cache")
    p.add_argument("--list-unproven", action="store_true",
                   help="list steps without a proof or with OMITTED, then stop")
    p.add_argument("--dump-obligations", metavar="DIR", type=Path,
                   help="write the obligations as JSON lines into DIR")
    p.add_argument("--emit-traces", metavar="DIR", type=Path,
                   help="write each accepted tableau trace into DIR")
    p.add_argument("--solver", default=manager.smt.DEFAULT_COMMAND,
                   help="SMT solver command template; {file} is replaced by the script path")
    p.add_argument("--quiet", action="store_true", help="print only failures and the summary")


def _trace_parser(sub) -> None:
    p = sub.add_parser("check-trace", help="check a proof trace against a dumped obligation")
    p.add_argument("dump", type=Path)
    p.add_argument("trace", type=Path)


def cmd_check(args: argparse.Namespace) -> int:
    if args.list_unproven:
        try:
            module = manager.load_module(args.file)
        except manager.InputError as err:
            print(err, file=sys.stderr)
            return EXIT_INPUT
        for thm, path in list_unproven(module):
            print(" ".join((thm,) + path))
        return EXIT_OK
    options = manager.RunOptions(only=args.only, backend=args.backend, timeout=args.timeout,
                                 jobs=max(1, args.jobs), allow_omitted=args.allow_omitted,
                                 use_cache=not args.no_cache, solver=args.solver)
    try:
        if args.dump_obligations:
            _, obs = manager.obligations_for(args.file)
            args.dump_obligations.mkdir(parents=True, exist_ok=True)
            write_dump(manager.select(obs, args.only), args.dump_obligations / f"{args.file.stem}.jsonl")
        report, obs, _ = manager.check_file(args.file, options)
    except manager.InputError as err:
        print(err, file=sys.stderr)
        return EXIT_INPUT
    for ob, r in zip(obs, report.records):
        if r.status in ("failed", "error"):
            print(f"{r.status.upper()} {r.label} (line {r.line})")
            print(report_failure(ob, r.attempts))
        elif not args.quiet:
            extra = f" [{r.backend} {r.seconds:.2f}s]" if r.backend else ""
            print(f"{r.status} {r.label}{extra}")
        if args.emit_traces and r.trace:
            args.emit_traces.mkdir(parents=True, exist_ok=True)
            (args.emit_traces / f"{r.fingerprint}.trace").write_text(r.trace)
    print(f"{report.module}: {report.summary()} in {report.seconds:.2f}s")
    return report.exit_code(args.allow_omitted)


def cmd_check_trace(dump: Path, trace_file: Path) -> int:
    try:
        obs = read_dump(dump)
        trace = tracefmt.loads(trace_file.read_text(encoding="utf-8"))
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAILED
    match = [o for o in obs if o.id == trace.fingerprint]
    if not match:
        print("rejected: fingerprint-mismatch (no obligation in the dump has this fingerprint)")
        return EXIT_FAILED
    verdict = kernel.check(match[0], trace)
    if verdict.accepted:
        print(f"accepted {match[0].label}")
        return EXIT_OK
    where = "/".join(map(str, verdict.position)) or "root"
    print(f"rejected: {verdict.reason} at {where}: {verdict.detail}")
    return EXIT_FAILED


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(format="warning: %(message)s", level=logging.WARNING)
    parser = argparse.ArgumentParser(prog="stepproof", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _check_parser(sub)
    _trace_parser(sub)
    args = parser.parse_args(argv)
    try:
        if args.command == "check":
            return cmd_check(args)
        return cmd_check_trace(args.dump, args.trace)
    except Exception as err:  # noqa: BLE001 - last-resort mapping to the internal-error exit code
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_INTERNAL


def check_trace_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="check-trace",
                                     description="check a proof trace against a dumped obligation")
    parser.add_argument("dump", type=Path)
    parser.add_argument("trace", type=Path)
    args = parser.parse_args(argv)
    return cmd_check_trace(args.dump, args.trace)


if __name__ == "__main__":
    sys.exit(main())
