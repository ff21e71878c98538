"""``plan`` command line.

Exit codes:
  0  plan found / plan valid / command succeeded
  1  usage, parse or I/O error
  2  no plan (unsolvable) / plan invalid
  3  search stopped by its expansion or time limit

``solve`` writes only plan lines to stdout; ``bench --ablation`` and ``cache ls``
write their report there. Diagnostics always go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .advisor import AdvisorBackend, AdvisorUnavailable, HttpBackend, ScriptedBackend
from .benchmarks import ABLATIONS, BENCHMARKS, UnknownBenchmark, load_benchmark, run_ablation
from .cache import CacheError, PlanStore
from .fixes import FixError
from .model import ModelError
from .orchestrator import HybridPlanner, PlannerConfig
from .parser import ParseError, format_plan, parse_domain, parse_plan, parse_problem, parse_soft_goals
from .search import ALGORITHMS, HEURISTICS, Limits
from .validate import validate_plan

EXIT_OK, EXIT_ERROR, EXIT_NO_PLAN, EXIT_TIMEOUT = 0, 1, 2, 3

log = logging.getLogger("hybridplan.cli")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; 2 means "no plan" here
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="plan", description="Solver-first planner with advisor review and repair.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log decisions to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="find a plan")
    s.add_argument("--domain", required=True)
    s.add_argument("--problem", required=True)
    s.add_argument("--soft-goals", help="JSON sidecar with soft goals and penalties")
    s.add_argument("--algo", default="astar", choices=ALGORITHMS)
    s.add_argument("--heuristic", default="hmax", choices=HEURISTICS)
    s.add_argument("--advisor", default="off", help="off | http | scripted:FIXTURES.json")
    s.add_argument("--no-review", action="store_true", help="skip the review of solved plans")
    s.add_argument("--cache", help="cache directory (caching is off without it)")
    s.add_argument("--trace", help="write the decision trace here (JSON lines)")
    s.add_argument("--max-expansions", type=int, default=Limits.max_expansions)
    s.add_argument("--timeout", type=float, default=Limits.timeout, help="seconds per search")

    v = sub.add_parser("validate", help="check a plan")
    v.add_argument("--domain", required=True)
    v.add_argument("--problem", required=True)
    v.add_argument("--plan", required=True)
    v.add_argument("--soft-goals")

    b = sub.add_parser("bench", help="run a bundled benchmark or its ablation")
    b.add_argument("name", help=f"one of {', '.join(BENCHMARKS)}")
    b.add_argument("--ablation", action="store_true")
    b.add_argument("--json", action="store_true", help="print the report as JSON")

    c = sub.add_parser("cache", help="inspect or clear a cache directory")
    c.add_argument("action", choices=("ls", "clear"))
    c.add_argument("--cache", required=True)
    return p


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _CliError(f"cannot read {path}: {exc.strerror or exc}") from None


class _CliError(Exception):
    pass


def _load(args):
    domain = parse_domain(_read(args.domain), args.domain)
    problem = parse_problem(_read(args.problem), domain, args.problem)
    if args.soft_goals:
        problem = problem.with_soft_goals(parse_soft_goals(_read(args.soft_goals)))
    return domain, problem


def _advisor(choice: str) -> AdvisorBackend | None:
    if choice == "off":
        return None
    if choice == "http":
        return HttpBackend()
    if choice.startswith("scripted:"):
        return ScriptedBackend.from_file(choice.split(":", 1)[1])
    raise _CliError(f"--advisor must be off, http or scripted:FILE, not {choice!r}")


def cmd_solve(args) -> int:
    domain, problem = _load(args)
    config = PlannerConfig(
        algorithm=args.algo, heuristic=args.heuristic,
        limits=Limits(args.max_expansions, args.timeout),
        advisor=_advisor(args.advisor), cache_dir=args.cache,
        review_enabled=not args.no_review,
    )
    with HybridPlanner(config) as planner:
        plan, trace = planner.get_plan(domain, problem)
    if args.trace:
        try:
            Path(args.trace).write_text(trace.to_jsonl(), encoding="utf-8")
        except OSError as exc:
            raise _CliError(f"cannot write trace {args.trace}: {exc.strerror or exc}") from None
    if plan is not None:
        sys.stdout.write(format_plan(plan))
        print(f"plan: {len(plan)} steps (source: {trace.source})", file=sys.stderr)
        return EXIT_OK
    if trace.source == "timeout":
        print("no plan: search limit reached", file=sys.stderr)
        return EXIT_TIMEOUT
    print("no plan: problem is unsolvable", file=sys.stderr)
    return EXIT_NO_PLAN


def cmd_validate(args) -> int:
    domain, problem = _load(args)
    plan = parse_plan(_read(args.plan))
    verdict = validate_plan(domain, problem, plan)
    print(verdict.describe(), file=sys.stderr)
    if verdict.valid and problem.soft_goals:
        print(f"cost: {verdict.cost:g}", file=sys.stderr)
    return EXIT_OK if verdict.valid else EXIT_NO_PLAN


def cmd_bench(args) -> int:
    if args.name not in BENCHMARKS:
        raise _CliError(f"unknown benchmark {args.name!r}; expected one of {', '.join(BENCHMARKS)}")
    if args.ablation:
        ablation = {"beer": "beer-softgoal", "cube": "cube-preconditions",
                    "cube-augmented": "cube-preconditions"}.get(args.name)
        if ablation is None:
            raise _CliError(f"no ablation for {args.name!r}; ablations: {', '.join(ABLATIONS)}")
        report = run_ablation(ablation)
        out = json.dumps(report.to_json(), indent=2) if args.json else report.table()
        print(out)
        return EXIT_OK
    bench = load_benchmark(args.name)
    for name, plan in bench.golden.items():
        verdict = validate_plan(bench.domain, bench.problem, plan)
        print(f"golden {name}: {verdict.describe().splitlines()[0]}", file=sys.stderr)
    with HybridPlanner(PlannerConfig(advisor=bench.advisor())) as planner:
        plan, trace = planner.get_plan(bench.domain, bench.problem)
    for ev in trace:
        print(f"  {ev}", file=sys.stderr)
    return EXIT_OK if plan is not None else EXIT_NO_PLAN


def cmd_cache(args) -> int:
    with PlanStore(args.cache) as store:
        if args.action == "clear":
            store.clear()
            print(f"cleared {args.cache}", file=sys.stderr)
            return EXIT_OK
        plans, flaws = store.plans(), store.flaws()
        print(f"known plans: {len(plans)}")
        for rec in plans:
            print(f"  {rec.signature}  {len(rec.plan)} steps  {rec.provenance}  {rec.created_at}")
        print(f"known flaws: {len(flaws)}")
        for rec in flaws:
            names = [a.name for a in rec.fix.missing_actions]
            print(f"  {rec.signature}  actions={names} "
                  f"preconditions={len(rec.fix.missing_preconditions)}  {rec.backend}  {rec.created_at}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "validate": cmd_validate, "bench": cmd_bench, "cache": cmd_cache}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (_CliError, ParseError, ModelError, FixError, CacheError, AdvisorUnavailable,
            UnknownBenchmark, ValueError) as exc:
        print(f"plan: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
