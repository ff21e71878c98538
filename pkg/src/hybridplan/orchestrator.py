"""Solver-first planning with advisor review/repair and two persistent caches.

Decision order for one call, given the (domain, problem) signature:

1. a known plan for the signature is re-validated and returned;
2. a known flaw is applied and the repaired model solved (the plan is then
   cached under the signature, so the next call takes branch 1);
3. otherwise the classical solver runs. A solved plan goes to review, and a
   rejected plan is replaced by the advisor's validated correction. An
   unsolvable problem goes to gap analysis; the resulting fix is cached and
   the repaired model solved.

Every step is recorded in a ``Trace``. Traces carry no timings, so identical
runs produce identical traces.
"""

from __future__ import annotations

import json
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Iterator

from .advisor import (
    AdvisorBackend,
    AdvisorResponseError,
    AdvisorUnavailable,
    FixedPlanInvalid,
    gap_analysis_for_domain,
    generate_fixed_plan,
    review_commonsense,
)
from .cache import CacheError, FlawRecord, PlanRecord, PlanStore
from .fixes import DomainFix, FixError, apply_fixes, merge_fixes, solve_with_soft_goals
from .model import Domain, Plan, Problem, ground
from .parser import ParseError, plan_from_lines
from .search import Limits, SearchResult, Status, solve
from .signature import ProblemSignature, create_signature
from .validate import validate_plan

log = logging.getLogger(__name__)

EVENT_KINDS = (
    "cache-plan-hit", "cache-plan-rejected", "cache-flaw-hit", "solver-call", "advisor-call",
    "fix-applied", "plan-cached", "flaw-cached", "warning", "returned",
)


@dataclass
class PlannerConfig:
    algorithm: str = "astar"
    heuristic: str = "hmax"
    limits: Limits = field(default_factory=Limits)
    advisor: AdvisorBackend | None = None
    cache_dir: str | None = None
    review_enabled: bool = True
    max_repair_rounds: int = 1

    def __post_init__(self):
        if self.max_repair_rounds < 0:
            raise ValueError("max_repair_rounds must be >= 0")


@dataclass(frozen=True)
class Event:
    kind: str
    data: tuple[tuple[str, Any], ...] = ()

    def to_json(self) -> dict:
        return {"event": self.kind, **dict(self.data)}

    def get(self, key: str, default: Any = None) -> Any:
        return dict(self.data).get(key, default)

    def __str__(self) -> str:
        if not self.data:
            return self.kind
        return self.kind + " " + " ".join(f"{k}={v}" for k, v in self.data)


class Trace:
    def __init__(self, signature: str = ""):
        self.signature = signature
        self.events: list[Event] = []

    def add(self, kind: str, **data: Any) -> Event:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown trace event {kind!r}")
        ev = Event(kind, tuple(sorted(data.items())))
        self.events.append(ev)
        (log.warning if kind == "warning" else log.info)("[%s] %s", self.signature[:12], ev)
        return ev

    def kinds(self) -> list[str]:
        return [e.kind for e in self.events]

    def count(self, kind: str, **match: Any) -> int:
        return sum(1 for e in self.events
                   if e.kind == kind and all(e.get(k) == v for k, v in match.items()))

    @property
    def solver_calls(self) -> int:
        return self.count("solver-call")

    @property
    def advisor_calls(self) -> int:
        return self.count("advisor-call")

    @property
    def source(self) -> str | None:
        for e in reversed(self.events):
            if e.kind == "returned":
                return e.get("source")
        return None

    def to_jsonl(self) -> str:
        return "".join(json.dumps({"signature": self.signature, **e.to_json()}, sort_keys=True) + "\n"
                       for e in self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)


class PlannerError(RuntimeError):
    """Internal inconsistency, e.g. the solver produced a plan that does not validate."""


class HybridPlanner:
    """Holds the plan store for a sequence of ``get_plan`` calls."""

    def __init__(self, config: PlannerConfig | None = None, store: PlanStore | None = None):
        self.config = config or PlannerConfig()
        self.store = store if store is not None else PlanStore(self.config.cache_dir)
        self._owns_store = store is None
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def __enter__(self) -> "HybridPlanner":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._owns_store:
            self.store.close()

    @contextmanager
    def _signature_lock(self, sig: str):
        with self._locks_guard:
            lock = self._locks.setdefault(sig, threading.Lock())
        with lock:
            yield

    # ------------------------------------------------------------------

    def get_plan(self, domain: Domain, problem: Problem) -> tuple[Plan | None, Trace]:
        sig = create_signature(domain, problem)
        trace = Trace(str(sig))
        with self._signature_lock(str(sig)):
            plan = self._get_plan(domain, problem, sig, trace)
        return plan, trace

    def _get_plan(self, domain: Domain, problem: Problem, sig: ProblemSignature,
                  trace: Trace) -> Plan | None:
        # known plan
        rec = self.store.get_plan(sig)
        if rec is not None:
            plan = self._revalidate(domain, problem, sig, rec, trace)
            if plan is not None:
                trace.add("cache-plan-hit", provenance=rec.provenance)
                return self._returned(trace, plan, "cache")

        # known flaw
        flaw = self.store.get_flaw(sig)
        if flaw is not None:
            trace.add("cache-flaw-hit", backend=flaw.backend)
            try:
                new_domain, new_problem = apply_fixes(domain, problem, flaw.fix)
            except FixError as exc:
                trace.add("warning", message=f"cached fix no longer applies: {exc}")
                return self._returned(trace, None, "unsolvable")
            _fix_event(trace, flaw.fix)
            plan, res = self._solve_and_cache(new_domain, new_problem, sig, trace, "repaired-domain")
            return self._returned(trace, plan, "cached-flaw" if plan else _failure_source(res),
                                  (new_domain, new_problem))

        # new problem: solver first
        res = self._solve(domain, problem, trace)
        if res.status == Status.SOLVED:
            return self._after_success(domain, problem, sig, res.plan, trace)
        if res.status == Status.TIMEOUT:
            trace.add("warning", message=f"solver stopped without an answer ({res.reason})")
            return self._returned(trace, None, "timeout")
        return self._repair(domain, problem, sig, res, trace)

    def _revalidate(self, domain: Domain, problem: Problem, sig, rec: PlanRecord,
                    trace: Trace) -> Plan | None:
        try:
            plan = plan_from_lines(rec.plan)
        except ParseError as exc:
            trace.add("cache-plan-rejected", reason=f"unparseable: {exc}")
            return None
        if validate_plan(domain, problem, plan).valid:
            return plan
        flaw = self.store.peek_flaw(sig)
        if flaw is not None:
            try:
                new_domain, new_problem = apply_fixes(domain, problem, flaw.fix)
            except FixError:
                new_domain = None
            if new_domain is not None:
                verdict = validate_plan(new_domain, new_problem, plan)
                if verdict.valid:
                    return plan
        trace.add("cache-plan-rejected", reason="does not validate against the current model")
        return None

    def _after_success(self, domain: Domain, problem: Problem, sig, plan: Plan,
                       trace: Trace) -> Plan:
        advisor = self.config.advisor
        if advisor is None or not self.config.review_enabled:
            self._cache_plan(sig, plan, "solver", trace)
            return self._returned(trace, plan, "solver", (domain, problem))

        trace.add("advisor-call", mode="review")
        try:
            review = review_commonsense(advisor, domain, problem, plan)
        except (AdvisorUnavailable, AdvisorResponseError) as exc:
            trace.add("warning", message=f"review unavailable, returning the solver plan uncached: {exc}")
            return self._returned(trace, plan, "solver", (domain, problem))
        if review.is_good:
            self._cache_plan(sig, plan, "solver", trace)
            return self._returned(trace, plan, "solver", (domain, problem))

        trace.add("advisor-call", mode="fix")
        try:
            fixed = generate_fixed_plan(advisor, domain, problem, plan, review.feedback)
        except (FixedPlanInvalid, AdvisorUnavailable, AdvisorResponseError) as exc:
            trace.add("warning", message=f"no usable corrected plan, returning the solver plan uncached: {exc}")
            return self._returned(trace, plan, "solver", (domain, problem))
        self._cache_plan(sig, fixed, "solver+review", trace)
        return self._returned(trace, fixed, "solver+review", (domain, problem))

    def _repair(self, domain: Domain, problem: Problem, sig, res: SearchResult,
                trace: Trace) -> Plan | None:
        advisor = self.config.advisor
        if advisor is None or self.config.max_repair_rounds == 0:
            return self._returned(trace, None, "unsolvable")

        fix: DomainFix | None = None
        cur_domain, cur_problem = domain, problem
        for _ in range(self.config.max_repair_rounds):
            trace.add("advisor-call", mode="gap")
            try:
                analysis = gap_analysis_for_domain(advisor, cur_domain, cur_problem, res.error)
            except AdvisorUnavailable as exc:
                trace.add("warning", message=f"gap analysis unavailable: {exc}")
                return self._returned(trace, None, "unsolvable")
            except AdvisorResponseError as exc:
                trace.add("warning", message=f"gap analysis rejected: {exc}")
                return self._returned(trace, None, "unsolvable")
            if analysis is None:
                return self._returned(trace, None, "unsolvable")
            step = analysis.to_fix(cur_domain)
            fix = step if fix is None else merge_fixes(fix, step)
            try:
                cur_domain, cur_problem = apply_fixes(domain, problem, fix)
            except FixError as exc:
                trace.add("warning", message=f"combined fix does not apply: {exc}")
                return self._returned(trace, None, "unsolvable")
            self._cache_flaw(sig, fix, advisor.ident, trace)
            _fix_event(trace, step)
            # keyed by the repaired model; the original signature gets its plan
            # on the next call, through the cached flaw
            repaired_sig = create_signature(cur_domain, cur_problem)
            plan, res = self._solve_and_cache(cur_domain, cur_problem, repaired_sig, trace,
                                              "repaired-domain")
            if plan is not None:
                return self._returned(trace, plan, "repaired-domain", (cur_domain, cur_problem))
            if res.status == Status.TIMEOUT:
                return self._returned(trace, None, "timeout")
        return self._returned(trace, None, "unsolvable")

    # ------------------------------------------------------------------

    def _solve(self, domain: Domain, problem: Problem, trace: Trace) -> SearchResult:
        cfg = self.config
        task = ground(domain, problem)
        if task.soft_goals:
            res = solve_with_soft_goals(task, cfg.algorithm, cfg.heuristic, cfg.limits)
        else:
            res = solve(task, cfg.algorithm, cfg.heuristic, cfg.limits)
        trace.add("solver-call", status=res.status.value, expansions=res.expansions)
        if res.status == Status.SOLVED and not validate_plan(domain, problem, res.plan).valid:
            raise PlannerError("solver returned a plan that fails validation")
        return res

    def solve_and_cache(self, domain: Domain, problem: Problem, sig: ProblemSignature | str,
                        trace: Trace | None = None, provenance: str = "solver") -> Plan | None:
        plan, _ = self._solve_and_cache(domain, problem, sig, trace or Trace(str(sig)), provenance)
        return plan

    def _solve_and_cache(self, domain, problem, sig, trace, provenance):
        res = self._solve(domain, problem, trace)
        if res.status != Status.SOLVED:
            return None, res
        self._cache_plan(sig, res.plan, provenance, trace)
        return res.plan, res

    def _cache_plan(self, sig, plan: Plan, provenance: str, trace: Trace) -> None:
        try:
            self.store.put_plan(sig, PlanRecord(str(sig), plan.lines(), provenance=provenance))
        except CacheError as exc:
            trace.add("warning", message=f"plan not cached: {exc}")
            return
        trace.add("plan-cached", provenance=provenance)

    def _cache_flaw(self, sig, fix: DomainFix, backend: str, trace: Trace) -> None:
        try:
            self.store.put_flaw(sig, FlawRecord(str(sig), fix, backend=backend))
        except CacheError as exc:
            trace.add("warning", message=f"fix not cached: {exc}")
            return
        trace.add("flaw-cached")

    @staticmethod
    def _returned(trace: Trace, plan: Plan | None, source: str,
                  model: tuple[Domain, Problem] | None = None) -> Plan | None:
        """Record the outcome; ``model`` is what ``plan`` must validate against."""
        if plan is not None and model is not None and not validate_plan(*model, plan).valid:
            raise PlannerError("refusing to return a plan that does not validate")
        trace.add("returned", source=source, length=len(plan) if plan is not None else None)
        return plan


def _fix_event(trace: Trace, fix: DomainFix) -> None:
    trace.add("fix-applied",
              actions=[a.name for a in fix.missing_actions],
              preconditions=[f"{m.action}:{m.atom}" for m in fix.missing_preconditions],
              subgoals=[str(a) for a in fix.added_subgoals],
              soft_goals=[str(s.atom) for s in fix.added_soft_goals])


def _failure_source(res: SearchResult) -> str:
    return "timeout" if res.status == Status.TIMEOUT else "unsolvable"


def get_plan(domain: Domain, problem: Problem,
             config: PlannerConfig | None = None) -> tuple[Plan | None, Trace]:
    """One-shot convenience wrapper; opens and closes the cache around the call."""
    with HybridPlanner(config) as planner:
        return planner.get_plan(domain, problem)
