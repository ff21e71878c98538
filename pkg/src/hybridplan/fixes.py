"""Domain/problem deltas and how they are compiled into a repaired model.

The wire document is the advisor's gap-analysis JSON::

    {"missing_actions": ["turn-on-microwave"],
     "action_definitions": {"turn-on-microwave": "(:action turn-on-microwave ...)"},
     "missing_preconditions": [{"action": "wait-finish", "atom": "microwave-on(microwave1)", "why": "..."}],
     "added_subgoals": ["fridge-closed(fridge)"],
     "added_soft_goals": [{"atom": "fridge-closed(fridge)", "penalty": 2}]}

Soft goals are also solved here: a plan's cost is its length plus the penalties
of the soft goals still false at the end.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any

from .model import (
    ActionSchema,
    Atom,
    Domain,
    GroundTask,
    Literal,
    ModelError,
    Problem,
    SoftGoal,
    check_domain,
    check_problem,
    is_variable,
    object_types,
)
from .parser import ParseError, format_action, parse_action, parse_atom
from .search import Limits, RelaxedGraph, SearchResult, Status, plan_states, solve

log = logging.getLogger(__name__)

MAX_SOFT_GOALS = 4

_KNOWN_KEYS = {"missing_actions", "action_definitions", "missing_preconditions",
               "added_subgoals", "added_soft_goals"}
# advisor commentary that travels with a fix but does not change the model
_COMMENTARY_KEYS = {"suggested_plan", "rationale"}


class FixError(ValueError):
    pass


@dataclass(frozen=True)
class MissingPrecondition:
    action: str
    atom: Atom
    why: str = ""


@dataclass(frozen=True)
class DomainFix:
    missing_actions: tuple[ActionSchema, ...] = ()
    missing_preconditions: tuple[MissingPrecondition, ...] = ()
    added_soft_goals: tuple[SoftGoal, ...] = ()
    added_subgoals: tuple[Atom, ...] = ()
    extras: dict[str, Any] = field(default_factory=dict, compare=False)

    def is_empty(self) -> bool:
        return not (self.missing_actions or self.missing_preconditions
                    or self.added_soft_goals or self.added_subgoals)


def merge_fixes(first: DomainFix, second: DomainFix) -> DomainFix:
    """One fix equivalent to applying ``first`` and then ``second``."""
    def cat(a: tuple, b: tuple) -> tuple:
        return tuple(dict.fromkeys(a + b))
    return DomainFix(cat(first.missing_actions, second.missing_actions),
                     cat(first.missing_preconditions, second.missing_preconditions),
                     cat(first.added_soft_goals, second.added_soft_goals),
                     cat(first.added_subgoals, second.added_subgoals),
                     {**first.extras, **second.extras})


def parse_fix(document: Any, domain: Domain | None = None) -> DomainFix:
    """Build a ``DomainFix`` from its JSON document (a dict or a JSON string).

    Bare action names in ``missing_actions`` must have an entry in
    ``action_definitions``. With ``domain`` given, new actions are checked
    against its predicate declarations.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise FixError(f"fix document is not JSON: {exc}") from None
    if not isinstance(document, dict):
        raise FixError("fix document must be a JSON object")

    extras = {}
    for key, value in document.items():
        if key in _KNOWN_KEYS:
            continue
        if key not in _COMMENTARY_KEYS:
            log.warning("fix document: unknown key %r kept as-is", key)
        extras[key] = value

    definitions = document.get("action_definitions") or {}
    if not isinstance(definitions, dict):
        raise FixError("action_definitions must map names to action text")
    actions = []
    for entry in document.get("missing_actions") or []:
        if not isinstance(entry, str):
            raise FixError(f"missing_actions entries must be names, got {entry!r}")
        name = entry.strip().lower()
        text = definitions.get(name, definitions.get(entry))
        if text is None:
            raise FixError(f"missing action {name!r} has no definition in action_definitions")
        try:
            schema = parse_action(text, domain)
        except ParseError as exc:
            raise FixError(f"definition of {name!r}: {exc}") from None
        if schema.name != name:
            raise FixError(f"definition for {name!r} declares action {schema.name!r}")
        actions.append(schema)

    pres = []
    for entry in document.get("missing_preconditions") or []:
        if not isinstance(entry, dict) or "action" not in entry or "atom" not in entry:
            raise FixError(f"missing_preconditions entry needs 'action' and 'atom': {entry!r}")
        try:
            atom = parse_atom(entry["atom"])
        except ParseError as exc:
            raise FixError(str(exc)) from None
        pres.append(MissingPrecondition(str(entry["action"]).lower(), atom, str(entry.get("why", ""))))

    try:
        subgoals = tuple(parse_atom(a) for a in document.get("added_subgoals") or [])
        soft = []
        for entry in document.get("added_soft_goals") or []:
            if not isinstance(entry, dict) or "atom" not in entry:
                raise FixError(f"added_soft_goals entry needs 'atom': {entry!r}")
            penalty = entry.get("penalty", 1)
            if not isinstance(penalty, (int, float)) or penalty < 0:
                raise FixError(f"soft goal penalty must be non-negative: {entry!r}")
            soft.append(SoftGoal(parse_atom(entry["atom"]), penalty))
    except ParseError as exc:
        raise FixError(str(exc)) from None

    fix = DomainFix(tuple(actions), tuple(pres), tuple(soft), subgoals, extras)
    if fix.is_empty():
        raise FixError("fix is empty: no actions, preconditions, or goals to add")
    return fix


def print_fix(fix: DomainFix) -> dict:
    doc: dict[str, Any] = {}
    if fix.missing_actions:
        doc["missing_actions"] = [a.name for a in fix.missing_actions]
        doc["action_definitions"] = {a.name: format_action(a).strip() for a in fix.missing_actions}
    if fix.missing_preconditions:
        doc["missing_preconditions"] = [
            {"action": m.action, "atom": str(m.atom), "why": m.why} for m in fix.missing_preconditions]
    if fix.added_subgoals:
        doc["added_subgoals"] = [str(a) for a in fix.added_subgoals]
    if fix.added_soft_goals:
        doc["added_soft_goals"] = [{"atom": str(s.atom), "penalty": s.penalty}
                                   for s in fix.added_soft_goals]
    for key, value in fix.extras.items():
        doc.setdefault(key, value)
    return doc


# --------------------------------------------------------------------------
# applying a fix


def _covered(domain: Domain, objs: dict[str, str], schema: ActionSchema, atom: Atom) -> bool:
    """True if some existing precondition of ``schema`` can bind to ``atom``."""
    params = dict(schema.params)
    for lit in schema.preconditions:
        if not lit.positive or lit.atom.predicate != atom.predicate:
            continue
        if len(lit.atom.args) != len(atom.args):
            continue
        ok = True
        for have, want in zip(lit.atom.args, atom.args):
            if have == want:
                continue
            if is_variable(have) and want in objs and domain.is_subtype(objs[want], params[have]):
                continue
            ok = False
            break
        if ok:
            return True
    return False


def apply_fixes(domain: Domain, problem: Problem, fix: DomainFix) -> tuple[Domain, Problem]:
    """Return a repaired (domain, problem); the inputs are left untouched."""
    if fix.is_empty():
        raise FixError("fix is empty")
    actions = list(domain.actions)
    names = {a.name for a in actions}
    for schema in fix.missing_actions:
        if schema.name in names:
            raise FixError(f"action {schema.name!r} already exists in domain {domain.name!r}")
        names.add(schema.name)
        actions.append(schema)

    objs = object_types(domain, problem)
    constants = dict(domain.constants)
    by_name = {a.name: i for i, a in enumerate(actions)}
    for mp in fix.missing_preconditions:
        if mp.action not in by_name:
            raise FixError(f"missing precondition refers to unknown action {mp.action!r}")
        i = by_name[mp.action]
        schema = actions[i]
        lit = Literal(mp.atom, True)
        if lit in schema.preconditions:
            continue
        lifted = all(is_variable(t) or t in constants for t in mp.atom.args)
        if not lifted:
            # ground atoms naming problem objects are a diagnosis of an existing
            # requirement; they cannot become part of a lifted schema
            if _covered(domain, objs, schema, mp.atom):
                continue
            raise FixError(f"precondition {mp.atom} for {mp.action!r} names objects that are "
                           "not domain constants and matches no existing precondition")
        for t in mp.atom.args:
            if is_variable(t) and t not in schema.param_names:
                raise FixError(f"precondition {mp.atom}: {t} is not a parameter of {mp.action!r}")
        actions[i] = replace(schema, preconditions=schema.preconditions + (lit,))

    new_domain = replace(domain, actions=tuple(actions))
    goal = list(problem.goal)
    for atom in fix.added_subgoals:
        if Literal(atom, True) not in goal:
            goal.append(Literal(atom, True))
    soft = list(problem.soft_goals)
    for sg in fix.added_soft_goals:
        if sg not in soft:
            soft.append(sg)
    new_problem = replace(problem, goal=tuple(goal), soft_goals=tuple(soft))
    try:
        check_domain(new_domain)
        check_problem(new_domain, new_problem)
    except ModelError as exc:
        raise FixError(f"repaired model is invalid: {exc}") from None
    return new_domain, new_problem


# --------------------------------------------------------------------------
# soft goals


def solve_with_soft_goals(task: GroundTask, algo: str = "astar", heuristic: str = "hmax",
                          limits: Limits | None = None) -> SearchResult:
    """Min-cost plan where cost = length + penalties of unmet soft goals.

    Solves the hard goal alone and then hard goal plus each subset of the soft
    goals that is relaxed-reachable, keeping the cheapest. Ties keep the plan
    found first (smaller subsets come first).
    """
    soft = task.soft_goals
    if len(soft) > MAX_SOFT_GOALS:
        raise ValueError(f"at most {MAX_SOFT_GOALS} soft goals are supported, got {len(soft)}")
    graph = RelaxedGraph(task)
    reach = graph.reachable(task.init)
    base_task = replace(task, soft_goals=())

    def penalty(plan_final: int) -> float:
        return sum(p for i, p in soft if not plan_final >> i & 1)

    best: SearchResult | None = None
    expansions = generated = 0
    wall = 0.0
    for size in range(len(soft) + 1):
        for subset in itertools.combinations(soft, size):
            mask = 0
            for i, _ in subset:
                mask |= 1 << i
            if mask & ~reach:
                continue
            sub = replace(base_task, goal=task.goal | mask)
            res = solve(sub, algo, heuristic, limits)
            expansions += res.expansions
            generated += res.generated
            wall += res.wall_time
            if res.status != Status.SOLVED:
                if size == 0:
                    res.expansions, res.generated, res.wall_time = expansions, generated, wall
                    return res
                continue
            final = plan_states(sub, res.plan)[-1]
            res.cost = len(res.plan) + penalty(final)
            if best is None or res.cost < best.cost:
                best = res
    assert best is not None
    best.expansions, best.generated, best.wall_time = expansions, generated, wall
    return best
