"""Forward state-space search over a ``GroundTask``.

Algorithms: ``bfs``, ``astar``, ``idastar``, ``gbfs``, ``ehc``.
Heuristics: ``goalcount``, ``hmax``, ``hadd``, ``lmcount``.

Ties in the open list are broken by lower ``h`` and then by insertion order, so
every run on the same task returns the same plan.
"""

from __future__ import annotations

import heapq
import math
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .model import GroundTask, Plan, Step, apply, iter_bits

ALGORITHMS = ("bfs", "idastar", "astar", "gbfs", "ehc")
HEURISTICS = ("goalcount", "hadd", "hmax", "lmcount")
INF = math.inf


class Status(str, Enum):
    SOLVED = "SOLVED"
    UNSOLVABLE = "UNSOLVABLE"
    TIMEOUT = "TIMEOUT"


@dataclass(frozen=True)
class Limits:
    max_expansions: int = 1_000_000
    timeout: float = 60.0


@dataclass(frozen=True)
class UnsolvabilityCertificate:
    unreachable_goal_atoms: tuple[str, ...] = ()
    orphan_preconditions: tuple[tuple[str, str], ...] = ()
    exhausted: bool = False

    def to_dict(self) -> dict:
        return {
            "unreachable_goal_atoms": list(self.unreachable_goal_atoms),
            "orphan_preconditions": [{"action": a, "atom": p} for a, p in self.orphan_preconditions],
            "exhausted": self.exhausted,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "UnsolvabilityCertificate":
        return cls(
            tuple(doc.get("unreachable_goal_atoms", ())),
            tuple((e["action"], e["atom"]) for e in doc.get("orphan_preconditions", ())),
            bool(doc.get("exhausted", False)),
        )


@dataclass
class SearchResult:
    status: Status
    plan: Plan | None = None
    expansions: int = 0
    generated: int = 0
    wall_time: float = 0.0
    error: UnsolvabilityCertificate | None = None
    reason: str = ""
    cost: float = 0.0


# --------------------------------------------------------------------------
# delete relaxation


def _popcount(x: int) -> int:
    return bin(x).count("1")


class RelaxedGraph:
    """Precomputed structures for reachability and the relaxation heuristics."""

    def __init__(self, task: GroundTask):
        self.task = task
        acts = task.actions
        n = len(task.atoms)
        self.n = n
        self.pre = [a.pre for a in acts]
        self.add = [a.add for a in acts]
        self.cost = [a.cost for a in acts]
        self.pre_masks = [a.pre_mask for a in acts]
        self.add_masks = [a.add_mask for a in acts]
        self.pre_of: list[list[int]] = [[] for _ in range(n)]
        self.adders: list[list[int]] = [[] for _ in range(n)]
        for ai, a in enumerate(acts):
            for p in a.pre:
                self.pre_of[p].append(ai)
            for p in a.add:
                self.adders[p].append(ai)
        self.free = [ai for ai, a in enumerate(acts) if not a.pre]
        self.goal = list(iter_bits(task.goal))

    def reachable(self, state: int) -> int:
        reach = state
        pairs = list(zip(self.pre_masks, self.add_masks))
        changed = True
        while changed:
            changed = False
            rest = []
            for pm, am in pairs:
                if reach & pm == pm:
                    if am & ~reach:
                        reach |= am
                        changed = True
                else:
                    rest.append((pm, am))
            pairs = rest
        return reach

    def atom_costs(self, state: int, additive: bool) -> list[float]:
        """Per-atom h_add / h_max costs from ``state`` (generalised Dijkstra)."""
        cost = [INF] * self.n
        settled = bytearray(self.n)
        heap: list[tuple[float, int]] = []
        for i in iter_bits(state):
            cost[i] = 0
            heap.append((0, i))
        heapq.heapify(heap)
        remaining = [len(p) for p in self.pre]
        acc = [0.0] * len(self.pre)
        add, acost, pre_of = self.add, self.cost, self.pre_of

        def fire(ai: int, base: float) -> None:
            c = base + acost[ai]
            for p in add[ai]:
                if c < cost[p]:
                    cost[p] = c
                    heapq.heappush(heap, (c, p))

        for ai in self.free:
            fire(ai, 0)
        goal_set = set(self.goal)
        goals_left = len(goal_set)
        while heap:
            c, i = heapq.heappop(heap)
            if settled[i] or c > cost[i]:
                continue
            settled[i] = 1
            if i in goal_set:
                goals_left -= 1
                if goals_left == 0:
                    break
            for ai in pre_of[i]:
                if additive:
                    acc[ai] += c
                elif c > acc[ai]:
                    acc[ai] = c
                remaining[ai] -= 1
                if remaining[ai] == 0:
                    fire(ai, acc[ai])
        return cost

    def landmarks(self, state: int, reach: int | None = None) -> dict[int, list[int]]:
        """Fact landmarks not true in ``state`` mapped to their reachable achievers.

        Backchains from the goal: an atom needed by every reachable achiever of a
        landmark is itself a landmark. Returns ``{}`` entries with no achievers
        when the goal is relaxed-unreachable.
        """
        if reach is None:
            reach = self.reachable(state)
        out: dict[int, list[int]] = {}
        queue = deque(g for g in self.goal if not state >> g & 1)
        while queue:
            lm = queue.popleft()
            if lm in out:
                continue
            achievers = [ai for ai in self.adders[lm]
                         if reach & self.pre_masks[ai] == self.pre_masks[ai]]
            out[lm] = achievers
            if not achievers:
                continue
            common = -1
            for ai in achievers:
                common &= self.pre_masks[ai]
            for p in iter_bits(common & ~state):
                if p not in out:
                    queue.append(p)
        return out


def _goalcount(task: GroundTask) -> Callable[[int], float]:
    goal, neg = task.goal, task.goal_neg

    def h(state: int) -> float:
        return _popcount(goal & ~state) + _popcount(neg & state)
    return h


def _relaxation(task: GroundTask, graph: RelaxedGraph, additive: bool) -> Callable[[int], float]:
    goal = graph.goal

    def h(state: int) -> float:
        if task.goal & state == task.goal:
            return 0
        cost = graph.atom_costs(state, additive)
        if additive:
            return sum(cost[g] for g in goal)
        return max(cost[g] for g in goal)
    return h


def _lmcount(task: GroundTask, graph: RelaxedGraph) -> Callable[[int], float]:
    # Uniform cost partitioning: an action's unit cost is split evenly over the
    # landmarks it achieves, which keeps the count admissible.
    def h(state: int) -> float:
        if task.goal & state == task.goal:
            return 0
        reach = graph.reachable(state)
        if task.goal & ~reach:
            return INF
        lms = graph.landmarks(state, reach)
        lm_mask = 0
        for lm in lms:
            lm_mask |= 1 << lm
        total = 0.0
        for lm, achievers in lms.items():
            if not achievers:
                return INF
            total += min(graph.cost[ai] / _popcount(graph.add_masks[ai] & lm_mask)
                         for ai in achievers)
        return math.ceil(total - 1e-9)
    return h


def make_heuristic(task: GroundTask, name: str, graph: RelaxedGraph | None = None) -> Callable[[int], float]:
    if name == "goalcount":
        return _goalcount(task)
    graph = graph or RelaxedGraph(task)
    if name == "hmax":
        return _relaxation(task, graph, additive=False)
    if name == "hadd":
        return _relaxation(task, graph, additive=True)
    if name == "lmcount":
        return _lmcount(task, graph)
    raise ValueError(f"unknown heuristic {name!r}; expected one of {HEURISTICS}")


def heuristic_value(task: GroundTask, state: int, heuristic: str) -> float:
    return make_heuristic(task, heuristic)(state)


# --------------------------------------------------------------------------
# unsolvability certificates


def orphan_preconditions(task: GroundTask) -> list[tuple[str, str]]:
    """(action, atom) pairs whose atom is never added and is false initially.

    Atoms of static relations that do have initial facts (e.g. fixed object
    locations) are typing constraints, not flaws, and are left out.
    """
    added = 0
    for a in task.actions:
        added |= a.add_mask
    init_preds = {task.atoms[i].predicate for i in iter_bits(task.init)}
    fluent_preds = {task.atoms[i].predicate for i in iter_bits(added)}
    out = []
    for a in task.actions:
        for p in a.pre:
            if added >> p & 1 or task.init >> p & 1:
                continue
            pred = task.atoms[p].predicate
            if pred in init_preds and pred not in fluent_preds:
                continue
            out.append((str(a), str(task.atoms[p])))
    return sorted(set(out))


def relaxed_reachability(task: GroundTask, graph: RelaxedGraph | None = None
                         ) -> tuple[frozenset[int], UnsolvabilityCertificate | None]:
    graph = graph or RelaxedGraph(task)
    reach = graph.reachable(task.init)
    missing = task.goal & ~reach
    cert = None
    if missing:
        cert = UnsolvabilityCertificate(
            tuple(str(task.atoms[i]) for i in iter_bits(missing)),
            tuple(orphan_preconditions(task)),
            exhausted=False,
        )
    return frozenset(iter_bits(reach)), cert


# --------------------------------------------------------------------------
# search


class _Budget(Exception):
    def __init__(self, reason: str):
        self.reason = reason


class _Counters:
    def __init__(self, limits: Limits):
        self.limits = limits
        self.expansions = 0
        self.generated = 0
        self.start = time.perf_counter()

    def expand(self) -> None:
        self.expansions += 1
        if self.expansions > self.limits.max_expansions:
            raise _Budget("max-expansions")
        if self.expansions & 255 == 0 and time.perf_counter() - self.start > self.limits.timeout:
            raise _Budget("timeout")


def _successors(task: GroundTask):
    ops = [(a.pre_mask, a.neg_mask, ~a.del_mask, a.add_mask, a.cost, i)
           for i, a in enumerate(task.actions)]

    def succ(state: int):
        for pm, nm, keep, am, c, i in ops:
            if state & pm == pm and not state & nm:
                yield i, (state & keep) | am, c
    return succ


def _extract(task: GroundTask, parent: dict, state: int) -> Plan:
    steps = []
    while parent[state] is not None:
        prev, ai = parent[state]
        a = task.actions[ai]
        steps.append(Step(a.name, a.args))
        state = prev
    return Plan(tuple(reversed(steps)))


def _astar(task, h, ctr, weight_g: bool = True):
    succ = _successors(task)
    is_goal = task.is_goal
    h0 = h(task.init)
    if h0 == INF:
        return None
    counter = 0
    heap = [(h0, h0, counter, 0, task.init)]
    g = {task.init: 0}
    parent = {task.init: None}
    hcache = {task.init: h0}
    closed = set()
    while heap:
        _, hs, _, gs, s = heapq.heappop(heap)
        if weight_g:
            if gs > g[s]:
                continue
        elif s in closed:
            continue
        if is_goal(s):
            return _extract(task, parent, s)
        closed.add(s)
        ctr.expand()
        for ai, t, c in succ(s):
            ctr.generated += 1
            ng = gs + c
            if weight_g:
                if ng >= g.get(t, INF):
                    continue
            elif t in g:
                continue
            g[t] = ng
            parent[t] = (s, ai)
            ht = hcache.get(t)
            if ht is None:
                ht = hcache[t] = h(t)
            if ht == INF:
                continue
            counter += 1
            heapq.heappush(heap, ((ng + ht) if weight_g else ht, ht, counter, ng, t))
    return None


def _bfs(task, ctr):
    succ = _successors(task)
    if task.is_goal(task.init):
        return Plan()
    parent = {task.init: None}
    queue = deque([task.init])
    while queue:
        s = queue.popleft()
        ctr.expand()
        for ai, t, _ in succ(s):
            ctr.generated += 1
            if t in parent:
                continue
            parent[t] = (s, ai)
            if task.is_goal(t):
                return _extract(task, parent, t)
            queue.append(t)
    return None


def _idastar(task, h, ctr):
    succ = _successors(task)
    is_goal = task.is_goal
    hcache: dict[int, float] = {}

    def hv(s: int) -> float:
        v = hcache.get(s)
        if v is None:
            v = hcache[s] = h(s)
        return v

    if is_goal(task.init):
        return Plan()
    bound = hv(task.init)
    while bound < INF:
        path = [task.init]
        acts: list[int] = []
        on_path = {task.init}
        stack = [(0, iter(succ(task.init)))]
        next_bound = INF
        ctr.expand()
        while stack:
            gs, it = stack[-1]
            advanced = False
            for ai, t, c in it:
                ctr.generated += 1
                if t in on_path:
                    continue
                f = gs + c + hv(t)
                if f > bound:
                    next_bound = min(next_bound, f)
                    continue
                path.append(t)
                acts.append(ai)
                if is_goal(t):
                    return Plan(tuple(Step(task.actions[i].name, task.actions[i].args) for i in acts))
                on_path.add(t)
                ctr.expand()
                stack.append((gs + c, iter(succ(t))))
                advanced = True
                break
            if not advanced:
                stack.pop()
                on_path.discard(path.pop())
                if acts:
                    acts.pop()
        bound = next_bound
    return None


def _ehc(task, h, ctr):
    succ = _successors(task)
    s = task.init
    hs = h(s)
    steps: list[Step] = []
    while not task.is_goal(s):
        if hs == INF:
            raise _Budget("ehc-dead-end")
        parent = {s: None}
        queue = deque([s])
        found = None
        while queue and found is None:
            u = queue.popleft()
            ctr.expand()
            for ai, t, _ in succ(u):
                ctr.generated += 1
                if t in parent:
                    continue
                parent[t] = (u, ai)
                if task.is_goal(t) or h(t) < hs:
                    found = t
                    break
                queue.append(t)
        if found is None:
            raise _Budget("ehc-dead-end")
        steps.extend(_extract(task, parent, found).steps)
        s, hs = found, h(found)
    return Plan(tuple(steps))


def solve(task: GroundTask, algo: str = "astar", heuristic: str = "hmax",
          limits: Limits | None = None, precheck: bool = True) -> SearchResult:
    """Run one search. ``precheck`` short-circuits relaxed-unreachable goals."""
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")
    limits = limits or Limits()
    ctr = _Counters(limits)
    graph = RelaxedGraph(task)
    h = make_heuristic(task, heuristic, graph) if algo != "bfs" else None

    def finish(status, plan=None, error=None, reason=""):
        cost = float(len(plan)) if plan is not None else 0.0
        return SearchResult(status, plan, ctr.expansions, ctr.generated,
                            time.perf_counter() - ctr.start, error, reason, cost)

    if precheck:
        _, cert = relaxed_reachability(task, graph)
        if cert is not None:
            return finish(Status.UNSOLVABLE, error=cert, reason="goal-unreachable")
    try:
        if algo == "bfs":
            plan = _bfs(task, ctr)
        elif algo == "astar":
            plan = _astar(task, h, ctr)
        elif algo == "gbfs":
            plan = _astar(task, h, ctr, weight_g=False)
        elif algo == "idastar":
            plan = _idastar(task, h, ctr)
        else:
            plan = _ehc(task, h, ctr)
    except _Budget as exc:
        return finish(Status.TIMEOUT, reason=exc.reason)
    if plan is None:
        _, relaxed = relaxed_reachability(task, graph)
        cert = UnsolvabilityCertificate(
            relaxed.unreachable_goal_atoms if relaxed else (),
            tuple(orphan_preconditions(task)),
            exhausted=True,
        )
        return finish(Status.UNSOLVABLE, error=cert, reason="exhausted")
    return finish(Status.SOLVED, plan)


def plan_states(task: GroundTask, plan: Plan) -> list[int]:
    """States visited by ``plan`` from init, using the grounded operators."""
    lookup = {(a.name, a.args): a for a in task.actions}
    states = [task.init]
    for step in plan.steps:
        states.append(apply(states[-1], lookup[(step.name, step.args)], task))
    return states
