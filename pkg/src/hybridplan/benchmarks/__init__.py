"""Bundled benchmark tasks and the two ablation experiments.

Each benchmark directory holds ``domain.pddl``, ``problem.pddl``, an optional
``soft_goals.json`` sidecar, ``fixtures.json`` for the scripted advisor and
``golden/*.plan`` reference plans.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from importlib import resources
from importlib.abc import Traversable
from typing import Any

from ..advisor import ScriptedBackend
from ..fixes import apply_fixes, parse_fix, solve_with_soft_goals
from ..model import Domain, Plan, Problem, SoftGoal, ground
from ..parser import parse_domain, parse_plan, parse_problem, parse_soft_goals
from ..search import Limits, Status, solve
from ..validate import validate_plan

BENCHMARKS = ("beer", "microwave-flawed", "microwave-fixed", "cube", "cube-augmented")
ABLATIONS = ("beer-softgoal", "cube-preconditions")
HEURISTICS = ("goalcount", "hmax", "hadd", "lmcount")


class UnknownBenchmark(KeyError):
    pass


@dataclass
class Benchmark:
    name: str
    domain: Domain
    problem: Problem
    soft_goals: list[SoftGoal] = field(default_factory=list)
    fixtures: dict[str, Any] = field(default_factory=dict)
    golden: dict[str, Plan] = field(default_factory=dict)

    def advisor(self) -> ScriptedBackend:
        return ScriptedBackend(self.fixtures, source=f"{self.name}/fixtures.json")

    def with_soft_goals(self, penalty: float | None = None) -> Problem:
        """The problem with its sidecar soft goals attached (optionally re-weighted)."""
        goals = [sg if penalty is None else SoftGoal(sg.atom, penalty) for sg in self.soft_goals]
        return self.problem.with_soft_goals(goals)


def asset_dir(name: str) -> Traversable:
    if name not in BENCHMARKS:
        raise UnknownBenchmark(f"unknown benchmark {name!r}; expected one of {', '.join(BENCHMARKS)}")
    return resources.files(__name__).joinpath(name)


def asset_path(name: str, filename: str) -> str:
    """Filesystem path of an asset (package data is installed as plain files)."""
    return str(asset_dir(name).joinpath(filename))


def load_benchmark(name: str) -> Benchmark:
    root = asset_dir(name)
    domain_file = f"{name}/domain.pddl"
    domain = parse_domain(root.joinpath("domain.pddl").read_text(encoding="utf-8"), domain_file)
    problem = parse_problem(root.joinpath("problem.pddl").read_text(encoding="utf-8"), domain,
                            f"{name}/problem.pddl")
    soft: list[SoftGoal] = []
    sidecar = root.joinpath("soft_goals.json")
    if sidecar.is_file():
        soft = parse_soft_goals(sidecar.read_text(encoding="utf-8"))
    fixtures: dict[str, Any] = {}
    fixture_file = root.joinpath("fixtures.json")
    if fixture_file.is_file():
        fixtures = json.loads(fixture_file.read_text(encoding="utf-8"))
    golden: dict[str, Plan] = {}
    golden_dir = root.joinpath("golden")
    if golden_dir.is_dir():
        for entry in sorted(golden_dir.iterdir(), key=lambda e: e.name):
            if entry.name.endswith(".plan"):
                golden[entry.name[:-5]] = parse_plan(entry.read_text(encoding="utf-8"))
    return Benchmark(name, domain, problem, soft, fixtures, golden)


# --------------------------------------------------------------------------
# ablations


@dataclass
class AblationReport:
    name: str
    columns: list[str]
    rows: list[dict[str, Any]]
    summary: dict[str, Any] = field(default_factory=dict)

    def table(self) -> str:
        cells = [[_fmt(r.get(c)) for c in self.columns] for r in self.rows]
        widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(self.columns)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(self.columns, widths)),
                 "  ".join("-" * w for w in widths)]
        lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
        for key, value in self.summary.items():
            lines.append(f"{key}: {_fmt(value)}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {"name": self.name, "rows": self.rows, "summary": self.summary}


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4g}"
    if isinstance(value, bool):
        return "yes" if value else "no"
    return "-" if value is None else str(value)


def _best_time(fn, repeat: int) -> tuple[Any, float]:
    best, result = float("inf"), None
    for _ in range(max(1, repeat)):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return result, best


def _beer_softgoal(penalties=(0, 2), algorithm: str = "astar", heuristic: str = "hmax",
                   repeat: int = 5) -> AblationReport:
    bench = load_benchmark("beer")
    variants: list[tuple[str, Problem]] = [("hard goal only", bench.problem)]
    for p in penalties:
        variants.append((f"soft goal, penalty {p:g}", bench.with_soft_goals(p)))
    rows = []
    for label, problem in variants:
        task = ground(bench.domain, problem)
        res, wall = _best_time(lambda: solve_with_soft_goals(task, algorithm, heuristic), repeat)
        if res.status != Status.SOLVED:
            rows.append({"variant": label, "status": res.status.value})
            continue
        verdict = validate_plan(bench.domain, problem, res.plan)
        rows.append({
            "variant": label,
            "status": res.status.value,
            "length": len(res.plan),
            "cost": verdict.cost,
            "close-fridge": "close-fridge" in res.plan.names(),
            "fridge-closed": "fridge-closed(fridge)" in {str(a) for a in verdict.final_state},
            "expansions": res.expansions,
            "wall_s": wall,
        })
    base = rows[0].get("wall_s") or 0.0
    summary = {f"overhead[{r['variant']}]": (r["wall_s"] / base - 1.0) if base else None
               for r in rows[1:] if "wall_s" in r}
    return AblationReport("beer-softgoal",
                          ["variant", "status", "length", "cost", "close-fridge", "fridge-closed",
                           "expansions", "wall_s"], rows, summary)


def _cube_preconditions(heuristics=HEURISTICS, algorithm: str = "astar",
                        limits: Limits | None = None) -> AblationReport:
    bench = load_benchmark("cube")
    fix = parse_fix(asset_dir("cube").joinpath("preconditions_fix.json").read_text(encoding="utf-8"),
                    bench.domain)
    aug_domain, aug_problem = apply_fixes(bench.domain, bench.problem, fix)
    before_task = ground(bench.domain, bench.problem)
    after_task = ground(aug_domain, aug_problem)
    rows = []
    for h in heuristics:
        before = solve(before_task, algorithm, h, limits)
        after = solve(after_task, algorithm, h, limits)
        row: dict[str, Any] = {"heuristic": h, "status_before": before.status.value,
                               "status_after": after.status.value,
                               "length_before": len(before.plan) if before.plan else None,
                               "length_after": len(after.plan) if after.plan else None,
                               "expansions_before": before.expansions,
                               "expansions_after": after.expansions,
                               "ratio": after.expansions / before.expansions if before.expansions else None,
                               "wall_before_s": before.wall_time, "wall_after_s": after.wall_time}
        rows.append(row)
    return AblationReport("cube-preconditions",
                          ["heuristic", "length_before", "length_after", "expansions_before",
                           "expansions_after", "ratio", "wall_before_s", "wall_after_s"], rows,
                          {"preconditions added": len(fix.missing_preconditions)})


def run_ablation(name: str, **options: Any) -> AblationReport:
    if name == "beer-softgoal":
        return _beer_softgoal(**options)
    if name == "cube-preconditions":
        return _cube_preconditions(**options)
    raise UnknownBenchmark(f"unknown ablation {name!r}; expected one of {', '.join(ABLATIONS)}")
