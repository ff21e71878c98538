"""Plan validator.

Interprets the lifted model directly: bind the step's arguments to the schema
parameters, check the instantiated preconditions against a set of ground atoms,
then apply delete and add effects. It never touches the grounder or the search
successor function, so it can be used as an oracle for both.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import Atom, Domain, Plan, Problem, object_types


@dataclass
class Verdict:
    valid: bool
    # "ok" | "unknown-action" | "bad-arguments" | "precondition" | "goal"
    reason: str = "ok"
    failed_step: int | None = None
    unmet: str | None = None
    missing_goals: list[str] = field(default_factory=list)
    soft_goals_met: list[str] = field(default_factory=list)
    soft_goals_unmet: list[str] = field(default_factory=list)
    penalty: float = 0.0
    final_state: frozenset[Atom] = frozenset()
    length: int = 0

    @property
    def cost(self) -> float:
        """Plan cost including soft-goal penalties; only meaningful when valid."""
        return self.length + self.penalty

    def describe(self) -> str:
        if self.valid:
            msg = f"valid plan ({self.length} steps)"
        elif self.reason == "goal":
            msg = "goal not satisfied: missing " + ", ".join(self.missing_goals)
        elif self.reason == "precondition":
            msg = f"step {self.failed_step + 1}: precondition {self.unmet} does not hold"
        elif self.reason == "unknown-action":
            msg = f"step {self.failed_step + 1}: unknown action {self.unmet}"
        else:
            msg = f"step {self.failed_step + 1}: {self.unmet}"
        lines = [msg]
        for sg in self.soft_goals_met:
            lines.append(f"soft goal {sg}: met")
        for sg in self.soft_goals_unmet:
            lines.append(f"soft goal {sg}: unmet")
        return "\n".join(lines)


def _holds(state: set, atom: tuple, positive: bool) -> bool:
    return (atom in state) == positive


def validate_plan(domain: Domain, problem: Problem, plan: Plan) -> Verdict:
    schemas = {a.name: a for a in domain.actions}
    objs = object_types(domain, problem)
    state = {(a.predicate,) + a.args for a in problem.init}

    for idx, step in enumerate(plan.steps):
        schema = schemas.get(step.name)
        if schema is None:
            return Verdict(False, "unknown-action", idx, step.name, length=len(plan))
        if len(step.args) != len(schema.params):
            return Verdict(False, "bad-arguments", idx,
                           f"{step.name} takes {len(schema.params)} arguments", length=len(plan))
        binding = {}
        for (var, vtype), arg in zip(schema.params, step.args):
            if arg not in objs:
                return Verdict(False, "bad-arguments", idx, f"unknown object {arg}", length=len(plan))
            if not domain.is_subtype(objs[arg], vtype):
                return Verdict(False, "bad-arguments", idx, f"{arg} is not a {vtype}", length=len(plan))
            binding[var] = arg

        def inst(atom: Atom) -> tuple:
            return (atom.predicate,) + tuple(binding.get(t, t) for t in atom.args)

        for lit in schema.preconditions:
            g = inst(lit.atom)
            if not _holds(state, g, lit.positive):
                shown = f"{g[0]}({','.join(g[1:])})"
                return Verdict(False, "precondition", idx,
                               shown if lit.positive else f"not {shown}", length=len(plan))
        adds = [inst(a) for a in schema.add_effects]
        for a in schema.del_effects:
            state.discard(inst(a))
        state.update(adds)

    final = frozenset(Atom(t[0], t[1:]) for t in state)
    missing = [str(l) for l in problem.goal
               if not _holds(state, (l.atom.predicate,) + l.atom.args, l.positive)]
    met, unmet, penalty = [], [], 0.0
    for sg in problem.soft_goals:
        if (sg.atom.predicate,) + sg.atom.args in state:
            met.append(str(sg.atom))
        else:
            unmet.append(str(sg.atom))
            penalty += sg.penalty
    return Verdict(
        valid=not missing,
        reason="goal" if missing else "ok",
        missing_goals=missing,
        soft_goals_met=met,
        soft_goals_unmet=unmet,
        penalty=penalty,
        final_state=final,
        length=len(plan),
    )
