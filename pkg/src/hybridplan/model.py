"""Typed STRIPS model and the grounder.

Lifted structures (``Domain``, ``Problem``) are immutable dataclasses. Grounding
turns them into a ``GroundTask`` whose states are plain ``int`` bitmasks over a
lexicographically sorted atom table.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator

ROOT_TYPE = "object"


class ModelError(ValueError):
    """A domain or problem violates a structural invariant."""


class PreconditionError(ValueError):
    """``apply`` was called on an action whose preconditions do not hold."""

    def __init__(self, action: "GroundAction", atom: "Atom", positive: bool = True):
        self.action = action
        self.atom = atom
        self.positive = positive
        what = atom if positive else f"not {atom}"
        super().__init__(f"{action}: precondition {what} does not hold")


def is_variable(term: str) -> bool:
    return term.startswith("?")


@dataclass(frozen=True, order=True)
class Atom:
    predicate: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.predicate}({','.join(self.args)})"

    def substitute(self, binding: dict[str, str]) -> "Atom":
        return Atom(self.predicate, tuple(binding.get(a, a) for a in self.args))


@dataclass(frozen=True, order=True)
class Literal:
    atom: Atom
    positive: bool = True

    def __str__(self) -> str:
        return str(self.atom) if self.positive else f"not {self.atom}"


@dataclass(frozen=True)
class Predicate:
    name: str
    params: tuple[tuple[str, str], ...] = ()

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...] = ()
    preconditions: tuple[Literal, ...] = ()
    add_effects: tuple[Atom, ...] = ()
    del_effects: tuple[Atom, ...] = ()

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p for p, _ in self.params)


@dataclass(frozen=True)
class Domain:
    name: str
    requirements: tuple[str, ...] = ()
    # child type -> parent type; ``object`` is the implicit root
    types: tuple[tuple[str, str], ...] = ()
    predicates: tuple[Predicate, ...] = ()
    actions: tuple[ActionSchema, ...] = ()
    constants: tuple[tuple[str, str], ...] = ()

    def action(self, name: str) -> ActionSchema:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def has_action(self, name: str) -> bool:
        return any(a.name == name for a in self.actions)

    def predicate(self, name: str) -> Predicate:
        for p in self.predicates:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def type_parents(self) -> dict[str, str]:
        return dict(self.types)

    def type_names(self) -> set[str]:
        names = {ROOT_TYPE}
        for child, parent in self.types:
            names.add(child)
            names.add(parent)
        return names

    def is_subtype(self, sub: str, sup: str) -> bool:
        parents = self.type_parents
        seen = set()
        t = sub
        while True:
            if t == sup:
                return True
            if t == ROOT_TYPE or t in seen:
                return sup == ROOT_TYPE
            seen.add(t)
            t = parents.get(t, ROOT_TYPE)


@dataclass(frozen=True)
class SoftGoal:
    atom: Atom
    penalty: float = 1.0


@dataclass(frozen=True)
class Problem:
    name: str
    domain_name: str
    objects: tuple[tuple[str, str], ...] = ()
    init: frozenset[Atom] = frozenset()
    goal: tuple[Literal, ...] = ()
    soft_goals: tuple[SoftGoal, ...] = ()

    def with_soft_goals(self, soft_goals: Iterable[SoftGoal]) -> "Problem":
        return Problem(self.name, self.domain_name, self.objects, self.init,
                       self.goal, tuple(soft_goals))


@dataclass(frozen=True)
class Step:
    """One plan step: an action name with bound arguments."""

    name: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.name}({', '.join(self.args)})"


@dataclass(frozen=True)
class Plan:
    steps: tuple[Step, ...] = ()

    @property
    def length(self) -> int:
        return len(self.steps)

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def lines(self) -> list[str]:
        return [str(s) for s in self.steps]

    def names(self) -> list[str]:
        return [s.name for s in self.steps]


# --------------------------------------------------------------------------
# invariant checks


def check_domain(domain: Domain) -> None:
    """Raise ``ModelError`` unless ``domain`` satisfies the model invariants."""
    if not domain.name:
        raise ModelError("domain name is empty")
    parents = domain.type_parents
    if len(parents) != len(domain.types):
        raise ModelError("type declared twice")
    for t in parents:
        seen = {t}
        p = parents[t]
        while p != ROOT_TYPE:
            if p in seen:
                raise ModelError(f"type hierarchy has a cycle through {t!r}")
            seen.add(p)
            p = parents.get(p, ROOT_TYPE)
    known_types = domain.type_names()

    preds: dict[str, Predicate] = {}
    for pred in domain.predicates:
        if not pred.name:
            raise ModelError("predicate with empty name")
        if pred.name in preds:
            raise ModelError(f"predicate {pred.name!r} declared twice")
        names = [n for n, _ in pred.params]
        if len(set(names)) != len(names):
            raise ModelError(f"predicate {pred.name!r} has duplicate parameter names")
        for _, t in pred.params:
            if t not in known_types:
                raise ModelError(f"predicate {pred.name!r}: unknown type {t!r}")
        preds[pred.name] = pred

    constants = dict(domain.constants)
    for c, t in domain.constants:
        if t not in known_types:
            raise ModelError(f"constant {c!r}: unknown type {t!r}")

    seen_actions = set()
    for act in domain.actions:
        if act.name in seen_actions:
            raise ModelError(f"action {act.name!r} declared twice")
        seen_actions.add(act.name)
        params = dict(act.params)
        if len(params) != len(act.params):
            raise ModelError(f"action {act.name!r} has duplicate parameter names")
        for _, t in act.params:
            if t not in known_types:
                raise ModelError(f"action {act.name!r}: unknown type {t!r}")
        atoms = [lit.atom for lit in act.preconditions] + list(act.add_effects) + list(act.del_effects)
        for atom in atoms:
            pred = preds.get(atom.predicate)
            if pred is None:
                raise ModelError(f"action {act.name!r} uses undeclared predicate {atom.predicate!r}")
            if len(atom.args) != pred.arity:
                raise ModelError(f"action {act.name!r}: {atom} has wrong arity")
            for term, (_, ptype) in zip(atom.args, pred.params):
                if is_variable(term):
                    if term not in params:
                        raise ModelError(f"action {act.name!r}: free variable {term} in {atom}")
                    ttype = params[term]
                elif term in constants:
                    ttype = constants[term]
                else:
                    raise ModelError(f"action {act.name!r}: unknown constant {term!r} in {atom}")
                if not domain.is_subtype(ttype, ptype):
                    raise ModelError(f"action {act.name!r}: {atom} is ill-typed")
        clash = set(act.add_effects) & set(act.del_effects)
        if clash:
            raise ModelError(f"action {act.name!r} both adds and deletes {sorted(map(str, clash))}")


def object_types(domain: Domain, problem: Problem) -> dict[str, str]:
    table = dict(domain.constants)
    for name, t in problem.objects:
        if name in table and table[name] != t:
            raise ModelError(f"object {name!r} declared with two types")
        table[name] = t
    return table


def check_atom(domain: Domain, objs: dict[str, str], atom: Atom) -> None:
    try:
        pred = domain.predicate(atom.predicate)
    except KeyError:
        raise ModelError(f"unknown predicate in {atom}") from None
    if len(atom.args) != pred.arity:
        raise ModelError(f"wrong arity in {atom}")
    for arg, (_, ptype) in zip(atom.args, pred.params):
        if arg not in objs:
            raise ModelError(f"unknown object {arg!r} in {atom}")
        if not domain.is_subtype(objs[arg], ptype):
            raise ModelError(f"type error in {atom}: {arg!r} is not a {ptype}")


def check_problem(domain: Domain, problem: Problem) -> None:
    known_types = domain.type_names()
    for name, t in problem.objects:
        if t not in known_types:
            raise ModelError(f"object {name!r} has unknown type {t!r}")
    objs = object_types(domain, problem)
    for atom in sorted(problem.init):
        check_atom(domain, objs, atom)
    for lit in problem.goal:
        check_atom(domain, objs, lit.atom)
    for sg in problem.soft_goals:
        check_atom(domain, objs, sg.atom)
        if sg.penalty < 0:
            raise ModelError(f"soft goal {sg.atom} has negative penalty")


# --------------------------------------------------------------------------
# grounding


@dataclass(frozen=True)
class GroundAction:
    name: str
    args: tuple[str, ...]
    pre: tuple[int, ...]
    neg_pre: tuple[int, ...]
    add: tuple[int, ...]
    delete: tuple[int, ...]
    cost: int = 1
    pre_mask: int = field(default=0, compare=False, repr=False)
    neg_mask: int = field(default=0, compare=False, repr=False)
    add_mask: int = field(default=0, compare=False, repr=False)
    del_mask: int = field(default=0, compare=False, repr=False)

    def __str__(self) -> str:
        return f"{self.name}({', '.join(self.args)})"


def _mask(indices: Iterable[int]) -> int:
    m = 0
    for i in indices:
        m |= 1 << i
    return m


def iter_bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass(frozen=True)
class GroundTask:
    atoms: tuple[Atom, ...]
    actions: tuple[GroundAction, ...]
    init: int
    goal: int
    goal_neg: int = 0
    soft_goals: tuple[tuple[int, float], ...] = ()
    index: dict[Atom, int] = field(default_factory=dict, compare=False, repr=False)

    def state_atoms(self, state: int) -> list[Atom]:
        return [self.atoms[i] for i in iter_bits(state)]

    def state_of(self, atoms: Iterable[Atom]) -> int:
        return _mask(self.index[a] for a in atoms)

    def is_goal(self, state: int) -> bool:
        return state & self.goal == self.goal and not state & self.goal_neg

    def goal_atoms(self) -> list[Atom]:
        return self.state_atoms(self.goal)


def _objects_by_type(domain: Domain, objs: dict[str, str]) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for t in domain.type_names():
        out[t] = sorted(o for o, ot in objs.items() if domain.is_subtype(ot, t))
    return out


def ground(domain: Domain, problem: Problem) -> GroundTask:
    """Exhaustively instantiate every schema over the typed objects."""
    check_problem(domain, problem)
    objs = object_types(domain, problem)
    by_type = _objects_by_type(domain, objs)

    lifted = []
    for schema in sorted(domain.actions, key=lambda a: a.name):
        names = schema.param_names
        domains = [by_type[t] for _, t in schema.params]
        for combo in itertools.product(*domains):
            binding = dict(zip(names, combo))
            pre = [(lit.atom.substitute(binding), lit.positive) for lit in schema.preconditions]
            add = {a.substitute(binding) for a in schema.add_effects}
            dele = {a.substitute(binding) for a in schema.del_effects} - add
            lifted.append((schema.name, combo, pre, add, dele))

    atom_set: set[Atom] = set(problem.init)
    atom_set.update(lit.atom for lit in problem.goal)
    atom_set.update(sg.atom for sg in problem.soft_goals)
    for _, _, pre, add, dele in lifted:
        atom_set.update(a for a, _ in pre)
        atom_set.update(add)
        atom_set.update(dele)
    atoms = tuple(sorted(atom_set))
    index = {a: i for i, a in enumerate(atoms)}

    actions = []
    for name, combo, pre, add, dele in lifted:
        pos = tuple(sorted({index[a] for a, p in pre if p}))
        neg = tuple(sorted({index[a] for a, p in pre if not p}))
        addi = tuple(sorted(index[a] for a in add))
        deli = tuple(sorted(index[a] for a in dele))
        actions.append(GroundAction(name, combo, pos, neg, addi, deli, 1,
                                    _mask(pos), _mask(neg), _mask(addi), _mask(deli)))

    goal = _mask(index[l.atom] for l in problem.goal if l.positive)
    goal_neg = _mask(index[l.atom] for l in problem.goal if not l.positive)
    return GroundTask(
        atoms=atoms,
        actions=tuple(actions),
        init=_mask(index[a] for a in problem.init),
        goal=goal,
        goal_neg=goal_neg,
        soft_goals=tuple((index[sg.atom], sg.penalty) for sg in problem.soft_goals),
        index=index,
    )


def applicable(state: int, action: GroundAction) -> bool:
    return state & action.pre_mask == action.pre_mask and not state & action.neg_mask


def apply(state: int, action: GroundAction, task: GroundTask | None = None) -> int:
    """Successor of ``state``; raises ``PreconditionError`` naming the first unmet atom."""
    if not applicable(state, action):
        for i in action.pre:
            if not state >> i & 1:
                atom = task.atoms[i] if task else Atom(f"#{i}")
                raise PreconditionError(action, atom, True)
        for i in action.neg_pre:
            if state >> i & 1:
                atom = task.atoms[i] if task else Atom(f"#{i}")
                raise PreconditionError(action, atom, False)
    return (state & ~action.del_mask) | action.add_mask
