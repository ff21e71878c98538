import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridplan.model import (
    ActionSchema,
    Atom,
    Domain,
    Literal,
    ModelError,
    Plan,
    PreconditionError,
    Predicate,
    Problem,
    Step,
    applicable,
    apply,
    check_domain,
    check_problem,
    ground,
    iter_bits,
)
from hybridplan.parser import parse_domain, parse_problem

DOMAIN = """
(define (domain d)
  (:requirements :strips :typing :negative-preconditions)
  (:types vehicle - object car - vehicle place)
  (:predicates (at ?v - vehicle ?p - place) (same ?a - place ?b - place) (busy))
  (:action drive
    :parameters (?v - vehicle ?from - place ?to - place)
    :precondition (and (at ?v ?from) (not (busy)))
    :effect (and (at ?v ?to) (not (at ?v ?from)))))
"""
PROBLEM = """
(define (problem p) (:domain d)
  (:objects c1 - car l1 l2 - place)
  (:init (at c1 l1))
  (:goal (and (at c1 l2))))
"""


def _model():
    d = parse_domain(DOMAIN)
    return d, parse_problem(PROBLEM, d)


def test_grounding_enumerates_typed_products():
    d, p = _model()
    task = ground(d, p)
    # one car (a vehicle by subtyping), two places: 1 * 2 * 2 groundings
    assert [str(a) for a in task.actions] == [
        "drive(c1, l1, l1)", "drive(c1, l1, l2)", "drive(c1, l2, l1)", "drive(c1, l2, l2)"]


def test_atom_table_is_sorted_and_covers_every_atom():
    d, p = _model()
    task = ground(d, p)
    assert list(task.atoms) == sorted(task.atoms)
    assert set(task.atoms) == {Atom("at", ("c1", "l1")), Atom("at", ("c1", "l2")), Atom("busy")}


def test_self_loop_keeps_atom_because_delete_happens_before_add():
    d, p = _model()
    task = ground(d, p)
    loop = next(a for a in task.actions if a.args == ("c1", "l1", "l1"))
    # at(c1,l1) is both added and deleted: add wins
    assert loop.delete == ()
    s = apply(task.init, loop, task)
    assert s == task.init


def test_apply_reports_first_unmet_precondition():
    d, p = _model()
    task = ground(d, p)
    a = next(a for a in task.actions if a.args == ("c1", "l2", "l1"))
    with pytest.raises(PreconditionError) as exc:
        apply(task.init, a, task)
    assert exc.value.atom == Atom("at", ("c1", "l2")) and exc.value.positive


def test_negative_precondition_blocks():
    d, p = _model()
    task = ground(d, p)
    busy = task.index[Atom("busy")]
    a = next(a for a in task.actions if a.args == ("c1", "l1", "l2"))
    assert applicable(task.init, a)
    assert not applicable(task.init | 1 << busy, a)
    with pytest.raises(PreconditionError) as exc:
        apply(task.init | 1 << busy, a, task)
    assert not exc.value.positive


@pytest.mark.parametrize("mutate, message", [
    (lambda d: Domain(d.name, d.requirements, d.types + (("place", "car"), ("car2", "car2")),
                      d.predicates, d.actions), "twice|cycle"),
    (lambda d: Domain(d.name, d.requirements, d.types, d.predicates + (Predicate("busy"),), d.actions),
     "declared twice"),
    (lambda d: Domain(d.name, d.requirements, d.types, d.predicates, d.actions + (
        ActionSchema("x", (), (Literal(Atom("nope")),)),)), "undeclared predicate"),
    (lambda d: Domain(d.name, d.requirements, d.types, d.predicates, d.actions + (
        ActionSchema("x", (), (), (Atom("at", ("?v", "?p")),)),)), "free variable"),
    (lambda d: Domain(d.name, d.requirements, d.types, d.predicates, d.actions + (
        ActionSchema("x", (("?p", "place"), ("?q", "place")), (), (Atom("at", ("?p", "?q")),)),)),
     "ill-typed"),
    (lambda d: Domain(d.name, d.requirements, d.types, d.predicates, d.actions + (
        ActionSchema("x", (), (), (Atom("busy"),), (Atom("busy"),)),)), "both adds and deletes"),
    (lambda d: Domain(d.name, d.requirements, d.types, d.predicates, d.actions + d.actions[:1]),
     "declared twice"),
])
def test_check_domain_rejects(mutate, message):
    d, _ = _model()
    check_domain(d)
    with pytest.raises(ModelError, match=message):
        check_domain(mutate(d))


def test_check_problem_rejects_bad_objects_and_types():
    d, p = _model()
    bad = Problem(p.name, p.domain_name, p.objects, p.init | {Atom("at", ("l1", "l2"))}, p.goal)
    with pytest.raises(ModelError, match="type error"):
        check_problem(d, bad)
    bad = Problem(p.name, p.domain_name, p.objects, p.init, (Literal(Atom("at", ("c9", "l1"))),))
    with pytest.raises(ModelError, match="unknown object"):
        check_problem(d, bad)


def test_plan_and_step_text_forms():
    plan = Plan((Step("move", ("r", "a", "b")), Step("noop")))
    assert plan.lines() == ["move(r, a, b)", "noop()"]
    assert len(plan) == plan.length == 2
    assert str(Atom("p", ("a", "b"))) == "p(a,b)"
    assert str(Literal(Atom("p"), False)) == "not p()"


@given(st.integers(min_value=0, max_value=2 ** 70))
def test_iter_bits_matches_binary_expansion(mask):
    assert list(iter_bits(mask)) == [i for i in range(mask.bit_length()) if mask >> i & 1]


@settings(max_examples=60, deadline=None)
@given(st.sets(st.sampled_from(["a", "b", "c", "d"])), st.data())
def test_ground_successor_matches_set_semantics(init, data):
    """Bitmask successor equals (s - del) | add on atom sets, for every grounding."""
    names = ["a", "b", "c", "d"]
    preds = tuple(Predicate(n) for n in names)
    acts = []
    for k in range(3):
        pre = data.draw(st.sets(st.sampled_from(names), max_size=2))
        add = data.draw(st.sets(st.sampled_from(names), min_size=1, max_size=2))
        dele = data.draw(st.sets(st.sampled_from([n for n in names if n not in add]), max_size=2))
        acts.append(ActionSchema(f"x{k}", (), tuple(Literal(Atom(n)) for n in sorted(pre)),
                                 tuple(Atom(n) for n in sorted(add)), tuple(Atom(n) for n in sorted(dele))))
    d = Domain("t", (":strips",), (), preds, tuple(acts))
    p = Problem("t", "t", (), frozenset(Atom(n) for n in init), (Literal(Atom("a")),))
    task = ground(d, p)
    for ga, schema in itertools.product(task.actions, acts):
        if ga.name != schema.name:
            continue
        state = {a.predicate for a in task.state_atoms(task.init)}
        if not {l.atom.predicate for l in schema.preconditions} <= state:
            assert not applicable(task.init, ga)
            continue
        expect = (state - {a.predicate for a in schema.del_effects}) | {a.predicate for a in schema.add_effects}
        got = {a.predicate for a in task.state_atoms(apply(task.init, ga, task))}
        assert got == expect
