"""Reader/writer for the PDDL subset used here, plus atom/plan/soft-goal text forms."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Iterable, Union

from .model import (
    ROOT_TYPE,
    ActionSchema,
    Atom,
    Domain,
    Literal,
    ModelError,
    Plan,
    Predicate,
    Problem,
    SoftGoal,
    Step,
    check_domain,
    check_problem,
    is_variable,
)

SUPPORTED_REQUIREMENTS = frozenset({":strips", ":typing", ":negative-preconditions"})


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int
    length: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


class ParseError(ValueError):
    def __init__(self, message: str, span: SourceSpan | None = None):
        self.message = message
        self.span = span
        super().__init__(f"{span}: {message}" if span else message)


@dataclass(frozen=True)
class Token:
    text: str
    span: SourceSpan


@dataclass
class SList:
    items: list["Node"]
    span: SourceSpan


Node = Union[Token, SList]


def tokenize(text: str, file: str = "<string>") -> list[Token]:
    tokens = []
    line, col, i, n = 1, 1, 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line, col, i = line + 1, 1, i + 1
        elif c.isspace():
            col, i = col + 1, i + 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            tokens.append(Token(c, SourceSpan(file, line, col, 1)))
            col, i = col + 1, i + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            tokens.append(Token(text[i:j].lower(), SourceSpan(file, line, col, j - i)))
            col, i = col + (j - i), j
    return tokens


def read_sexpr(text: str, file: str = "<string>") -> SList:
    tokens = tokenize(text, file)
    if not tokens:
        raise ParseError("empty input", SourceSpan(file, 1, 1, 0))
    stack: list[SList] = []
    root: SList | None = None
    for tok in tokens:
        if tok.text == "(":
            node = SList([], tok.span)
            if stack:
                stack[-1].items.append(node)
            elif root is not None:
                raise ParseError("unexpected content after top-level form", tok.span)
            else:
                root = node
            stack.append(node)
        elif tok.text == ")":
            if not stack:
                raise ParseError("unbalanced ')'", tok.span)
            stack.pop()
        else:
            if not stack:
                raise ParseError(f"unexpected token {tok.text!r} outside a form", tok.span)
            stack[-1].items.append(tok)
    if stack:
        raise ParseError("missing ')' to close this form", stack[-1].span)
    assert root is not None
    return root


# --------------------------------------------------------------------------
# helpers over the s-expression tree


def _word(node: Node, what: str) -> str:
    if not isinstance(node, Token):
        raise ParseError(f"expected {what}, found a list", node.span)
    return node.text


def _list(node: Node, what: str) -> SList:
    if not isinstance(node, SList):
        raise ParseError(f"expected {what}, found {node.text!r}", node.span)
    return node


def _head(node: SList) -> str | None:
    if node.items and isinstance(node.items[0], Token):
        return node.items[0].text
    return None


def _typed_list(items: list[Node], default: str = ROOT_TYPE) -> list[tuple[str, str]]:
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        name = _word(items[i], "a name")
        if name == "-":
            if i + 1 >= len(items):
                raise ParseError("'-' without a type", items[i].span)
            t = _word(items[i + 1], "a type name")
            if not pending:
                raise ParseError("type annotation without names", items[i].span)
            out.extend((p, t) for p in pending)
            pending = []
            i += 2
            continue
        pending.append(name)
        i += 1
    out.extend((p, default) for p in pending)
    return out


def _atom(node: Node, predicates: dict[str, Predicate] | None) -> Atom:
    lst = _list(node, "an atom")
    if not lst.items:
        raise ParseError("empty atom", lst.span)
    name = _word(lst.items[0], "a predicate name")
    args = tuple(_word(x, "a term") for x in lst.items[1:])
    if predicates is not None:
        pred = predicates.get(name)
        if pred is None:
            raise ParseError(f"undeclared predicate {name!r}", lst.items[0].span)
        if pred.arity != len(args):
            raise ParseError(f"{name!r} expects {pred.arity} arguments, got {len(args)}", lst.span)
    return Atom(name, args)


def _literal(node: Node, predicates: dict[str, Predicate] | None) -> Literal:
    lst = _list(node, "a literal")
    if _head(lst) == "not":
        if len(lst.items) != 2:
            raise ParseError("(not ...) takes exactly one atom", lst.span)
        return Literal(_atom(lst.items[1], predicates), False)
    return Literal(_atom(lst, predicates), True)


def _conjunction(node: Node, predicates: dict[str, Predicate] | None) -> list[Literal]:
    lst = _list(node, "a condition")
    if not lst.items:
        return []
    if _head(lst) == "and":
        return [_literal(x, predicates) for x in lst.items[1:]]
    if _head(lst) in ("or", "imply", "forall", "exists", "when"):
        raise ParseError(f"unsupported connective {_head(lst)!r}", lst.span)
    return [_literal(lst, predicates)]


def _dedupe(seq: Iterable) -> tuple:
    return tuple(dict.fromkeys(seq))


def _sections(root: SList, kind: str) -> tuple[str, list[SList]]:
    if _head(root) != "define":
        raise ParseError("expected (define ...)", root.span)
    if len(root.items) < 2:
        raise ParseError(f"missing ({kind} name)", root.span)
    header = _list(root.items[1], f"({kind} name)")
    if _head(header) != kind or len(header.items) != 2:
        raise ParseError(f"expected ({kind} name)", header.span)
    name = _word(header.items[1], f"{kind} name")
    return name, [_list(x, "a section") for x in root.items[2:]]


def _action(node: SList, predicates: dict[str, Predicate] | None) -> ActionSchema:
    if len(node.items) < 2:
        raise ParseError("action without a name", node.span)
    name = _word(node.items[1], "an action name")
    params: list[tuple[str, str]] = []
    pre: list[Literal] = []
    add: list[Atom] = []
    dele: list[Atom] = []
    items = node.items[2:]
    if len(items) % 2:
        raise ParseError(f"action {name!r}: keyword without a value", node.span)
    for key_node, value in zip(items[0::2], items[1::2]):
        key = _word(key_node, "an action keyword")
        if key == ":parameters":
            params = _typed_list(_list(value, "a parameter list").items)
            for p, _ in params:
                if not is_variable(p):
                    raise ParseError(f"parameter {p!r} must start with '?'", value.span)
        elif key == ":precondition":
            pre = _conjunction(value, predicates)
        elif key == ":effect":
            for lit in _conjunction(value, predicates):
                (add if lit.positive else dele).append(lit.atom)
        else:
            raise ParseError(f"unknown action keyword {key!r}", key_node.span)
    return ActionSchema(name, tuple(params), _dedupe(pre), _dedupe(add), _dedupe(dele))


def _model_check(fn, *args, span: SourceSpan) -> None:
    try:
        fn(*args)
    except ModelError as exc:
        raise ParseError(str(exc), span) from None


def parse_domain(text: str, file: str = "<domain>") -> Domain:
    root = read_sexpr(text, file)
    name, sections = _sections(root, "domain")
    requirements: list[str] = []
    types: list[tuple[str, str]] = []
    constants: list[tuple[str, str]] = []
    predicates: dict[str, Predicate] = {}
    actions: list[ActionSchema] = []
    seen_sections: set[str] = set()
    for sec in sections:
        head = _head(sec)
        if head is None:
            raise ParseError("section without a keyword", sec.span)
        if head in seen_sections and head != ":action":
            raise ParseError(f"duplicate section {head}", sec.span)
        seen_sections.add(head)
        if head == ":requirements":
            for tok in sec.items[1:]:
                req = _word(tok, "a requirement flag")
                if req not in SUPPORTED_REQUIREMENTS:
                    raise ParseError(f"unsupported requirement {req}", tok.span)
                requirements.append(req)
        elif head == ":types":
            types = _typed_list(sec.items[1:])
            types = [(c, p) for c, p in types if c != ROOT_TYPE]
        elif head == ":constants":
            constants = _typed_list(sec.items[1:])
        elif head == ":predicates":
            for item in sec.items[1:]:
                lst = _list(item, "a predicate declaration")
                if not lst.items:
                    raise ParseError("empty predicate declaration", lst.span)
                pname = _word(lst.items[0], "a predicate name")
                if pname in predicates:
                    raise ParseError(f"predicate {pname!r} declared twice", lst.span)
                predicates[pname] = Predicate(pname, tuple(_typed_list(lst.items[1:])))
        elif head == ":action":
            act = _action(sec, predicates)
            if any(a.name == act.name for a in actions):
                raise ParseError(f"duplicate action {act.name!r}", sec.span)
            actions.append(act)
        else:
            raise ParseError(f"unsupported domain section {head}", sec.span)
    if requirements and ":negative-preconditions" not in requirements:
        for act in actions:
            if any(not lit.positive for lit in act.preconditions):
                raise ParseError(f"action {act.name!r} uses a negative precondition without "
                                 ":negative-preconditions", root.span)
    domain = Domain(name, tuple(requirements), tuple(types), tuple(predicates.values()),
                    tuple(actions), tuple(constants))
    _model_check(check_domain, domain, span=root.span)
    return domain


def parse_action(text: str, domain: Domain | None = None, file: str = "<action>") -> ActionSchema:
    """Parse a standalone ``(:action ...)`` form, checked against ``domain``'s predicates if given."""
    node = read_sexpr(text, file)
    if _head(node) != ":action":
        raise ParseError("expected (:action ...)", node.span)
    preds = {p.name: p for p in domain.predicates} if domain is not None else None
    return _action(node, preds)


def parse_problem(text: str, domain: Domain, file: str = "<problem>") -> Problem:
    root = read_sexpr(text, file)
    name, sections = _sections(root, "problem")
    preds = {p.name: p for p in domain.predicates}
    domain_name = domain.name
    objects: list[tuple[str, str]] = []
    init: list[Atom] = []
    goal: list[Literal] = []
    for sec in sections:
        head = _head(sec)
        if head == ":domain":
            domain_name = _word(sec.items[1], "a domain name") if len(sec.items) == 2 else ""
            if domain_name != domain.name:
                raise ParseError(f"problem is for domain {domain_name!r}, not {domain.name!r}", sec.span)
        elif head == ":objects":
            objects = _typed_list(sec.items[1:])
        elif head == ":init":
            for item in sec.items[1:]:
                init.append(_atom(item, preds))
        elif head == ":goal":
            if len(sec.items) != 2:
                raise ParseError(":goal takes one condition", sec.span)
            goal = _conjunction(sec.items[1], preds)
        elif head == ":requirements":
            continue
        else:
            raise ParseError(f"unsupported problem section {head}", sec.span)
    problem = Problem(name, domain_name, tuple(objects), frozenset(init), _dedupe(goal))
    _model_check(check_problem, domain, problem, span=root.span)
    return problem


# --------------------------------------------------------------------------
# printing


def _fmt_typed(pairs: Iterable[tuple[str, str]], typed: bool) -> str:
    pairs = list(pairs)
    if not typed:
        return " ".join(n for n, _ in pairs)
    parts: list[str] = []
    i = 0
    while i < len(pairs):
        j = i
        while j < len(pairs) and pairs[j][1] == pairs[i][1]:
            j += 1
        parts.append(" ".join(n for n, _ in pairs[i:j]) + f" - {pairs[i][1]}")
        i = j
    return " ".join(parts)


def _fmt_atom(atom: Atom) -> str:
    return "(" + " ".join((atom.predicate,) + atom.args) + ")"


def _fmt_literal(lit: Literal) -> str:
    return _fmt_atom(lit.atom) if lit.positive else f"(not {_fmt_atom(lit.atom)})"


def format_action(act: ActionSchema, typed: bool = True) -> str:
    lines = [f"  (:action {act.name}",
             f"    :parameters ({_fmt_typed(act.params, typed)})"]
    pre = " ".join(_fmt_literal(l) for l in act.preconditions)
    lines.append(f"    :precondition (and {pre})" if pre else "    :precondition (and)")
    eff = [_fmt_atom(a) for a in act.add_effects] + [f"(not {_fmt_atom(a)})" for a in act.del_effects]
    lines.append(f"    :effect (and {' '.join(eff)}))" if eff else "    :effect (and))")
    return "\n".join(lines)


def print_domain(domain: Domain) -> str:
    typed = bool(domain.types) or any(
        t != ROOT_TYPE for _, t in domain.constants
    ) or any(t != ROOT_TYPE for p in domain.predicates for _, t in p.params) or any(
        t != ROOT_TYPE for a in domain.actions for _, t in a.params)
    out = [f"(define (domain {domain.name})"]
    if domain.requirements:
        out.append(f"  (:requirements {' '.join(domain.requirements)})")
    if domain.types:
        out.append(f"  (:types {_fmt_typed(domain.types, True)})")
    if domain.constants:
        out.append(f"  (:constants {_fmt_typed(domain.constants, typed)})")
    out.append("  (:predicates")
    for p in domain.predicates:
        args = _fmt_typed(p.params, typed)
        out.append(f"    ({p.name}{' ' + args if args else ''})")
    out[-1] += ")"
    for act in domain.actions:
        out.append(format_action(act, typed))
    out[-1] += ")"
    return "\n".join(out) + "\n"


def print_problem(problem: Problem) -> str:
    typed = any(t != ROOT_TYPE for _, t in problem.objects)
    out = [f"(define (problem {problem.name})",
           f"  (:domain {problem.domain_name})"]
    if problem.objects:
        out.append(f"  (:objects {_fmt_typed(problem.objects, typed)})")
    out.append("  (:init")
    for atom in sorted(problem.init):
        out.append(f"    {_fmt_atom(atom)}")
    out[-1] += ")"
    goal = " ".join(_fmt_literal(l) for l in problem.goal)
    out.append(f"  (:goal (and {goal})))" if goal else "  (:goal (and)))")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# compact text forms: ``name(arg,...)``

_CALL_RE = re.compile(r"^\s*([^\s(),]+)\s*(?:\((.*)\))?\s*$")


def _parse_call(text: str) -> tuple[str, tuple[str, ...]]:
    m = _CALL_RE.match(text)
    if not m:
        raise ParseError(f"malformed term {text!r}")
    name = m.group(1).lower()
    inner = (m.group(2) or "").strip()
    if not inner:
        return name, ()
    args = tuple(a.strip().lower() for a in inner.split(","))
    if any(not a or re.search(r"[\s()]", a) for a in args):
        raise ParseError(f"malformed argument list in {text!r}")
    return name, args


def parse_atom(text: str) -> Atom:
    """``fridge-closed(fridge)`` / ``name()`` / ``name`` -> Atom."""
    name, args = _parse_call(text)
    return Atom(name, args)


def format_atom(atom: Atom) -> str:
    return str(atom)


def parse_step(text: str) -> Step:
    text = text.strip()
    if text.startswith("("):
        node = read_sexpr(text)
        words = [_word(x, "a term") for x in node.items]
        if not words:
            raise ParseError(f"empty action {text!r}")
        return Step(words[0], tuple(words[1:]))
    name, args = _parse_call(text)
    return Step(name, args)


def parse_plan(text: str) -> Plan:
    """One action per line; blank lines and ``;`` comments are ignored."""
    steps = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        try:
            steps.append(parse_step(line))
        except ParseError as exc:
            raise ParseError(exc.message, SourceSpan("<plan>", lineno, 1, len(raw))) from None
    return Plan(tuple(steps))


def plan_from_lines(lines: Iterable[str]) -> Plan:
    return Plan(tuple(parse_step(l) for l in lines))


def format_plan(plan: Plan) -> str:
    return "".join(f"{s}\n" for s in plan.steps)


# --------------------------------------------------------------------------
# soft-goal sidecar


def parse_soft_goals(doc: Any) -> list[SoftGoal]:
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    if not isinstance(doc, dict) or not isinstance(doc.get("soft_goals"), list):
        raise ParseError("soft-goal document needs an array under 'soft_goals'")
    out = []
    for entry in doc["soft_goals"]:
        if not isinstance(entry, dict) or "atom" not in entry:
            raise ParseError(f"soft goal entry without 'atom': {entry!r}")
        penalty = entry.get("penalty", 1)
        if not isinstance(penalty, (int, float)) or isinstance(penalty, bool) or penalty < 0:
            raise ParseError(f"soft goal penalty must be a non-negative number: {entry!r}")
        out.append(SoftGoal(parse_atom(entry["atom"]), penalty))
    return out


def dump_soft_goals(soft_goals: Iterable[SoftGoal]) -> dict:
    return {"soft_goals": [{"atom": str(sg.atom), "penalty": sg.penalty} for sg in soft_goals]}
