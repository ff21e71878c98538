"""Cache keys for (domain, problem) pairs."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

from .model import ActionSchema, Domain, Problem
from .parser import print_domain

DIGEST_ALGORITHM = "sha256"


@dataclass(frozen=True)
class ProblemSignature:
    domain_digest: str
    problem_digest: str

    def __str__(self) -> str:
        return f"{self.domain_digest}:{self.problem_digest}"

    @classmethod
    def parse(cls, text: str) -> "ProblemSignature":
        d, _, p = text.partition(":")
        if len(d) != 64 or len(p) != 64:
            raise ValueError(f"malformed signature {text!r}")
        return cls(d, p)


def _digest(text: str) -> str:
    return hashlib.new(DIGEST_ALGORITHM, text.encode("utf-8")).hexdigest()


def normalize_domain(domain: Domain) -> Domain:
    """Order every unordered collection so equal domains print identically."""
    actions = tuple(
        ActionSchema(
            a.name,
            a.params,
            tuple(sorted(set(a.preconditions))),
            tuple(sorted(set(a.add_effects))),
            tuple(sorted(set(a.del_effects))),
        )
        for a in sorted(domain.actions, key=lambda a: a.name)
    )
    return replace(
        domain,
        requirements=tuple(sorted(set(domain.requirements))),
        types=tuple(sorted(domain.types)),
        predicates=tuple(sorted(domain.predicates, key=lambda p: p.name)),
        actions=actions,
        constants=tuple(sorted(domain.constants)),
    )


def domain_digest(domain: Domain) -> str:
    return _digest(print_domain(normalize_domain(domain)))


def problem_digest(problem: Problem) -> str:
    init = ",".join(sorted(str(a) for a in problem.init))
    goal = ",".join(sorted(str(l) for l in problem.goal))
    soft = ",".join(sorted(f"{sg.atom}={sg.penalty:g}" for sg in problem.soft_goals))
    return _digest(f"{init}|{goal}|{soft}")


def create_signature(domain: Domain, problem: Problem) -> ProblemSignature:
    return ProblemSignature(domain_digest(domain), problem_digest(problem))
