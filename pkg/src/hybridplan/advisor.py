"""The three advisor modes (review, fix, gap analysis) and their backends.

Two backends speak the same small protocol: ``request(mode, signature, payload)``
returns the mode's JSON reply. ``ScriptedBackend`` answers from a fixture file
keyed ``"<mode>:<signature>"``; ``HttpBackend`` POSTs to a chat-style endpoint.
Nothing a backend says is trusted: plans go through the validator and fixes
through ``fixes.parse_fix``/``apply_fixes`` before they are handed back.
"""

from __future__ import annotations

import copy
import json
import logging
import os
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import requests

from .fixes import DomainFix, FixError, apply_fixes, parse_fix
from .model import Domain, Plan, Problem
from .parser import ParseError, parse_step, print_domain, print_problem
from .search import UnsolvabilityCertificate
from .signature import create_signature
from .validate import Verdict, validate_plan

log = logging.getLogger(__name__)

MODES = ("review", "fix", "gap")
URL_ENV = "PLAN_ADVISOR_URL"
TOKEN_ENV = "PLAN_ADVISOR_TOKEN"


class AdvisorUnavailable(RuntimeError):
    """Transport failure or timeout after all retries."""


class AdvisorResponseError(ValueError):
    """The backend answered, but not with something usable."""


class FixedPlanInvalid(ValueError):
    def __init__(self, message: str, verdict: Verdict | None = None):
        super().__init__(message)
        self.verdict = verdict


@dataclass(frozen=True)
class ReviewVerdict:
    is_good: bool
    feedback: str = ""

    def __post_init__(self):
        if self.is_good and self.feedback:
            raise ValueError("an accepting review carries no feedback")
        if not self.is_good and not self.feedback.strip():
            raise ValueError("a rejecting review must say what is wrong")

    @classmethod
    def from_json(cls, doc: Any) -> "ReviewVerdict":
        if not isinstance(doc, dict) or not isinstance(doc.get("is_good"), bool):
            raise AdvisorResponseError(f"review reply needs a boolean 'is_good': {doc!r}")
        if doc["is_good"]:
            return cls(True, "")
        feedback = doc.get("feedback")
        if not isinstance(feedback, str) or not feedback.strip():
            raise AdvisorResponseError("review rejected the plan without feedback")
        return cls(False, feedback.strip())


@dataclass(frozen=True)
class GapAnalysis:
    missing_actions: tuple[str, ...] = ()
    missing_preconditions: tuple[dict, ...] = ()
    suggested_plan: tuple[str, ...] = ()
    rationale: str = ""
    action_definitions: dict[str, str] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not (self.missing_actions or self.missing_preconditions)

    @classmethod
    def from_json(cls, doc: Any) -> "GapAnalysis":
        if not isinstance(doc, dict):
            raise AdvisorResponseError(f"gap analysis must be a JSON object, got {type(doc).__name__}")
        try:
            return cls(
                tuple(str(a) for a in doc.get("missing_actions") or ()),
                tuple(dict(p) for p in doc.get("missing_preconditions") or ()),
                tuple(str(s) for s in doc.get("suggested_plan") or ()),
                str(doc.get("rationale") or ""),
                {str(k): str(v) for k, v in (doc.get("action_definitions") or {}).items()},
            )
        except (TypeError, ValueError, AttributeError) as exc:
            raise AdvisorResponseError(f"malformed gap analysis: {exc}") from None

    def to_json(self) -> dict:
        doc: dict[str, Any] = {"missing_actions": list(self.missing_actions),
                               "missing_preconditions": [dict(p) for p in self.missing_preconditions]}
        if self.action_definitions:
            doc["action_definitions"] = dict(self.action_definitions)
        if self.suggested_plan:
            doc["suggested_plan"] = list(self.suggested_plan)
        if self.rationale:
            doc["rationale"] = self.rationale
        return doc

    def to_fix(self, domain: Domain | None = None) -> DomainFix:
        return parse_fix(self.to_json(), domain)


# --------------------------------------------------------------------------
# backends


def load_prompt(mode: str) -> str:
    return resources.files("hybridplan").joinpath("prompts", f"{mode}.txt").read_text(encoding="utf-8")


def extract_json(text: str) -> Any:
    """First balanced JSON object in ``text``; a bare ``null`` reply is None."""
    stripped = text.strip()
    if stripped == "null":
        return None
    start = stripped.find("{")
    while start != -1:
        depth, in_str, esc = 0, False, False
        for i in range(start, len(stripped)):
            c = stripped[i]
            if in_str:
                if esc:
                    esc = False
                elif c == "\\":
                    esc = True
                elif c == '"':
                    in_str = False
            elif c == '"':
                in_str = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    try:
                        return json.loads(stripped[start:i + 1])
                    except json.JSONDecodeError:
                        break
        start = stripped.find("{", start + 1)
    raise AdvisorResponseError("no JSON object in advisor reply")


class AdvisorBackend:
    kind = "abstract"

    @property
    def ident(self) -> str:
        return self.kind

    def request(self, mode: str, signature: str, payload: dict) -> Any:
        raise NotImplementedError


class ScriptedBackend(AdvisorBackend):
    """Deterministic answers from a fixture document.

    A fixture value is either the reply itself or ``{"cases": [...], "default": reply}``
    where each case is ``{"plan": [...], "response": reply}`` and matches when the
    plan sent to the advisor is the same step sequence. Without a matching entry,
    review accepts, gap analysis finds nothing, and fix fails.
    """

    kind = "scripted"

    def __init__(self, fixtures: dict | None = None, source: str = "<memory>"):
        self.fixtures = fixtures or {}
        self.source = source
        self.calls: list[tuple[str, str]] = []

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ScriptedBackend":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise AdvisorUnavailable(f"cannot load fixtures {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise AdvisorUnavailable(f"fixtures {path} must be a JSON object")
        return cls(doc, str(path))

    @property
    def ident(self) -> str:
        return f"scripted:{Path(self.source).name}"

    def _lookup(self, mode: str, signature: str, payload: dict) -> tuple[bool, Any]:
        key = f"{mode}:{signature}"
        if key not in self.fixtures:
            return False, None
        entry = self.fixtures[key]
        if isinstance(entry, dict) and ("cases" in entry or "default" in entry):
            sent = _normalize_steps(payload.get("plan") or [])
            for case in entry.get("cases", []):
                if _normalize_steps(case.get("plan", [])) == sent:
                    return True, case.get("response")
            if "default" in entry:
                return True, entry["default"]
            return False, None
        return True, entry

    def request(self, mode: str, signature: str, payload: dict) -> Any:
        if mode not in MODES:
            raise ValueError(f"unknown advisor mode {mode!r}")
        self.calls.append((mode, signature))
        found, reply = self._lookup(mode, signature, payload)
        if not found:
            if mode == "review":
                return {"is_good": True, "feedback": ""}
            if mode == "gap":
                return None
            raise AdvisorResponseError(f"no scripted fix for {signature}")
        return copy.deepcopy(reply)


def _normalize_steps(lines: list) -> list[str]:
    out = []
    for line in lines:
        try:
            out.append(str(parse_step(str(line))))
        except ParseError:
            out.append(str(line).strip())
    return out


class HttpBackend(AdvisorBackend):
    """POST ``{mode, system, domain_text, problem_text, ...}`` and read back JSON.

    Retries timeouts, connection errors, 429 and 5xx with exponential backoff;
    gives up with ``AdvisorUnavailable``.
    """

    kind = "http"

    def __init__(self, url: str | None = None, token: str | None = None, timeout: float = 30.0,
                 max_retries: int = 3, backoff: float = 0.5, session: requests.Session | None = None):
        self.url = url or os.environ.get(URL_ENV)
        if not self.url:
            raise AdvisorUnavailable(f"no advisor endpoint: set {URL_ENV}")
        self.token = token if token is not None else os.environ.get(TOKEN_ENV)
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.session = session or requests.Session()
        self.sleep = time.sleep

    @property
    def ident(self) -> str:
        return f"http:{self.url}"

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def request(self, mode: str, signature: str, payload: dict) -> Any:
        body = {"mode": mode, "system": load_prompt(mode), **payload}
        last = ""
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.session.post(self.url, json=body, headers=self._headers(), timeout=self.timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.warning("advisor %s attempt %d failed: %s", mode, attempt + 1, last)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                log.warning("advisor %s attempt %d failed: %s", mode, attempt + 1, last)
                continue
            if resp.status_code >= 400:
                raise AdvisorUnavailable(f"advisor rejected the request: HTTP {resp.status_code}")
            return _unwrap(resp.text)
        raise AdvisorUnavailable(f"advisor unreachable after {self.max_retries + 1} attempts ({last})")


def _unwrap(text: str) -> Any:
    """Accept a bare reply, or one wrapped in a chat-completion envelope."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        return extract_json(text)
    if isinstance(doc, dict):
        if isinstance(doc.get("choices"), list) and doc["choices"]:
            content = (doc["choices"][0].get("message") or {}).get("content")
            if isinstance(content, str):
                return extract_json(content)
        if isinstance(doc.get("content"), str):
            return extract_json(doc["content"])
    return doc


# --------------------------------------------------------------------------
# the three modes


def _payload(domain: Domain, problem: Problem, **extra) -> dict:
    doc = {"domain_text": print_domain(domain), "problem_text": print_problem(problem)}
    doc.update({k: v for k, v in extra.items() if v is not None})
    return doc


def review_commonsense(backend: AdvisorBackend, domain: Domain, problem: Problem,
                       plan: Plan) -> ReviewVerdict:
    if not validate_plan(domain, problem, plan).valid:
        raise ValueError("review expects a valid plan")
    sig = str(create_signature(domain, problem))
    reply = backend.request("review", sig, _payload(domain, problem, plan=plan.lines()))
    return ReviewVerdict.from_json(reply)


def generate_fixed_plan(backend: AdvisorBackend, domain: Domain, problem: Problem,
                        plan: Plan, feedback: str) -> Plan:
    if not feedback.strip():
        raise ValueError("generate_fixed_plan needs feedback")
    sig = str(create_signature(domain, problem))
    try:
        reply = backend.request("fix", sig, _payload(domain, problem, plan=plan.lines(),
                                                     feedback=feedback))
    except AdvisorResponseError as exc:
        raise FixedPlanInvalid(str(exc)) from None
    lines = reply.get("plan") if isinstance(reply, dict) else reply
    if not isinstance(lines, list) or not all(isinstance(s, str) for s in lines):
        raise FixedPlanInvalid(f"fix reply is not a list of steps: {reply!r}")
    try:
        fixed = Plan(tuple(parse_step(s) for s in lines))
    except ParseError as exc:
        raise FixedPlanInvalid(f"unparseable step in fixed plan: {exc}") from None
    verdict = validate_plan(domain, problem, fixed)
    if not verdict.valid:
        raise FixedPlanInvalid(f"fixed plan does not validate: {verdict.describe()}", verdict)
    return fixed


def gap_analysis_for_domain(backend: AdvisorBackend, domain: Domain, problem: Problem,
                            certificate: UnsolvabilityCertificate | None) -> GapAnalysis | None:
    """None means the advisor agrees the problem is unsolvable as stated."""
    if certificate is None:
        raise ValueError("gap analysis needs an unsolvability certificate")
    sig = str(create_signature(domain, problem))
    reply = backend.request("gap", sig, _payload(domain, problem, certificate=certificate.to_dict()))
    if reply is None:
        return None
    analysis = GapAnalysis.from_json(reply)
    if analysis.is_empty():
        return None
    try:
        apply_fixes(domain, problem, analysis.to_fix(domain))
    except FixError as exc:
        raise AdvisorResponseError(f"gap analysis does not yield a usable fix: {exc}") from None
    return analysis
