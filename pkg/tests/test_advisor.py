import json

import pytest
import requests
from hypothesis import given
from hypothesis import strategies as st

from hybridplan.advisor import (
    MODES,
    AdvisorResponseError,
    AdvisorUnavailable,
    FixedPlanInvalid,
    GapAnalysis,
    HttpBackend,
    ReviewVerdict,
    ScriptedBackend,
    extract_json,
    gap_analysis_for_domain,
    generate_fixed_plan,
    load_prompt,
    review_commonsense,
)
from hybridplan.model import ground
from hybridplan.search import solve
from hybridplan.signature import create_signature


def _sig(b):
    return str(create_signature(b.domain, b.problem))


# --------------------------------------------------------------------------
# value types


def test_review_verdict_invariant():
    assert ReviewVerdict(True).feedback == ""
    with pytest.raises(ValueError):
        ReviewVerdict(True, "but also")
    with pytest.raises(ValueError):
        ReviewVerdict(False, "  ")
    assert ReviewVerdict.from_json({"is_good": False, "feedback": " close it "}) == ReviewVerdict(False, "close it")
    assert ReviewVerdict.from_json({"is_good": True, "feedback": "ignored"}) == ReviewVerdict(True)
    for bad in (None, [], {"is_good": "yes"}, {"is_good": False}, {"is_good": False, "feedback": ""}):
        with pytest.raises(AdvisorResponseError):
            ReviewVerdict.from_json(bad)


def test_gap_analysis_json(flawed):
    doc = next(v for k, v in flawed.fixtures.items() if k.startswith("gap:"))
    gap = GapAnalysis.from_json(doc)
    assert gap.missing_actions == ("turn-on-microwave",) and len(gap.suggested_plan) == 9
    assert GapAnalysis.from_json(gap.to_json()) == gap
    assert gap.to_fix(flawed.domain).missing_actions[0].name == "turn-on-microwave"
    assert GapAnalysis().is_empty()
    for bad in ([1], "x", {"missing_preconditions": [1]}):
        with pytest.raises(AdvisorResponseError):
            GapAnalysis.from_json(bad)


@pytest.mark.parametrize("mode", MODES)
def test_prompts_ship_with_the_package(mode):
    text = load_prompt(mode)
    assert len(text) > 200 and "JSON" in text


def test_gap_prompt_asks_for_exhaustive_check():
    text = " ".join(load_prompt("gap").lower().split())
    assert "every precondition" in text or "each precondition" in text
    assert "null" in text


@pytest.mark.parametrize("text, expect", [
    ('{"a": 1}', {"a": 1}),
    ('Sure! Here it is:\n```json\n{"a": {"b": "}"}}\n```', {"a": {"b": "}"}}),
    ('{broken} then {"ok": true}', {"ok": True}),
    ('  null  ', None),
    ('{"s": "quote \\" and { brace"}', {"s": 'quote " and { brace'}),
])
def test_extract_json(text, expect):
    assert extract_json(text) == expect


@given(st.dictionaries(st.text(max_size=5), st.one_of(st.integers(), st.text(max_size=8), st.booleans()),
                       max_size=4), st.text(alphabet="abc \n:.", max_size=20))
def test_extract_json_finds_embedded_objects(doc, prefix):
    assert extract_json(prefix + json.dumps(doc) + prefix) == doc


def test_extract_json_without_object():
    with pytest.raises(AdvisorResponseError):
        extract_json("I cannot help with that")


# --------------------------------------------------------------------------
# scripted backend


def test_scripted_defaults():
    s = ScriptedBackend()
    assert s.request("review", "sig", {}) == {"is_good": True, "feedback": ""}
    assert s.request("gap", "sig", {}) is None
    with pytest.raises(AdvisorResponseError):
        s.request("fix", "sig", {})
    with pytest.raises(ValueError):
        s.request("chat", "sig", {})
    assert s.calls == [("review", "sig"), ("gap", "sig"), ("fix", "sig")]


def test_scripted_cases_match_normalized_plans():
    s = ScriptedBackend({"review:s": {"cases": [{"plan": ["(go a b)"], "response": {"is_good": True}}],
                                      "default": {"is_good": False, "feedback": "no"}}})
    assert s.request("review", "s", {"plan": ["go(a, b)"]}) == {"is_good": True}
    assert s.request("review", "s", {"plan": ["GO(a,b)"]}) == {"is_good": True}
    assert s.request("review", "s", {"plan": ["go(b, a)"]})["is_good"] is False


def test_scripted_replies_are_copies():
    s = ScriptedBackend({"fix:s": {"plan": ["a()"]}})
    s.request("fix", "s", {})["plan"].append("b()")
    assert s.request("fix", "s", {}) == {"plan": ["a()"]}


def test_scripted_from_file(tmp_path):
    f = tmp_path / "fx.json"
    f.write_text('{"gap:s": null}')
    s = ScriptedBackend.from_file(f)
    assert s.ident == "scripted:fx.json"
    for content in ("{", "[]"):
        f.write_text(content)
        with pytest.raises(AdvisorUnavailable):
            ScriptedBackend.from_file(f)
    with pytest.raises(AdvisorUnavailable):
        ScriptedBackend.from_file(tmp_path / "missing.json")


# --------------------------------------------------------------------------
# http backend


class FakeResponse:
    def __init__(self, status, body):
        self.status_code = status
        self.text = body if isinstance(body, str) else json.dumps(body)


class FakeSession:
    def __init__(self, script):
        self.script = list(script)
        self.posts = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.posts.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
        item = self.script.pop(0)
        if isinstance(item, Exception):
            raise item
        return FakeResponse(*item)


def _http(script, **kw):
    session = FakeSession(script)
    backend = HttpBackend(url="http://advisor.test/v1", session=session, **kw)
    sleeps = []
    backend.sleep = sleeps.append
    return backend, session, sleeps


def test_http_request_body_and_headers():
    backend, session, _ = _http([(200, {"is_good": True})], token="tok")
    assert backend.request("review", "sig", {"domain_text": "D", "plan": ["a()"]}) == {"is_good": True}
    post = session.posts[0]
    assert post["url"] == "http://advisor.test/v1"
    assert post["headers"]["Authorization"] == "Bearer tok"
    assert post["json"]["mode"] == "review" and post["json"]["system"] == load_prompt("review")
    assert post["json"]["plan"] == ["a()"] and post["timeout"] == 30.0


def test_http_retries_with_exponential_backoff():
    script = [requests.Timeout("slow"), (503, "busy"), requests.ConnectionError("down"), (200, {"ok": 1})]
    backend, session, sleeps = _http(script, max_retries=3, backoff=0.25)
    assert backend.request("gap", "s", {}) == {"ok": 1}
    assert sleeps == [0.25, 0.5, 1.0] and len(session.posts) == 4


def test_http_gives_up():
    backend, session, sleeps = _http([(429, "")] * 3, max_retries=2)
    with pytest.raises(AdvisorUnavailable, match="3 attempts"):
        backend.request("gap", "s", {})
    assert len(sleeps) == 2


def test_http_client_error_is_not_retried():
    backend, session, sleeps = _http([(401, "no")])
    with pytest.raises(AdvisorUnavailable, match="401"):
        backend.request("review", "s", {})
    assert sleeps == [] and len(session.posts) == 1


@pytest.mark.parametrize("body, expect", [
    ({"choices": [{"message": {"content": 'Here: {"is_good": true}'}}]}, {"is_good": True}),
    ({"content": "null"}, None),
    ('prefix {"plan": []} suffix', {"plan": []}),
    ("null", None),
])
def test_http_unwraps_envelopes(body, expect):
    backend, _, _ = _http([(200, body)])
    assert backend.request("fix", "s", {}) == expect


def test_http_needs_an_endpoint(monkeypatch):
    monkeypatch.delenv("PLAN_ADVISOR_URL", raising=False)
    with pytest.raises(AdvisorUnavailable, match="PLAN_ADVISOR_URL"):
        HttpBackend()
    monkeypatch.setenv("PLAN_ADVISOR_URL", "http://x")
    monkeypatch.setenv("PLAN_ADVISOR_TOKEN", "env-token")
    b = HttpBackend(session=FakeSession([]))
    assert b.url == "http://x" and b.token == "env-token" and b.ident == "http:http://x"


# --------------------------------------------------------------------------
# the three modes against bundled fixtures


def test_review_of_the_solver_plan_rejects(beer):
    plan = solve(ground(beer.domain, beer.problem)).plan
    v = review_commonsense(beer.advisor(), beer.domain, beer.problem, plan)
    assert not v.is_good and "close-fridge" in v.feedback
    assert review_commonsense(beer.advisor(), beer.domain, beer.problem, beer.golden["llm"]).is_good


def test_review_refuses_invalid_plan(beer):
    from hybridplan.model import Plan
    with pytest.raises(ValueError):
        review_commonsense(beer.advisor(), beer.domain, beer.problem, Plan())


def test_fixed_plan_is_validated(beer):
    plan = beer.golden["fast-downward"]
    fixed = generate_fixed_plan(beer.advisor(), beer.domain, beer.problem, plan, "close the fridge")
    assert fixed == beer.golden["llm"]
    with pytest.raises(ValueError):
        generate_fixed_plan(beer.advisor(), beer.domain, beer.problem, plan, " ")


@pytest.mark.parametrize("reply, has_verdict", [
    ({"plan": ["open-fridge(robot)"]}, True),
    (["teleport(robot, table)"], True),
    ({"plan": "move(robot, table, fridge)"}, False),
    ({"steps": []}, False),
    ({"plan": ["move(robot"]}, False),
])
def test_invalid_fixed_plans_raise(beer, reply, has_verdict):
    backend = ScriptedBackend({f"fix:{_sig(beer)}": reply})
    with pytest.raises(FixedPlanInvalid) as exc:
        generate_fixed_plan(backend, beer.domain, beer.problem, beer.golden["fast-downward"], "fb")
    assert (exc.value.verdict is not None) == has_verdict


def test_missing_fix_fixture_is_fixed_plan_invalid(beer):
    with pytest.raises(FixedPlanInvalid):
        generate_fixed_plan(ScriptedBackend(), beer.domain, beer.problem, beer.golden["llm"], "fb")


def test_gap_analysis_on_flawed_microwave(flawed):
    cert = solve(ground(flawed.domain, flawed.problem)).error
    gap = gap_analysis_for_domain(flawed.advisor(), flawed.domain, flawed.problem, cert)
    assert gap.missing_actions == ("turn-on-microwave",)
    payload_cert = cert.to_dict()
    assert payload_cert["unreachable_goal_atoms"]
    with pytest.raises(ValueError):
        gap_analysis_for_domain(flawed.advisor(), flawed.domain, flawed.problem, None)


@pytest.mark.parametrize("reply", [None, {"missing_actions": [], "missing_preconditions": []}])
def test_gap_analysis_can_agree_with_the_solver(flawed, reply):
    cert = solve(ground(flawed.domain, flawed.problem)).error
    backend = ScriptedBackend({f"gap:{_sig(flawed)}": reply})
    assert gap_analysis_for_domain(backend, flawed.domain, flawed.problem, cert) is None


def test_unusable_gap_analysis_is_a_response_error(flawed):
    cert = solve(ground(flawed.domain, flawed.problem)).error
    reply = {"missing_actions": ["move"], "action_definitions": {"move": "(:action move :effect (door-open ?m))"}}
    backend = ScriptedBackend({f"gap:{_sig(flawed)}": reply})
    with pytest.raises(AdvisorResponseError):
        gap_analysis_for_domain(backend, flawed.domain, flawed.problem, cert)
