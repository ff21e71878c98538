import json
import threading

import pytest

from hybridplan.cache import (
    FLAWS_FILE,
    PLANS_FILE,
    CacheError,
    CacheLockedError,
    FlawRecord,
    PlanRecord,
    PlanStore,
)
from hybridplan.fixes import DomainFix, parse_fix
from hybridplan.signature import create_signature


@pytest.fixture
def fix(flawed):
    gap = next(v for k, v in flawed.fixtures.items() if k.startswith("gap:"))
    return parse_fix(gap, flawed.domain)


def test_round_trip_across_reopen(tmp_path, beer, fix):
    sig = create_signature(beer.domain, beer.problem)
    with PlanStore(tmp_path) as store:
        store.put_plan(sig, PlanRecord(str(sig), beer.golden["llm"].lines(), provenance="solver+review"))
        store.put_flaw("x" * 64 + ":" + "y" * 64, FlawRecord("", fix, backend="scripted"))
    with PlanStore(tmp_path) as store:
        rec = store.get_plan(sig)
        assert rec.plan == beer.golden["llm"].lines() and rec.provenance == "solver+review"
        flaw = store.get_flaw("x" * 64 + ":" + "y" * 64)
        assert flaw.fix == fix and flaw.backend == "scripted"
        assert flaw.signature == "x" * 64 + ":" + "y" * 64
        assert flaw.fix.extras["suggested_plan"] == fix.extras["suggested_plan"]


def test_last_record_wins_and_file_is_compacted(tmp_path):
    with PlanStore(tmp_path) as store:
        for n in range(3):
            store.put_plan("s", PlanRecord("s", [f"a{n}()"]))
    assert len((tmp_path / PLANS_FILE).read_text().splitlines()) == 1 + 3
    with PlanStore(tmp_path) as store:
        assert store.get_plan("s").plan == ["a2()"]
    assert len((tmp_path / PLANS_FILE).read_text().splitlines()) == 1 + 1


def test_corrupt_trailing_record_is_skipped(tmp_path, caplog):
    with PlanStore(tmp_path) as store:
        store.put_plan("good", PlanRecord("good", ["a()"]))
        store.put_plan("late", PlanRecord("late", ["b()"]))
    path = tmp_path / PLANS_FILE
    text = path.read_text()
    path.write_text(text[:-15])  # truncated mid-record, as after a crash
    with PlanStore(tmp_path) as store:
        assert store.get_plan("good").plan == ["a()"]
        assert store.get_plan("late") is None
    assert "skipping unreadable record" in caplog.text


@pytest.mark.parametrize("line", [
    '{"signature": "z", "plan": ["a()"], "created_at": "t", "provenance": "guess"}',
    '{"signature": "z", "plan": "a()", "created_at": "t", "provenance": "solver"}',
    '{"plan": ["a()"]}',
    '[1, 2]',
])
def test_invalid_records_are_skipped(tmp_path, line):
    with PlanStore(tmp_path):
        pass
    with open(tmp_path / PLANS_FILE, "a") as fh:
        fh.write(line + "\n")
    with PlanStore(tmp_path) as store:
        assert store.plans() == []


@pytest.mark.parametrize("header", [
    "not json",
    '{"format": "other", "kind": "known_plans", "version": 1, "digest": "sha256"}',
    '{"format": "hybridplan-cache", "kind": "known_flaws", "version": 1, "digest": "sha256"}',
    '{"format": "hybridplan-cache", "kind": "known_plans", "version": 99, "digest": "sha256"}',
    '{"format": "hybridplan-cache", "kind": "known_plans", "version": 1, "digest": "md5"}',
])
def test_bad_header_is_an_error(tmp_path, header):
    (tmp_path / PLANS_FILE).write_text(header + "\n")
    with pytest.raises(CacheError):
        PlanStore(tmp_path)
    # the lock was released on failure
    (tmp_path / PLANS_FILE).unlink()
    PlanStore(tmp_path).close()


def test_header_line_contents(tmp_path):
    PlanStore(tmp_path).close()
    for name, kind in ((PLANS_FILE, "known_plans"), (FLAWS_FILE, "known_flaws")):
        header = json.loads((tmp_path / name).read_text().splitlines()[0])
        assert header == {"format": "hybridplan-cache", "kind": kind, "version": 1, "digest": "sha256"}


def test_second_store_on_same_directory_is_refused(tmp_path):
    with PlanStore(tmp_path):
        with pytest.raises(CacheLockedError):
            PlanStore(tmp_path)
    PlanStore(tmp_path).close()


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(CacheError):
        PlanStore(blocker / "cache")


def test_empty_fix_is_refused():
    with pytest.raises(ValueError, match="empty"):
        PlanStore().put_flaw("s", FlawRecord("s", DomainFix()))


def test_stats_and_peek(fix):
    store = PlanStore()
    assert store.get_plan("a") is None
    store.put_plan("a", PlanRecord("a", []))
    assert store.get_plan("a") is not None
    store.put_flaw("b", FlawRecord("b", fix))
    assert store.peek_flaw("b") is not None and store.peek_flaw("c") is None
    assert store.get_flaw("c") is None
    assert store.stats().as_dict() == {"plan_hits": 1, "plan_misses": 1, "flaw_hits": 0,
                                       "flaw_misses": 1, "writes": 2}


def test_clear(tmp_path, fix):
    with PlanStore(tmp_path) as store:
        store.put_plan("a", PlanRecord("a", ["x()"]))
        store.put_flaw("b", FlawRecord("b", fix))
        store.clear()
        assert store.plans() == [] and store.flaws() == []
    with PlanStore(tmp_path) as store:
        assert store.plans() == [] and store.flaws() == []


def test_concurrent_writers_lose_nothing(tmp_path):
    store = PlanStore(tmp_path)

    def worker(k):
        for i in range(25):
            store.put_plan(f"{k}-{i}", PlanRecord(f"{k}-{i}", [f"s{i}()"]))
            store.get_plan(f"{k}-{i}")

    threads = [threading.Thread(target=worker, args=(k,)) for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    store.close()
    with PlanStore(tmp_path) as again:
        assert len(again.plans()) == 200
    lines = (tmp_path / PLANS_FILE).read_text().splitlines()
    assert all(json.loads(line) for line in lines)
