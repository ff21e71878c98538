import json

import pytest

from hybridplan.benchmarks import (
    ABLATIONS,
    BENCHMARKS,
    UnknownBenchmark,
    asset_path,
    load_benchmark,
    run_ablation,
)
from hybridplan.signature import create_signature


def test_every_benchmark_loads(benches):
    assert set(benches) == set(BENCHMARKS)
    for name, b in benches.items():
        assert b.name == name and b.domain.actions and b.problem.goal


def test_fixture_keys_match_current_signatures(benches):
    # regenerating fixtures is needed whenever a bundled model changes
    for b in benches.values():
        sig = str(create_signature(b.domain, b.problem))
        for key in b.fixtures:
            mode, _, key_sig = key.partition(":")
            assert mode in ("review", "fix", "gap") and key_sig == sig, (b.name, key)


def test_asset_paths_are_files():
    with open(asset_path("beer", "domain.pddl")) as fh:
        assert "(define" in fh.read()


def test_unknown_names():
    with pytest.raises(UnknownBenchmark):
        load_benchmark("blocks")
    with pytest.raises(UnknownBenchmark):
        run_ablation("nope")


def test_beer_softgoal_ablation():
    report = run_ablation("beer-softgoal", repeat=1)
    rows = {r["variant"]: r for r in report.rows}
    assert rows["hard goal only"]["length"] == 7 and not rows["hard goal only"]["close-fridge"]
    assert rows["soft goal, penalty 0"]["length"] == 7
    assert rows["soft goal, penalty 2"]["length"] == 8 and rows["soft goal, penalty 2"]["fridge-closed"]
    assert rows["soft goal, penalty 2"]["cost"] == 8 and rows["soft goal, penalty 0"]["cost"] == 7
    assert set(report.summary) == {"overhead[soft goal, penalty 0]", "overhead[soft goal, penalty 2]"}
    assert "penalty 2" in report.table()
    json.dumps(report.to_json())


def test_cube_preconditions_ablation():
    report = run_ablation("cube-preconditions")
    assert [r["heuristic"] for r in report.rows] == ["goalcount", "hmax", "hadd", "lmcount"]
    for r in report.rows:
        assert r["length_before"] == r["length_after"] == 7
        assert r["expansions_after"] <= r["expansions_before"]
    by_h = {r["heuristic"]: r for r in report.rows}
    assert by_h["hmax"]["expansions_after"] < by_h["hmax"]["expansions_before"]
    assert by_h["goalcount"]["ratio"] < 1
    assert report.summary["preconditions added"] == 5


def test_ablation_names():
    assert ABLATIONS == ("beer-softgoal", "cube-preconditions")
