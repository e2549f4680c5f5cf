import csv

import numpy as np
import pytest

from lgpgi.gi.edits import Edit, Patch, parse_patch
from lgpgi.gi.report import (OUTCOME_ROWS, best_fitness_table, length_table, outcome_table,
                             provenance_table, status_table, write_report)
from lgpgi.gi.scenario import load_scenario
from lgpgi.gi.search import SearchConfig, SearchLog, Step, _Neighbours, local_search
from lgpgi.gi.tree import NodeRef


def evaluator(**search):
    sc = load_scenario("seeded")
    sc.sandbox = "inline"
    for k, v in search.items():
        setattr(sc.search, k, v)
    return sc.evaluator(), sc.search


@pytest.fixture(scope="module")
def run200():
    ev, cfg = evaluator(budget=200)
    return local_search(ev, cfg, seed=7), cfg


def test_budget_zero_returns_empty_patch():
    ev, cfg = evaluator(budget=0)
    res = local_search(ev, cfg, seed=0)
    assert res.best_patch == Patch()
    assert res.best_fitness == res.baseline == 1404
    assert len(res.log) == cfg.warmup
    assert {s.outcome for s in res.log} == {"warmup"}


def test_outcomes_partition_steps(run200):
    res, cfg = run200
    counts = res.log.outcome_counts()
    assert sum(counts.values()) == cfg.budget + cfg.warmup
    assert set(counts) <= set(OUTCOME_ROWS)


def test_best_is_monotone(run200):
    res, _ = run200
    best = [s.best for s in res.log if s.move != "warmup"]
    assert all(a >= b for a, b in zip(best, best[1:]))
    assert best[-1] == res.best_fitness


def test_neighbour_length_changes_by_at_most_one(run200):
    res, _ = run200
    current = 0
    for s in res.log:
        if s.move == "warmup":
            continue
        assert abs(s.length - current) <= 1
        if s.accepted:
            current = s.length


def test_accepted_steps_pass_and_do_not_worsen(run200):
    res, _ = run200
    cur = res.baseline
    for s in res.log:
        if s.accepted:
            assert s.passed and s.fitness <= cur
            cur = s.fitness


def test_cache_flag_matches_outcome(run200):
    res, _ = run200
    assert all(s.cache_hit == (s.outcome == "cache") for s in res.log)


def test_best_patch_reevaluates_to_best_fitness(run200):
    res, _ = run200
    ev, _ = evaluator()
    r = ev.pipeline.evaluate(res.best_patch, reject_unchanged=False)
    assert r.passed and r.fitness == res.best_fitness


def test_search_is_deterministic():
    logs = []
    for _ in range(2):
        ev, cfg = evaluator(budget=60)
        logs.append([(s.move, s.outcome, s.fitness, s.patch) for s in local_search(ev, cfg, seed=3).log])
    assert logs[0] == logs[1]


def test_batched_mode_keeps_accounting():
    ev, cfg = evaluator(budget=40, jobs=4)
    res = local_search(ev, cfg, seed=1)
    steps = [s for s in res.log if s.move != "warmup"]
    assert [s.step for s in steps] == list(range(1, 41))
    for lo in range(0, 40, 4):
        assert sum(s.accepted for s in steps[lo:lo + 4]) <= 1


def test_param_moves_change_width():
    sc = load_scenario("widths")
    sc.sandbox = "inline"
    sc.search.budget = 60
    sc.search.param_prob = 0.5
    res = local_search(sc.evaluator(), sc.search, seed=2)
    moves = [s for s in res.log if s.move == "param"]
    assert moves and all(s.target_file == s.source_file == "params" for s in moves)
    assert any("ParamSetting('WIDTH'" in s.patch for s in moves)


class _Stub:
    class pipeline:
        targets, ingredients, params = [], [], {}


def test_tabu_edit_is_never_redrawn(monkeypatch):
    tabu = Edit("SrcmlStmtDeletion", NodeRef("f", "stmt", 0))
    other = Edit("SrcmlStmtDeletion", NodeRef("f", "stmt", 1))
    draws = iter([tabu, tabu, other])
    monkeypatch.setattr("lgpgi.gi.search.random_edit", lambda *a, **k: next(draws))
    nb = _Neighbours(_Stub, SearchConfig(delete_prob=0, replace_prob=0), np.random.default_rng(0))
    patch, move, removed, added = nb.propose(Patch(), tabu)
    assert move == "append" and added == other


# reports

def step(i, outcome, passed, length, fitness=10, best=10, move="append", target="", source=""):
    return Step(i, move, length, outcome, outcome == "cache", passed, fitness, best,
                target_file=target, source_file=source)


def test_empty_log_gives_header_only_tables(tmp_path):
    paths = write_report(SearchLog(), tmp_path)
    for p in paths.values():
        rows = list(csv.reader(p.open()))
        assert len(rows) == 1


def test_synthetic_counts():
    log = SearchLog()
    for i in range(3):
        log.add(step(0, "warmup", True, 0, move="warmup"))
    outcomes = ["cache"] * 4 + ["compile_error"] * 3 + ["runtime_error"] * 2 + ["all_tests_passed"]
    for i, o in enumerate(outcomes, 1):
        log.add(step(i, o, o == "all_tests_passed", 1))
    table = dict((r[0], r[1]) for r in outcome_table(log)[1:])
    assert table == {"cache": 4, "compile_error": 3, "object_unchanged": 0, "runtime_error": 2,
                     "all_tests_passed": 1, "timeout": 0, "warmup": 3, "total": 13}
    assert len(best_fitness_table(log)) == 11


def test_length_windows_and_difference():
    log = SearchLog()
    lengths = [(1, True), (2, True), (3, False), (5, False), (4, True), (6, False)]
    for i, (n, ok) in enumerate(lengths, 1):
        log.add(step(i, "all_tests_passed" if ok else "runtime_error", ok, n))
    rows = length_table(log, window=3)
    assert rows[0][-1] == "fail_minus_pass"
    assert rows[1] == [1, 3, 2, 1.5, 1, 3.0, 1.5]
    assert rows[2] == [4, 6, 1, 4.0, 2, 5.5, 1.5]


def test_status_table_counts_runs_only():
    log = SearchLog()
    log.add(Step(1, "append", 1, "runtime_error", False, False, 1, 1, status="WRONG_OUTPUT"))
    log.add(Step(2, "append", 1, "runtime_error", False, False, 1, 1, status="SIGSEGV"))
    log.add(Step(3, "append", 1, "cache", True, False, 1, 1, status="SIGSEGV"))
    log.add(Step(4, "append", 1, "all_tests_passed", False, True, 1, 1, status="OK"))
    assert status_table(log) == [["status", "count"], ["OK", 1], ["SIGSEGV", 1], ["WRONG_OUTPUT", 1]]


def test_provenance_table():
    log = SearchLog()
    log.add(step(1, "all_tests_passed", True, 1, target="t.xml", source="a.xml"))
    log.add(step(2, "runtime_error", False, 2, target="t.xml", source="a.xml"))
    log.add(step(3, "runtime_error", False, 2, target="t.xml", source="t.xml"))
    log.add(step(4, "cache", False, 1, move="delete"))
    rows = provenance_table(log, ["t.xml", "a.xml", "b.xml"])
    assert rows == [["target", "result", "t.xml", "a.xml", "b.xml", "total"],
                    ["t.xml", "ok", 0, 1, 0, 1],
                    ["t.xml", "err", 1, 1, 0, 2]]


def test_report_bundle_from_search(run200, tmp_path):
    res, cfg = run200
    paths = write_report(res.log, tmp_path)
    assert set(paths) == {"outcomes", "best_fitness", "lengths", "runtime_status", "provenance"}
    rows = list(csv.reader(paths["outcomes"].open()))
    total = dict(rows[1:])["total"]
    assert int(total) == cfg.budget + cfg.warmup
    assert sum(int(n) for k, n in rows[1:] if k != "total") == int(total)


def test_patch_key_round_trips_from_log(run200):
    res, _ = run200
    for s in list(res.log)[-20:]:
        if s.patch:
            assert parse_patch(s.patch).key == s.patch
