import atexit
import os
import signal
import sys

import numpy as np
import pytest

from lgpgi.batch import COST_SETUP, model_instruction_count
from lgpgi.harness.arena import (LUT_PAGES, PAGE_SIZE, REG_BYTES, build_arena, check_padding,
                                 padding_intact, score_outputs, unused_rows_intact)
from lgpgi.harness.counters import count_instructions, hw_counter_available, resolve_provider
from lgpgi.harness.sandbox import (COST_CAP, PENALTY, FitnessRecord, Limits, StatusCode,
                                   child_command, classify_exit, evaluate_reference,
                                   make_record, run_forked, run_mutant)
from lgpgi.lgp import PADDING_BYTE, Program, default_table, parse_program
from lgpgi.testgen import fixture_suite, generate_suite


@pytest.fixture(scope="module")
def suite():
    return fixture_suite()


@pytest.fixture
def arena(suite):
    a = build_arena(suite.programs, suite.inputs, default_table())
    yield a
    a.close()


def test_layout(arena):
    assert arena.base % PAGE_SIZE == 0
    for off in (arena.regs_off, arena.lut_off, arena.prog_off):
        assert off % PAGE_SIZE == 0
    assert arena.lut_view.nbytes == LUT_PAGES * PAGE_SIZE
    assert arena.block_of(arena.regs_off - 1) == "guard"
    assert arena.block_of(arena.lut_off + LUT_PAGES * PAGE_SIZE) == "guard"
    assert arena.block_of(arena.prog_off) == "program"


def test_fresh_arena_contents(arena, suite):
    assert (arena.regs_page[REG_BYTES:] == PADDING_BYTE).all()
    a, b = suite.programs[0].input_regs
    assert (arena.regs[a] == suite.inputs[0][:, 0]).all()
    assert (arena.regs[b] == suite.inputs[0][:, 1]).all()
    others = [r for r in range(8) if r not in (a, b)]
    assert (arena.regs[others] == PADDING_BYTE).all()
    assert (arena.lut_view == default_table().entries).all()
    # unused program bytes are padding too
    assert (arena.mem[arena.prog_offsets[-1] + 16:arena.prog_off + PAGE_SIZE] == PADDING_BYTE).all()


def test_check_padding(arena, suite):
    assert check_padding(arena, 0)
    arena.padding[5] ^= 1
    assert not check_padding(arena, 0) and not padding_intact(arena)
    arena.load(0)
    dst = suite.programs[0].instructions[0].dst
    arena.regs[dst] = 0  # written rows are scored, not padding-checked
    assert check_padding(arena, 0)
    unused = [r for r in range(8) if r not in suite.programs[0].written][0]
    arena.regs[unused, 3] = 0
    assert padding_intact(arena) and not unused_rows_intact(arena, 0)


def test_check_padding_blind_to_reads(arena):
    _ = int(arena.mem[arena.lut_off]) + int(arena.padding.sum())
    assert check_padding(arena, 0)


def test_score_outputs(suite):
    exp = suite.expected[0]
    written = suite.programs[0].written
    assert score_outputs(exp, exp, written) == 0
    bad = exp.copy()
    bad[suite.programs[0].output_reg, 17] += 3
    assert score_outputs(bad, exp, written) == 3
    assert score_outputs(exp, exp, set()) == 0


@pytest.mark.parametrize("kwargs", [{}, {"redundant_mask": False}, {"dispatch": "ge"},
                                    {"width": 16}, {"width": 32}, {"impl": "scalar"}])
def test_reference_candidates_pass(suite, kwargs):
    rec = evaluate_reference(suite, **kwargs)
    assert rec.status.code == StatusCode.OK
    assert rec.error_sum == 0 and rec.fitness == rec.instruction_count


def _poke(offset_of, write=True):
    def target():
        s = fixture_suite()
        a = build_arena(s.programs, s.inputs, default_table())
        off = offset_of(a)
        if write:
            a.mem[off] = 1
        else:
            int(a.mem[off])
        return 0, {}
    return target


BOUNDARIES = {
    "before registers": lambda a: a.regs_off - 1,
    "after registers": lambda a: a.regs_off + PAGE_SIZE,
    "before table": lambda a: a.lut_off - 1,
    "after table": lambda a: a.lut_off + LUT_PAGES * PAGE_SIZE,
    "before programs": lambda a: a.prog_off - 1,
    "after programs": lambda a: a.prog_off + a.prog_pages * PAGE_SIZE,
}


@pytest.mark.parametrize("name", list(BOUNDARIES))
@pytest.mark.parametrize("write", [True, False])
def test_guard_coverage(name, write):
    code, _ = run_forked(_poke(BOUNDARIES[name], write), timeout=10)
    assert code == StatusCode.SIGSEGV


@pytest.mark.parametrize("offset_of", [lambda a: a.lut_off + 77, lambda a: a.prog_off + 3])
def test_read_only_blocks_are_readable(offset_of):
    code, _ = run_forked(_poke(offset_of, write=False), timeout=10)
    assert code == StatusCode.OK
    code, _ = run_forked(_poke(offset_of, write=True), timeout=10)
    assert code == StatusCode.SIGSEGV


@pytest.mark.parametrize("fault, code", [
    ("reg-minus-1", StatusCode.SIGSEGV), ("past-registers", StatusCode.SIGSEGV),
    ("lut-write", StatusCode.SIGSEGV), ("program-write", StatusCode.SIGSEGV),
    ("guard-read", StatusCode.SIGSEGV), ("padding", StatusCode.PADDING_OVERWRITTEN),
    ("unused-register", StatusCode.REGISTERS_CORRUPTED), ("wrong-output", StatusCode.WRONG_OUTPUT),
    ("divide-by-zero", StatusCode.SIGFPE), ("abort", StatusCode.SIGABRT),
])
def test_fault_injection(suite, fault, code):
    rec = evaluate_reference(suite, fault=fault)
    assert rec.status.code == code
    assert rec.fitness >= PENALTY
    if fault == "wrong-output":
        assert rec.error_sum == 3


def test_timeout(suite):
    rec = evaluate_reference(suite, fault="hang", limits=Limits(timeout=0.5))
    assert rec.status.code == StatusCode.TIMEOUT


def test_external_child(suite, tmp_path):
    assert run_mutant(child_command(), suite).status.code == StatusCode.OK
    rec = run_mutant(child_command() + ["--fault", "reg-minus-1"], suite)
    assert rec.status.code == StatusCode.SIGSEGV
    rec = run_mutant(child_command() + ["--fault", "unused-register"], suite)
    assert rec.status.code == StatusCode.REGISTERS_CORRUPTED
    path = tmp_path / "s.suite"
    suite.save(path)
    assert run_mutant(child_command() + ["--width", "32"], path).fitness > 0


def test_external_spawn_failure_and_timeout(suite, tmp_path):
    rec = run_mutant(tmp_path / "missing-binary", suite)
    assert rec.status.code == StatusCode.MEASUREMENT_FAILURE
    rec = run_mutant([sys.executable, "-c", "import time; time.sleep(30)"], suite, Limits(timeout=0.5))
    assert rec.status.code == StatusCode.TIMEOUT


def test_exit_path_skips_unwinding(tmp_path):
    marker = tmp_path / "unwound"

    def target():
        atexit.register(marker.write_text, "ran")
        return 0, {"ok": 1}
    code, report = run_forked(target, timeout=10)
    assert code == StatusCode.OK and report == {"ok": "1"}
    assert not marker.exists()


def test_external_child_exit_path(suite, tmp_path):
    marker = tmp_path / "unwound"
    spath = tmp_path / "s.suite"
    suite.save(spath)
    code = (f"import atexit, pathlib; atexit.register(pathlib.Path({str(marker)!r}).write_text, 'x');"
            "from lgpgi.harness.child import main; main()")
    rec = run_mutant([sys.executable, "-c", code], spath)
    assert rec.status.code == StatusCode.OK
    assert not marker.exists()


def test_escaping_exception_aborts():
    def target():
        raise RuntimeError("boom")
    code, report = run_forked(target, timeout=10)
    assert code == StatusCode.SIGABRT and "boom" in report["detail"]


@pytest.mark.parametrize("rc, code", [
    (0, StatusCode.OK), (1, StatusCode.WRONG_OUTPUT), (3, StatusCode.PADDING_OVERWRITTEN),
    (4, StatusCode.REGISTERS_CORRUPTED), (-signal.SIGSEGV, StatusCode.SIGSEGV),
    (-signal.SIGBUS, StatusCode.SIGSEGV), (-signal.SIGFPE, StatusCode.SIGFPE),
    (-signal.SIGABRT, StatusCode.SIGABRT), (139, StatusCode.SIGSEGV), (124, StatusCode.TIMEOUT),
    (2, StatusCode.MEASUREMENT_FAILURE),
])
def test_classify_exit(rc, code):
    assert classify_exit(rc) == code


def test_record_invariants():
    ok = make_record(StatusCode.OK, 0, 1234)
    assert ok.fitness == 1234 and ok.passed
    bad = make_record(StatusCode.WRONG_OUTPUT, 7)
    assert bad.fitness == PENALTY + 7 and not bad.passed
    assert PENALTY > 10 * COST_CAP
    assert make_record(StatusCode.OK, 0, None).status.code == StatusCode.MEASUREMENT_FAILURE
    with pytest.raises(ValueError):
        make_record(StatusCode.OK, 5, 10)


def test_model_counts():
    assert model_instruction_count(Program((), (0, 1), 0)) == COST_SETUP
    prog = parse_program("R2=R0/R1\nR3=R2+1")
    assert model_instruction_count(prog) == model_instruction_count(prog) == COST_SETUP + 5 + 4


def test_model_count_repeatable_through_sandbox():
    s = generate_suite(3)
    counts = {evaluate_reference(s).instruction_count for _ in range(3)}
    assert len(counts) == 1


def test_provider_selection(monkeypatch):
    monkeypatch.delenv("GI_COUNTER", raising=False)
    assert resolve_provider() == "model"
    monkeypatch.setenv("GI_COUNTER", "hw")
    assert resolve_provider() == "hw"
    assert resolve_provider("auto") in ("hw", "model")
    with pytest.raises(ValueError):
        resolve_provider("cycles")

    class Run:
        hw_count, model_count = None, 42
    assert count_instructions(Run, "model") == 42
    assert count_instructions(Run, "hw") is None


@pytest.mark.skipif(hw_counter_available(), reason="hardware counter present")
def test_hw_request_without_counter_is_measurement_failure(suite):
    rec = evaluate_reference(suite, limits=Limits(counter="hw"))
    assert rec.status.code == StatusCode.MEASUREMENT_FAILURE


@pytest.mark.skipif(not hw_counter_available(), reason="no perf_event_open access here")
def test_hw_count_stability(suite):
    counts = [evaluate_reference(suite, limits=Limits(counter="hw")).instruction_count
              for _ in range(2)]
    assert abs(counts[0] - counts[1]) <= 1e-3 * max(counts)
