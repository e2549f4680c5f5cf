import numpy as np
import pytest

from lgpgi.batch import (COST_SETUP, LaneWidth, RegisterFileBatch, fetch_operand,
                         gather_divide, initial_batch, interpret_batch,
                         model_instruction_count)
from lgpgi.lgp import (PADDING_BYTE, Instruction, Opcode, Program, build_division_table,
                       interpret_scalar, protected_div, trace_scalar)
from lgpgi.testgen import fixture_division_rows, fixture_suite

TABLE = build_division_table()
WIDTHS = list(LaneWidth)


def random_program(rng, length=4):
    instrs = []
    for _ in range(length):
        const = bool(rng.random() < 0.5)
        instrs.append(Instruction(Opcode(int(rng.integers(4))), int(rng.integers(8)),
                                  int(rng.integers(8)),
                                  int(rng.integers(256)) if const else int(rng.integers(8)), const))
    a, b = rng.choice(8, size=2, replace=False)
    return Program(tuple(instrs), (int(a), int(b)), instrs[-1].dst if instrs else 0)


def test_lane_geometry():
    assert [(w.vectors, w.lanes) for w in WIDTHS] == [(1, 64), (2, 32), (4, 16)]


def test_fetch_constant_broadcast():
    batch = RegisterFileBatch(np.zeros((8, 64), dtype=np.uint8))
    ins = Instruction(Opcode.DIV, 6, 4, 126, True)
    for w in WIDTHS:
        v = fetch_operand(ins, "second", batch, w)
        assert v.shape == (w.vectors, w.lanes)
        assert (v == 126).all()


def test_fetch_register_identity():
    regs = np.random.default_rng(1).integers(0, 256, size=(8, 64)).astype(np.uint8)
    batch = RegisterFileBatch(regs)
    ins = Instruction(Opcode.ADD, 0, 4, 2)
    for w in WIDTHS:
        assert (fetch_operand(ins, "first", batch, w).reshape(-1) == regs[4]).all()
        assert (fetch_operand(ins, "second", batch, w).reshape(-1) == regs[2]).all()


def test_widening_zero_extends():
    regs = np.zeros((8, 64), dtype=np.uint8)
    ins = Instruction(Opcode.ADD, 0, 0, 1)
    for start in range(0, 256, 64):
        regs[0] = np.arange(start, start + 64)
        for w in (LaneWidth.W16, LaneWidth.W32):
            lanes = fetch_operand(ins, "first", RegisterFileBatch(regs), w).reshape(-1)
            assert lanes.dtype == w.dtype
            assert [int(v) for v in lanes] == list(range(start, start + 64))
    regs[0] = 0xAA
    assert int(fetch_operand(ins, "first", RegisterFileBatch(regs), LaneWidth.W16)[0, 0]) == 0x00AA


def test_fetch_rejects_bad_selector():
    with pytest.raises(ValueError):
        fetch_operand(Instruction(Opcode.ADD, 0, 0, 1), "third", RegisterFileBatch(np.zeros((8, 64), np.uint8)))


def test_gather_zero_divisor():
    xs = np.arange(64, dtype=np.uint8)
    assert (gather_divide(xs, np.zeros(64, np.uint8), TABLE) == 0).all()


def test_gather_table1_first_columns():
    suite = fixture_suite()
    rows = fixture_division_rows()
    for cases, want in zip(suite.inputs, rows):
        got = gather_divide(cases[:16, 0], cases[:16, 1], TABLE)
        assert list(got) == list(want[:16])


def test_gather_random_pairs():
    rng = np.random.default_rng(2)
    xs, ys = rng.integers(0, 256, (2, 64)).astype(np.uint8)
    want = [protected_div(int(x), int(y)) for x, y in zip(xs, ys)]
    assert list(gather_divide(xs, ys, TABLE)) == want


def test_gather_exhaustive_sweep():
    x, y = np.meshgrid(np.arange(256), np.arange(256), indexing="ij")
    xs, ys = x.reshape(-1, 64).astype(np.uint8), y.reshape(-1, 64).astype(np.uint8)
    ref = np.where(y == 0, 0, x // np.maximum(y, 1)).reshape(-1, 64)
    for i in range(xs.shape[0]):
        assert (gather_divide(xs[i], ys[i], TABLE) == ref[i]).all()


def test_empty_program_keeps_padding():
    prog = Program((), (1, 2), 1)
    cases = np.random.default_rng(3).integers(0, 256, (64, 2))
    out = interpret_batch(prog, cases, TABLE)
    for r in range(8):
        if r == 1:
            assert (out.regs[r] == cases[:, 0]).all()
        elif r == 2:
            assert (out.regs[r] == cases[:, 1]).all()
        else:
            assert (out.regs[r] == PADDING_BYTE).all()
    assert out.written == set()


def test_fixture_program1_division_row():
    suite = fixture_suite()
    prog = suite.programs[0]
    first = Program(prog.instructions[:1], prog.input_regs, prog.output_reg)
    out = interpret_batch(first, suite.inputs[0], TABLE)
    assert list(out.regs[5]) == list(fixture_division_rows()[0])


@pytest.mark.parametrize("width", WIDTHS)
def test_oracle_equivalence_random(width):
    rng = np.random.default_rng(int(width))
    for _ in range(1000):
        prog = random_program(rng, int(rng.integers(0, 7)))
        cases = rng.integers(0, 256, (64, 2)).astype(np.uint8)
        got = interpret_batch(prog, cases, TABLE, width).regs
        for c in range(0, 64, 7):
            assert list(got[:, c]) == interpret_scalar(prog, tuple(int(v) for v in cases[c]), TABLE).regs


def test_oracle_equivalence_fixture_all_columns():
    suite = fixture_suite()
    for prog, cases, exp in zip(suite.programs, suite.inputs, suite.expected):
        for w in WIDTHS:
            assert (interpret_batch(prog, cases, TABLE, w).regs == exp).all()


def test_cross_width_and_dispatch_and_mask_agree():
    rng = np.random.default_rng(9)
    for _ in range(300):
        prog = random_program(rng)
        cases = rng.integers(0, 256, (64, 2))
        ref = interpret_batch(prog, cases, TABLE, LaneWidth.W8).regs
        for w in WIDTHS:
            for mask in (True, False):
                for dispatch in ("eq", "ge"):
                    got = interpret_batch(prog, cases, TABLE, w, redundant_mask=mask, dispatch=dispatch)
                    assert (got.regs == ref).all()


def test_interpret_batch_needs_64_cases():
    with pytest.raises(ValueError):
        interpret_batch(Program((), (0, 1), 0), np.zeros((10, 2)), TABLE)


def test_batch_csv_shape():
    out = interpret_batch(fixture_suite().programs[0], fixture_suite().inputs[0], TABLE)
    lines = out.to_csv().splitlines()
    assert len(lines) == 9 and len(lines[0].split(",")) == 65


def test_model_count():
    assert model_instruction_count(Program((), (0, 1), 0)) == COST_SETUP
    prog = fixture_suite().programs[0]  # three DIV and one MUL
    assert model_instruction_count(prog) == COST_SETUP + 3 * 5 + 4
    assert model_instruction_count(prog, LaneWidth.W16) == COST_SETUP + 2 * (3 * 5 + 4)
    assert model_instruction_count(prog) == model_instruction_count(prog)


def test_initial_batch_layout():
    prog = Program((), (3, 5), 3)
    regs = initial_batch(prog, [[1, 2]] * 64)
    assert regs.shape == (8, 64) and (regs[3] == 1).all() and (regs[5] == 2).all()


def test_trace_matches_batch_rows():
    rng = np.random.default_rng(4)
    prog = random_program(rng)
    cases = rng.integers(0, 256, (64, 2))
    out = interpret_batch(prog, cases, TABLE)
    last = prog.instructions[-1].dst
    assert [int(v) for v in out.regs[last]] == [trace_scalar(prog, tuple(map(int, c)))[-1] for c in cases]
