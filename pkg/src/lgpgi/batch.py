"""Lane-parallel interpreter: one program over 64 cases at once.

This is a portable emulation of a 512-bit vector unit.  A register row holds
the 64 cases of one register.  At a given lane width the row is split into
``width // 8`` vectors of ``512 // width`` lanes; case ``c`` sits in vector
``c // lanes``, lane ``c % lanes``.  Only per-case results are observable, so
this order is a convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .lgp import (N_REGISTERS, PADDING_BYTE, DivisionTable, Instruction, Opcode,
                  Program, default_table)

N_CASES = 64
VECTOR_BYTES = 64
MASK_HIGH_BYTES = 0xAAAAAAAAAAAAAAAA  # blend mask: odd bytes = high byte of each 16-bit lane


class LaneWidth(IntEnum):
    W8 = 8
    W16 = 16
    W32 = 32

    @property
    def vectors(self) -> int:
        return self.value // 8

    @property
    def lanes(self) -> int:
        return VECTOR_BYTES * 8 // self.value

    @property
    def dtype(self):
        return {8: np.uint8, 16: np.uint16, 32: np.uint32}[self.value]


@dataclass
class RegisterFileBatch:
    regs: np.ndarray  # (8, 64) uint8
    written: set[int] = field(default_factory=set)

    def column(self, c: int) -> list[int]:
        return [int(v) for v in self.regs[:, c]]

    def to_csv(self) -> str:
        rows = [",".join(["reg"] + [f"c{c}" for c in range(self.regs.shape[1])])]
        for r in range(self.regs.shape[0]):
            rows.append(",".join([f"R{r}"] + [str(int(v)) for v in self.regs[r]]))
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class BatchConfig:
    width: LaneWidth = LaneWidth.W8
    redundant_mask: bool = True  # pre-multiply mask that the narrow step makes dead
    dispatch: str = "eq"  # "ge" uses >= for the final (DIV) test


def _widen(row: np.ndarray, width: LaneWidth) -> np.ndarray:
    return row.astype(width.dtype).reshape(width.vectors, width.lanes)


def _narrow(v: np.ndarray) -> np.ndarray:
    return (v.reshape(-1) & 0xFF).astype(np.uint8)


def fetch_operand(instr: Instruction, which: str, batch: RegisterFileBatch,
                  width: LaneWidth = LaneWidth.W8) -> np.ndarray:
    """Operand as ``(vectors, lanes)`` zero-extended lanes."""
    width = LaneWidth(width)
    n = batch.regs.shape[1]
    if which == "first":
        row = batch.regs[instr.src1]
    elif which == "second":
        if instr.src2_is_const:
            row = np.full(n, instr.src2, dtype=np.uint8)
        else:
            row = batch.regs[instr.src2]
    else:
        raise ValueError(f"which must be 'first' or 'second', not {which!r}")
    return _widen(row, width)


def gather_divide(xs, ys, table: DivisionTable | None = None) -> np.ndarray:
    """Protected division by table lookup, 16 lanes per 32-bit gather."""
    table = table or default_table()
    flat = table.entries.reshape(-1)
    xs = np.asarray(xs, dtype=np.uint32)
    ys = np.asarray(ys, dtype=np.uint32)
    idx = ((xs << 8) | ys).reshape(-1)
    n = len(idx)
    lanes = LaneWidth.W32.lanes
    idx = np.concatenate([idx, np.zeros(-n % lanes, dtype=np.uint32)]).reshape(-1, lanes)
    out = np.empty(idx.shape, dtype=np.uint32)
    for g in range(idx.shape[0]):
        out[g] = flat[idx[g]]
    return out.reshape(-1)[:n].reshape(xs.shape).astype(np.uint8)


def _mul_w8(a_row: np.ndarray, b_row: np.ndarray, redundant_mask: bool) -> np.ndarray:
    # no 8-bit multiply: sign-extend both halves to 16-bit lanes
    a = a_row.view(np.int8).astype(np.int16).view(np.uint16).reshape(2, 32)
    b = b_row.view(np.int8).astype(np.int16).view(np.uint16).reshape(2, 32)
    if redundant_mask:
        a = a & np.uint16(0x00FF)
        b = b & np.uint16(0x00FF)
    return _narrow(a * b)


def _mul_wide(a: np.ndarray, b: np.ndarray, redundant_mask: bool) -> np.ndarray:
    if redundant_mask:
        a = a & a.dtype.type(0xFF)
        b = b & b.dtype.type(0xFF)
    return _narrow(a * b)


def execute_batch(program: Program, regs: np.ndarray, table: DivisionTable | None = None,
                  config: BatchConfig = BatchConfig()) -> set[int]:
    """Run ``program`` in place over a (8, n) uint8 register array."""
    table = table or default_table()
    width = LaneWidth(config.width)
    ge = config.dispatch == "ge"
    batch = RegisterFileBatch(regs)
    for ins in program.instructions:
        op = int(ins.opcode)
        if op == Opcode.ADD:
            a = fetch_operand(ins, "first", batch, width)
            b = fetch_operand(ins, "second", batch, width)
            out = _narrow(a + b)
        elif op == Opcode.SUB:
            a = fetch_operand(ins, "first", batch, width)
            b = fetch_operand(ins, "second", batch, width)
            out = _narrow(a - b)
        elif op == Opcode.MUL:
            if width == LaneWidth.W8:
                a_row = regs[ins.src1]
                b_row = fetch_operand(ins, "second", batch, LaneWidth.W8).reshape(-1)
                out = _mul_w8(a_row, b_row, config.redundant_mask)
            else:
                a = fetch_operand(ins, "first", batch, width)
                b = fetch_operand(ins, "second", batch, width)
                out = _mul_wide(a, b, config.redundant_mask)
        elif (op >= Opcode.DIV) if ge else (op == Opcode.DIV):
            a = fetch_operand(ins, "first", batch, LaneWidth.W8).reshape(-1)
            b = fetch_operand(ins, "second", batch, LaneWidth.W8).reshape(-1)
            out = gather_divide(a, b, table)
        else:
            raise ValueError(f"bad opcode {op}")
        regs[ins.dst] = out
        batch.written.add(ins.dst)
    return batch.written


def initial_batch(program: Program, cases) -> np.ndarray:
    cases = np.asarray(cases, dtype=np.uint8).reshape(-1, 2)
    regs = np.full((N_REGISTERS, len(cases)), PADDING_BYTE, dtype=np.uint8)
    regs[program.input_regs[0]] = cases[:, 0]
    regs[program.input_regs[1]] = cases[:, 1]
    return regs


def interpret_batch(program: Program, cases, table: DivisionTable | None = None,
                    width: LaneWidth = LaneWidth.W8, *, redundant_mask: bool = True,
                    dispatch: str = "eq") -> RegisterFileBatch:
    cases = np.asarray(cases).reshape(-1, 2)
    if len(cases) != N_CASES:
        raise ValueError(f"interpret_batch needs exactly {N_CASES} cases, got {len(cases)}")
    regs = initial_batch(program, cases)
    written = execute_batch(program, regs, table,
                            BatchConfig(LaneWidth(width), redundant_mask, dispatch))
    return RegisterFileBatch(regs, written)


# cost model weights, per instruction per vector group
COST_SETUP = 8
COST_DISPATCH = 1
COST_FETCH = 1
COST_OP = {Opcode.ADD: 1, Opcode.SUB: 1, Opcode.MUL: 1, Opcode.DIV: 2}


def model_instruction_count(programs, width: LaneWidth = LaneWidth.W8) -> int:
    """Deterministic stand-in for a retired-instruction count."""
    if isinstance(programs, Program):
        programs = [programs]
    groups = LaneWidth(width).vectors
    total = COST_SETUP
    for prog in programs:
        for ins in prog.instructions:
            total += (COST_DISPATCH + 2 * COST_FETCH + COST_OP[ins.opcode]) * groups
    return total
