"""Byte-register linear GP: instruction set, protected division and the
scalar reference interpreter.

Everything else in the package (the lane-parallel interpreter, the sandbox
harness, the toy pipeline) is checked against :func:`interpret_scalar`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

N_REGISTERS = 8
PADDING_BYTE = 90  # 0x5A: four bits set, four clear
MAX_CONSTANT = 255


class Opcode(IntEnum):
    # DIV must stay the largest code: `op >= DIV` and `op == DIV` agree.
    ADD = 0
    SUB = 1
    MUL = 2
    DIV = 3

    @property
    def symbol(self) -> str:
        return _SYMBOLS[self]

    @classmethod
    def from_symbol(cls, sym: str) -> "Opcode":
        return _FROM_SYMBOL[sym]


_SYMBOLS = {Opcode.ADD: "+", Opcode.SUB: "-", Opcode.MUL: "*", Opcode.DIV: "/"}
_FROM_SYMBOL = {v: k for k, v in _SYMBOLS.items()}


@dataclass(frozen=True)
class Instruction:
    """``dst = src1 <op> src2`` where src2 is a register or a constant."""

    opcode: Opcode
    dst: int
    src1: int
    src2: int
    src2_is_const: bool = False

    def __post_init__(self):
        object.__setattr__(self, "opcode", Opcode(self.opcode))
        for name in ("dst", "src1"):
            v = getattr(self, name)
            if not 0 <= v < N_REGISTERS:
                raise ValueError(f"{name} register R{v} out of range")
        hi = MAX_CONSTANT if self.src2_is_const else N_REGISTERS - 1
        if not 0 <= self.src2 <= hi:
            raise ValueError(f"src2 {self.src2} out of range")

    def __str__(self) -> str:
        arg = str(self.src2) if self.src2_is_const else f"R{self.src2}"
        return f"R{self.dst}=R{self.src1}{self.opcode.symbol}{arg}"


@dataclass(frozen=True)
class Program:
    instructions: tuple[Instruction, ...]
    input_regs: tuple[int, int]
    output_reg: int

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        object.__setattr__(self, "input_regs", tuple(self.input_regs))
        for r in (*self.input_regs, self.output_reg):
            if not 0 <= r < N_REGISTERS:
                raise ValueError(f"register R{r} out of range")

    def __len__(self) -> int:
        return len(self.instructions)

    @property
    def written(self) -> frozenset[int]:
        return frozenset(ins.dst for ins in self.instructions)

    def to_text(self) -> str:
        return format_program(self)


@dataclass(frozen=True)
class DivisionTable:
    """256x256 protected-division results stored as 32-bit words.

    The width is what a 32-bit gather needs; only the low byte is ever set.
    """

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.entries.shape != (256, 256) or self.entries.dtype != np.uint32:
            raise ValueError("division table must be a 256x256 uint32 array")

    @property
    def nbytes(self) -> int:
        return self.entries.nbytes

    def __getitem__(self, xy):
        return self.entries[xy]


@dataclass
class RegisterState:
    regs: list[int]
    written: set[int] = field(default_factory=set)


def protected_div(x: int, y: int) -> int:
    return 0 if y == 0 else x // y


def build_division_table() -> DivisionTable:
    x = np.arange(256, dtype=np.uint32)[:, None]
    y = np.arange(256, dtype=np.uint32)[None, :]
    with np.errstate(divide="ignore"):
        q = np.where(y == 0, 0, x // np.maximum(y, 1))
    return DivisionTable(np.ascontiguousarray(q, dtype=np.uint32))


_DEFAULT_TABLE: DivisionTable | None = None


def default_table() -> DivisionTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = build_division_table()
        _DEFAULT_TABLE.entries.setflags(write=False)
    return _DEFAULT_TABLE


def apply_opcode(op: Opcode, a: int, b: int, table: DivisionTable | None = None) -> int:
    if op == Opcode.ADD:
        return (a + b) & 0xFF
    if op == Opcode.SUB:
        return (a - b) & 0xFF
    if op == Opcode.MUL:
        return (a * b) & 0xFF
    if op == Opcode.DIV:
        if table is None:
            return protected_div(a, b)
        return int(table.entries[a, b])
    raise ValueError(f"bad opcode {op!r}")


def initial_registers(program: Program, x: int, y: int) -> list[int]:
    regs = [PADDING_BYTE] * N_REGISTERS
    regs[program.input_regs[0]] = x
    regs[program.input_regs[1]] = y
    return regs


def interpret_scalar(program: Program, inputs: tuple[int, int],
                     table: DivisionTable | None = None) -> RegisterState:
    regs = initial_registers(program, *inputs)
    written = set()
    for ins in program.instructions:
        a = regs[ins.src1]
        b = ins.src2 if ins.src2_is_const else regs[ins.src2]
        regs[ins.dst] = apply_opcode(ins.opcode, a, b, table)
        written.add(ins.dst)
    return RegisterState(regs, written)


def trace_scalar(program: Program, inputs: tuple[int, int],
                 table: DivisionTable | None = None) -> list[int]:
    """Value written by each instruction, in order."""
    regs = initial_registers(program, *inputs)
    out = []
    for ins in program.instructions:
        a = regs[ins.src1]
        b = ins.src2 if ins.src2_is_const else regs[ins.src2]
        regs[ins.dst] = apply_opcode(ins.opcode, a, b, table)
        out.append(regs[ins.dst])
    return out


def expected_registers(program: Program, cases, table: DivisionTable | None = None) -> np.ndarray:
    """Oracle register file for every case: uint8 array of shape (8, n_cases)."""
    cases = np.asarray(cases, dtype=np.int64).reshape(-1, 2)
    if len(cases) == 0:
        raise ValueError("need at least one case")
    out = np.empty((N_REGISTERS, len(cases)), dtype=np.uint8)
    for c, (x, y) in enumerate(cases):
        out[:, c] = interpret_scalar(program, (int(x), int(y)), table).regs
    return out


# program text: ``R5=R0/R4`` or ``R6=R4/126``
_LINE = re.compile(r"^\s*R(\d+)\s*=\s*R(\d+)\s*([-+*/])\s*(R(\d+)|(\d+))\s*$")


def parse_instruction(line: str) -> Instruction:
    m = _LINE.match(line)
    if not m:
        raise ValueError(f"cannot parse instruction {line!r}")
    dst, src1, sym, _, reg2, const2 = m.groups()
    if reg2 is not None:
        return Instruction(Opcode.from_symbol(sym), int(dst), int(src1), int(reg2))
    return Instruction(Opcode.from_symbol(sym), int(dst), int(src1), int(const2), True)


def parse_program(text: str | Iterable[str], input_regs: Sequence[int] | None = None,
                  output_reg: int | None = None) -> Program:
    """Parse instruction lines.

    Without explicit ``input_regs`` the two register operands of instruction 0
    are taken as the inputs, and the last destination as the output.
    """
    lines = text.splitlines() if isinstance(text, str) else list(text)
    instrs = tuple(parse_instruction(ln) for ln in lines if ln.strip())
    if input_regs is None:
        if not instrs or instrs[0].src2_is_const:
            raise ValueError("cannot infer input registers")
        input_regs = (instrs[0].src1, instrs[0].src2)
    if output_reg is None:
        if not instrs:
            raise ValueError("cannot infer output register")
        output_reg = instrs[-1].dst
    return Program(instrs, tuple(input_regs), output_reg)


def format_program(program: Program) -> str:
    return "\n".join(str(ins) for ins in program.instructions)


def encode_program(program: Program) -> bytes:
    """Four bytes per instruction: opcode (bit 7 set for a constant
    operand), dst, src1, src2."""
    out = bytearray()
    for ins in program.instructions:
        out += bytes((int(ins.opcode) | (0x80 if ins.src2_is_const else 0),
                      ins.dst, ins.src1, ins.src2))
    return bytes(out)
