"""Random test programs, their division-heavy inputs, and output
distribution diagnostics.

Randomness comes from ``numpy.random.Generator`` on the PCG64 bit generator,
so a seed gives the same suite on every platform.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .lgp import (N_REGISTERS, DivisionTable, Instruction, Opcode, Program,
                  expected_registers, format_program, initial_registers,
                  parse_instruction, protected_div, apply_opcode, default_table)

N_PROGRAMS = 4
PROGRAM_LENGTH = 4
N_CASES = 64
REGISTER_OPERAND_FRACTION = 0.2
MAX_GEN_CONSTANT = 127

# division input categories
DIV_BY_ZERO = "div_by_zero"
QUOTIENT_0 = "quotient_0"
QUOTIENT_1 = "quotient_1"
QUOTIENT_255 = "quotient_255"
QUOTIENT_RANDOM = "quotient_1_255"
QUOTIENT_UNIFORM = "quotient_2_127"
CATEGORIES = (DIV_BY_ZERO, QUOTIENT_0, QUOTIENT_1, QUOTIENT_255, QUOTIENT_RANDOM,
              QUOTIENT_UNIFORM)
CATEGORY_PROBS = (1 / 2, 1 / 16, 1 / 16, 1 / 16, 1 / 16, 1 / 4)


def make_rng(seed=None) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class TestSuite:
    __test__ = False  # not a pytest class

    programs: list[Program]
    inputs: list[np.ndarray]  # per program, (n_cases, 2) uint8
    seed: int | None = None
    _expected: list[np.ndarray] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.inputs = [np.asarray(c, dtype=np.uint8).reshape(-1, 2) for c in self.inputs]
        if len(self.programs) != len(self.inputs):
            raise ValueError("one input block per program")

    @property
    def n_pairs(self) -> int:
        return sum(len(c) for c in self.inputs)

    @property
    def expected(self) -> list[np.ndarray]:
        """Per program, the oracle register file, shape (8, n_cases)."""
        if self._expected is None:
            table = default_table()
            self._expected = [expected_registers(p, c, table)
                              for p, c in zip(self.programs, self.inputs)]
        return self._expected

    def to_text(self) -> str:
        return format_suite(self)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "TestSuite":
        return parse_suite(Path(path).read_text())


def gen_programs(rng: np.random.Generator, n_programs: int = N_PROGRAMS,
                 length: int = PROGRAM_LENGTH, max_tries: int = 10_000) -> list[Program]:
    """Random programs that all start with a division of their two inputs.

    Later instructions read only registers holding known values.  All four
    opcodes are forced to appear across the suite, checked when the third
    program (or the last, for smaller suites) is drawn.
    """
    if length < 1:
        raise ValueError("programs need at least one instruction")
    enforce_at = min(2, n_programs - 1)
    programs: list[Program] = []
    for p in range(n_programs):
        for _ in range(max_tries):
            prog = _gen_program(rng, length)
            if p != enforce_at:
                break
            ops = {ins.opcode for q in (*programs, prog) for ins in q.instructions}
            if ops == set(Opcode):
                break
        else:
            raise ValueError("cannot place all four opcodes in the suite")
        programs.append(prog)
    return programs


def _gen_program(rng: np.random.Generator, length: int) -> Program:
    in0, in1 = (int(r) for r in rng.choice(N_REGISTERS, size=2, replace=False))
    output = int(rng.integers(N_REGISTERS))
    known = [in0, in1]
    dst = output if length == 1 else int(rng.integers(N_REGISTERS))
    instrs = [Instruction(Opcode.DIV, dst, in0, in1)]
    known.append(dst)
    for i in range(1, length):
        op = Opcode(int(rng.integers(4)))
        dst = output if i == length - 1 else int(rng.integers(N_REGISTERS))
        src1 = int(rng.choice(sorted(set(known))))
        if rng.random() < REGISTER_OPERAND_FRACTION:
            ins = Instruction(op, dst, src1, int(rng.choice(sorted(set(known)))))
        else:
            ins = Instruction(op, dst, src1, int(rng.integers(MAX_GEN_CONSTANT + 1)), True)
        instrs.append(ins)
        known.append(dst)
    return Program(tuple(instrs), (in0, in1), output)


def _pair_for_quotient(rng: np.random.Generator, q: int) -> tuple[int, int]:
    # reject y until some byte x gives floor(x / y) == q, then draw that x
    while True:
        y = int(rng.integers(1, 256))
        lo = q * y
        hi = min(q * y + y - 1, 255)
        if lo <= hi:
            return int(rng.integers(lo, hi + 1)), y


def gen_division_inputs(rng: np.random.Generator, n: int = N_CASES,
                        return_categories: bool = False):
    """``n`` (x, y) pairs for a protected division.

    Half divide by zero; 1/16 each target quotient 0, 1, 255 and a random
    quotient in 1..255; the last quarter a uniform quotient in 2..127.
    """
    if n < 8:
        raise ValueError("need at least 8 pairs")
    cats = rng.choice(len(CATEGORIES), size=n, p=CATEGORY_PROBS)
    pairs = np.empty((n, 2), dtype=np.uint8)
    for i, c in enumerate(cats):
        name = CATEGORIES[c]
        if name == DIV_BY_ZERO:
            x, y = int(rng.integers(256)), 0
        else:
            q = {QUOTIENT_0: 0, QUOTIENT_1: 1, QUOTIENT_255: 255}.get(name)
            if q is None:
                q = int(rng.integers(1, 256)) if name == QUOTIENT_RANDOM else int(rng.integers(2, 128))
            x, y = _pair_for_quotient(rng, q)
            assert protected_div(x, y) == q
        pairs[i] = x, y
    if return_categories:
        return pairs, [CATEGORIES[c] for c in cats]
    return pairs


def generate_suite(seed: int | None = None, n_programs: int = N_PROGRAMS,
                   n_cases: int = N_CASES, length: int = PROGRAM_LENGTH) -> TestSuite:
    rng = make_rng(seed)
    programs = gen_programs(rng, n_programs, length)
    inputs = [gen_division_inputs(rng, n_cases) for _ in programs]
    return TestSuite(programs, inputs, seed)


# ---------------------------------------------------------------- diagnostics

@dataclass
class DistributionReport:
    steps: list[str]
    histograms: dict[tuple[int, str], np.ndarray]  # (program, step) -> 256 counts
    entropy: dict[tuple[int, str], float]
    opcodes: dict[tuple[int, str], Opcode] = field(default_factory=dict)

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["program", "step", "bin", "count"])
        for (p, step), h in self.histograms.items():
            for b in np.flatnonzero(h):
                w.writerow([p, step, int(b), int(h[b])])
        return buf.getvalue()

    def entropy_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["program", "step", "entropy"])
        for (p, step), h in self.entropy.items():
            w.writerow([p, step, f"{h:.6f}"])
        return buf.getvalue()

    def merge(self, other: "DistributionReport") -> "DistributionReport":
        steps = self.steps if len(self.steps) >= len(other.steps) else other.steps
        return DistributionReport(steps, {**self.histograms, **other.histograms},
                                  {**self.entropy, **other.entropy},
                                  {**self.opcodes, **other.opcodes})


def value_entropy(histogram) -> float:
    """Shannon entropy in bits of a histogram of counts."""
    h = np.asarray(histogram, dtype=np.float64)
    if (h < 0).any():
        raise ValueError("negative count")
    total = h.sum()
    if total <= 0:
        raise ValueError("empty histogram")
    p = h[h > 0] / total
    return float(-(p * np.log2(p)).sum()) + 0.0


def trace_distributions(program: Program, cases, table: DivisionTable | None = None,
                        program_index: int = 0) -> DistributionReport:
    """Histogram and entropy of the inputs and of every instruction's output."""
    table = table or default_table()
    cases = np.asarray(cases, dtype=np.int64).reshape(-1, 2)
    steps = ["x", "y"] + [str(i) for i in range(len(program))]
    values = {s: [] for s in steps}
    for x, y in cases:
        values["x"].append(int(x))
        values["y"].append(int(y))
        regs = initial_registers(program, int(x), int(y))
        for i, ins in enumerate(program.instructions):
            b = ins.src2 if ins.src2_is_const else regs[ins.src2]
            regs[ins.dst] = apply_opcode(ins.opcode, regs[ins.src1], b, table)
            values[str(i)].append(regs[ins.dst])
    hists, ent, ops = {}, {}, {}
    for s in steps:
        h = np.bincount(values[s], minlength=256)
        hists[(program_index, s)] = h
        ent[(program_index, s)] = value_entropy(h)
    for i, ins in enumerate(program.instructions):
        ops[(program_index, str(i))] = ins.opcode
    return DistributionReport(steps, hists, ent, ops)


def trace_suite(suite: TestSuite, table: DivisionTable | None = None) -> DistributionReport:
    report = None
    for p, (prog, cases) in enumerate(zip(suite.programs, suite.inputs), start=1):
        r = trace_distributions(prog, cases, table, program_index=p)
        report = r if report is None else report.merge(r)
    return report


def entropy_losses(program: Program, cases, table: DivisionTable | None = None) -> list[tuple[Opcode, float]]:
    """(opcode, H(first operand) - H(result)) for each instruction."""
    table = table or default_table()
    cases = np.asarray(cases, dtype=np.int64).reshape(-1, 2)
    srcs = [[] for _ in program.instructions]
    outs = [[] for _ in program.instructions]
    for x, y in cases:
        regs = initial_registers(program, int(x), int(y))
        for i, ins in enumerate(program.instructions):
            srcs[i].append(regs[ins.src1])
            b = ins.src2 if ins.src2_is_const else regs[ins.src2]
            regs[ins.dst] = apply_opcode(ins.opcode, regs[ins.src1], b, table)
            outs[i].append(regs[ins.dst])
    return [(ins.opcode,
             value_entropy(np.bincount(s, minlength=256)) - value_entropy(np.bincount(o, minlength=256)))
            for ins, s, o in zip(program.instructions, srcs, outs)]


# ---------------------------------------------------------------- suite files

def format_suite(suite: TestSuite) -> str:
    seed = "none" if suite.seed is None else str(suite.seed)
    lines = [f"suite v1 seed={seed}"]
    for p, prog in enumerate(suite.programs, start=1):
        a, b = prog.input_regs
        lines.append(f"program {p} inputs R{a} R{b} output R{prog.output_reg}")
        lines.append(format_program(prog))
    for p, cases in enumerate(suite.inputs, start=1):
        lines.append(f"cases {p}")
        lines += [f"{x} {y} {protected_div(int(x), int(y))}" for x, y in cases]
    return "\n".join(lines) + "\n"


def _reg(tok: str) -> int:
    if not tok.startswith("R"):
        raise ValueError(f"expected register, got {tok!r}")
    return int(tok[1:])


def parse_suite(text: str) -> TestSuite:
    """Parse a suite file; the expected column is checked against the oracle."""
    seed = None
    headers: dict[int, tuple[tuple[int, int], int]] = {}
    bodies: dict[int, list[Instruction]] = {}
    cases: dict[int, list[tuple[int, int]]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "suite":
                for kv in tok[2:]:
                    k, _, v = kv.partition("=")
                    if k == "seed" and v != "none":
                        seed = int(v)
            elif tok[0] == "program":
                p = int(tok[1])
                if tok[2] != "inputs" or tok[5] != "output":
                    raise ValueError("bad program header")
                headers[p] = ((_reg(tok[3]), _reg(tok[4])), _reg(tok[6]))
                bodies[p] = []
                section = ("program", p)
            elif tok[0] == "cases":
                p = int(tok[1])
                cases[p] = []
                section = ("cases", p)
            elif section and section[0] == "program":
                bodies[section[1]].append(parse_instruction(line))
            elif section and section[0] == "cases":
                x, y, want = (int(t) for t in tok)
                if not (0 <= x < 256 and 0 <= y < 256):
                    raise ValueError("inputs must be bytes")
                if protected_div(x, y) != want:
                    raise ValueError(f"expected column {want} != {x}/{y}")
                cases[section[1]].append((x, y))
            else:
                raise ValueError(f"unexpected line {raw!r}")
        except (ValueError, IndexError) as e:
            raise ValueError(f"suite line {lineno}: {e}") from None
    order = sorted(headers)
    if order != sorted(cases):
        raise ValueError("every program needs a cases block")
    programs = [Program(tuple(bodies[p]), *headers[p]) for p in order]
    return TestSuite(programs, [np.array(cases[p], dtype=np.uint8) for p in order], seed)


def fixture_suite() -> TestSuite:
    """The four hand-made test programs and their 256 published input pairs."""
    text = resources.files("lgpgi.data").joinpath("table1.suite").read_text()
    return parse_suite(text)


def fixture_division_rows() -> list[np.ndarray]:
    """Published third column (protected x/y) per program, read verbatim."""
    text = resources.files("lgpgi.data").joinpath("table1.suite").read_text()
    rows, cur = [], None
    for line in text.splitlines():
        tok = line.split()
        if tok and tok[0] == "cases":
            cur = []
            rows.append(cur)
        elif cur is not None and len(tok) == 3:
            cur.append(int(tok[2]))
    return [np.array(r) for r in rows]
