"""Guarded memory arena handed to candidate interpreters.

Layout, one anonymous mapping, every block page aligned::

    [guard][registers 1 page][guard][division table 64 pages][guard][programs][guard]

Guards are PROT_NONE, the table and program pages PROT_READ.  Register row
``r`` lives at byte ``64 * r`` of the register page; the other 3584 bytes are
padding.  The numpy view ``Arena.mem`` spans the whole mapping, so a stray
write through it hits the real protection and kills the process.
"""

from __future__ import annotations

import ctypes
import mmap

import numpy as np

from ..lgp import N_REGISTERS, PADDING_BYTE, DivisionTable, Program, encode_program

PAGE_SIZE = mmap.PAGESIZE
assert PAGE_SIZE == 4096, f"expected 4096-byte pages, got {PAGE_SIZE}"

ROW_BYTES = 64
REG_BYTES = N_REGISTERS * ROW_BYTES
LUT_PAGES = 64

PROT_NONE = 0
PROT_READ = 1
PROT_WRITE = 2

_libc = ctypes.CDLL(None, use_errno=True)
_libc.mprotect.argtypes = [ctypes.c_void_p, ctypes.c_size_t, ctypes.c_int]
_libc.mprotect.restype = ctypes.c_int


class ArenaSetupError(OSError):
    pass


def mprotect(addr: int, length: int, prot: int) -> None:
    if _libc.mprotect(addr, length, prot) != 0:
        err = ctypes.get_errno()
        raise ArenaSetupError(err, f"mprotect failed at {addr:#x}+{length}")


class Arena:
    def __init__(self, programs: list[Program], cases: list[np.ndarray], table: DivisionTable):
        if len(programs) != len(cases):
            raise ValueError("one case block per program")
        self.programs = list(programs)
        self.cases = [np.asarray(c, dtype=np.uint8).reshape(-1, 2) for c in cases]
        if any(len(c) != ROW_BYTES for c in self.cases):
            raise ValueError(f"each program needs {ROW_BYTES} cases")
        codes = [encode_program(p) for p in self.programs]
        prog_bytes = sum(len(c) for c in codes)
        self.prog_pages = max(1, -(-prog_bytes // PAGE_SIZE))

        self.regs_off = PAGE_SIZE
        self.lut_off = self.regs_off + 2 * PAGE_SIZE
        self.prog_off = self.lut_off + (LUT_PAGES + 1) * PAGE_SIZE
        self.size = self.prog_off + (self.prog_pages + 1) * PAGE_SIZE
        self.guards = [(0, PAGE_SIZE), (self.regs_off + PAGE_SIZE, PAGE_SIZE),
                       (self.lut_off + LUT_PAGES * PAGE_SIZE, PAGE_SIZE),
                       (self.prog_off + self.prog_pages * PAGE_SIZE, PAGE_SIZE)]

        self._map = mmap.mmap(-1, self.size, prot=mmap.PROT_READ | mmap.PROT_WRITE)
        self.mem = np.frombuffer(self._map, dtype=np.uint8)
        self.base = self.mem.ctypes.data
        self.mem[:] = PADDING_BYTE

        self.lut_view[:] = table.entries
        self.prog_offsets = []
        pos = self.prog_off
        for code in codes:
            self.prog_offsets.append(pos)
            self.mem[pos:pos + len(code)] = np.frombuffer(code, dtype=np.uint8)
            pos += len(code)
        self.protected = False

    # views
    @property
    def regs_page(self) -> np.ndarray:
        return self.mem[self.regs_off:self.regs_off + PAGE_SIZE]

    @property
    def regs(self) -> np.ndarray:
        return self.regs_page[:REG_BYTES].reshape(N_REGISTERS, ROW_BYTES)

    @property
    def padding(self) -> np.ndarray:
        return self.regs_page[REG_BYTES:]

    @property
    def lut_view(self) -> np.ndarray:
        lut = self.mem[self.lut_off:self.lut_off + LUT_PAGES * PAGE_SIZE]
        return lut.view(np.uint32).reshape(256, 256)

    def protect(self) -> None:
        for off, n in self.guards:
            mprotect(self.base + off, n, PROT_NONE)
        mprotect(self.base + self.lut_off, LUT_PAGES * PAGE_SIZE, PROT_READ)
        mprotect(self.base + self.prog_off, self.prog_pages * PAGE_SIZE, PROT_READ)
        self.protected = True

    def initial_registers(self, p: int) -> np.ndarray:
        regs = np.full((N_REGISTERS, ROW_BYTES), PADDING_BYTE, dtype=np.uint8)
        a, b = self.programs[p].input_regs
        regs[a] = self.cases[p][:, 0]
        regs[b] = self.cases[p][:, 1]
        return regs

    def load(self, p: int) -> None:
        """Reset the register page for program ``p``."""
        self.padding[:] = PADDING_BYTE
        self.regs[:] = self.initial_registers(p)

    def block_of(self, off: int) -> str:
        if self.regs_off <= off < self.regs_off + PAGE_SIZE:
            return "registers"
        if self.lut_off <= off < self.lut_off + LUT_PAGES * PAGE_SIZE:
            return "lut"
        if self.prog_off <= off < self.prog_off + self.prog_pages * PAGE_SIZE:
            return "program"
        if 0 <= off < self.size:
            return "guard"
        return "outside"

    def close(self) -> None:
        self.mem = None
        if self.protected:
            mprotect(self.base, self.size, PROT_READ | PROT_WRITE)
        try:
            self._map.close()
        except BufferError:
            pass  # a caller still holds a view; the mapping goes with the process


def build_arena(programs, cases, table: DivisionTable, load: int | None = 0) -> Arena:
    if isinstance(programs, Program):
        programs, cases = [programs], [cases]
    arena = Arena(programs, cases, table)
    if load is not None:
        arena.load(load)
    arena.protect()
    return arena


def padding_intact(arena: Arena) -> bool:
    return bool((arena.padding == PADDING_BYTE).all())


def unused_rows_intact(arena: Arena, p: int) -> bool:
    """Rows the program never writes must still hold their initial bytes."""
    init = arena.initial_registers(p)
    written = arena.programs[p].written
    rows = [r for r in range(N_REGISTERS) if r not in written]
    return bool((arena.regs[rows] == init[rows]).all())


def check_padding(arena: Arena, p: int = 0) -> bool:
    """Blind to reads: a candidate that only reads stray memory passes."""
    return padding_intact(arena) and unused_rows_intact(arena, p)


def score_outputs(regs, expected, written=None) -> int:
    """Sum of absolute byte differences over the written rows."""
    regs = np.asarray(regs, dtype=np.int64)
    expected = np.asarray(expected, dtype=np.int64)
    rows = sorted(written) if written is not None else list(range(regs.shape[0]))
    if not rows:
        return 0
    return int(np.abs(regs[rows] - expected[rows]).sum())
