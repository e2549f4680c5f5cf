"""Runtime for compiled toy programs: 512-bit vector builtins over numpy
and the memory the program sees.

Addresses are byte offsets into the harness arena.  ``ArenaMemory`` touches
the real mapping, so guard and read-only pages fault for real; anything
outside the mapping kills the process with SIGSEGV too.  ``SimulatedMemory``
enforces the same page permissions in software and raises :class:`Fault`,
which lets a run stay in-process.
"""

from __future__ import annotations

import signal

import numpy as np

from ..harness.arena import LUT_PAGES, PAGE_SIZE, Arena
from ..harness.sandbox import CostCapExceeded, Fault
from .toylang import MASK64, wrap64

u8, u16, u32 = np.uint8, np.uint16, np.uint32
VEC = 64
_BIT = np.arange(64, dtype=np.uint64)


def _vec(a) -> np.ndarray:
    return np.ascontiguousarray(a).view(u8)


def b_setzero():
    return np.zeros(VEC, u8)


def b_set1_epi8(x):
    return np.full(VEC, int(x) & 0xFF, u8)


def b_set1_epi16(x):
    return np.full(VEC // 2, int(x) & 0xFFFF, u16).view(u8)


def b_set1_epi32(x):
    return np.full(VEC // 4, int(x) & 0xFFFFFFFF, u32).view(u8)


def _lanewise(dt, fn):
    return lambda a, b: _vec(fn(a.view(dt), b.view(dt)))


b_add_epi8 = _lanewise(u8, np.add)
b_add_epi16 = _lanewise(u16, np.add)
b_add_epi32 = _lanewise(u32, np.add)
b_sub_epi8 = _lanewise(u8, np.subtract)
b_sub_epi16 = _lanewise(u16, np.subtract)
b_sub_epi32 = _lanewise(u32, np.subtract)
b_mullo_epi16 = _lanewise(u16, np.multiply)
b_mullo_epi32 = _lanewise(u32, np.multiply)
b_and_si512 = _lanewise(u8, np.bitwise_and)
b_or_si512 = _lanewise(u8, np.bitwise_or)
b_xor_si512 = _lanewise(u8, np.bitwise_xor)
b_max_epu8 = _lanewise(u8, np.maximum)
b_min_epu8 = _lanewise(u8, np.minimum)


def b_avg_epu8(a, b):
    return ((a.astype(u16) + b + 1) >> 1).astype(u8)


def b_adds_epu8(a, b):
    return np.minimum(a.astype(u16) + b, 255).astype(u8)


def b_subs_epu8(a, b):
    return np.maximum(a.astype(np.int16) - b, 0).astype(u8)


def b_abs_epi8(a):
    return np.abs(a.view(np.int8)).view(u8)


def b_mask_blend_epi8(k, a, b):
    """Byte i comes from ``b`` where bit i of ``k`` is set, else from ``a``."""
    bits = (np.uint64(int(k) & MASK64) >> _BIT) & np.uint64(1)
    return np.where(bits.astype(bool), b, a)


def b_cvtepi8_epi16(v, j):
    h = (int(j) & 1) * 32
    return v[h:h + 32].view(np.int8).astype(np.int16).view(u8)


def b_cvtepu8_epi16(v, j):
    h = (int(j) & 1) * 32
    return v[h:h + 32].astype(u16).view(u8)


def b_cvtepi8_epi32(v, j):
    q = (int(j) & 3) * 16
    return v[q:q + 16].view(np.int8).astype(np.int32).view(u8)


def b_cvtepu8_epi32(v, j):
    q = (int(j) & 3) * 16
    return v[q:q + 16].astype(u32).view(u8)


def b_cvtepi16_epi8(lo, hi):
    return np.concatenate([lo.view(u16).astype(u8), hi.view(u16).astype(u8)])


def b_cvtepi32_epi8(a, b, c, d):
    return np.concatenate([x.view(u32).astype(u8) for x in (a, b, c, d)])


def _shift(dt, bits, left):
    def shift(v, n):
        n = int(n) & 0xFFFFFFFF
        if n >= bits:
            return np.zeros(VEC, u8)
        lanes = v.view(dt)
        return _vec(lanes << dt(n) if left else lanes >> dt(n))
    return shift


b_slli_epi16 = _shift(u16, 16, True)
b_srli_epi16 = _shift(u16, 16, False)
b_slli_epi32 = _shift(u32, 32, True)
b_srli_epi32 = _shift(u32, 32, False)


# scalar helpers used by generated code

INT_MIN = -(1 << 63)


def _div(a, b):
    if b == 0 or (a == INT_MIN and b == -1):
        raise Fault(signal.SIGFPE, "integer divide error")
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def _mod(a, b):
    return wrap64(a - b * _div(a, b))


def _shl(a, b):
    return wrap64(a << (b & 63))


def _cap():
    raise CostCapExceeded("run-length cap exceeded")


# memories

class ArenaMemory:
    def __init__(self, arena: Arena):
        self.mem = arena.mem
        self.size = arena.size

    def _range(self, a, n):
        if a < 0 or a + n > self.size:
            raise Fault(signal.SIGSEGV, f"access at {a} outside the arena")

    def load8(self, a):
        self._range(a, 1)
        return int(self.mem[a])

    def loadu(self, a):
        self._range(a, VEC)
        return self.mem[a:a + VEC].copy()

    def storeu(self, a, v):
        self._range(a, VEC)
        self.mem[a:a + VEC] = v

    def gather(self, idx, base):
        addrs = int(base) + 4 * idx.view(np.int32).astype(np.int64)
        if (addrs < 0).any() or (addrs + 4 > self.size).any():
            raise Fault(signal.SIGSEGV, "gather outside the arena")
        return self._gather(addrs)

    def _gather(self, addrs):
        lanes = self.mem[addrs[:, None] + np.arange(4)]
        return np.ascontiguousarray(lanes).view(u32).reshape(-1).view(u8)


class SimulatedMemory(ArenaMemory):
    """Page permissions checked in software over an unprotected arena."""

    READ, WRITE = 1, 2

    def __init__(self, arena: Arena):
        super().__init__(arena)
        perms = np.zeros(arena.size // PAGE_SIZE, dtype=np.uint8)
        perms[arena.regs_off // PAGE_SIZE] = self.READ | self.WRITE
        lut = arena.lut_off // PAGE_SIZE
        perms[lut:lut + LUT_PAGES] = self.READ
        prog = arena.prog_off // PAGE_SIZE
        perms[prog:prog + arena.prog_pages] = self.READ
        self.perms = perms

    def _check(self, a, n, need):
        self._range(a, n)
        p = self.perms
        if not (p[a // PAGE_SIZE] & need and p[(a + n - 1) // PAGE_SIZE] & need):
            raise Fault(signal.SIGSEGV, f"{'write' if need == self.WRITE else 'read'} fault at {a}")

    def load8(self, a):
        self._check(a, 1, self.READ)
        return int(self.mem[a])

    def loadu(self, a):
        self._check(a, VEC, self.READ)
        return self.mem[a:a + VEC].copy()

    def storeu(self, a, v):
        self._check(a, VEC, self.WRITE)
        self.mem[a:a + VEC] = v

    def gather(self, idx, base):
        addrs = int(base) + 4 * idx.view(np.int32).astype(np.int64)
        if (addrs < 0).any() or (addrs + 4 > self.size).any():
            raise Fault(signal.SIGSEGV, "gather outside the arena")
        pages = np.concatenate([addrs // PAGE_SIZE, (addrs + 3) // PAGE_SIZE])
        if not (self.perms[pages] & self.READ).all():
            raise Fault(signal.SIGSEGV, "gather read fault")
        return self._gather(addrs)


_BUILTIN_NAMES = [n for n in dir() if n.startswith("b_")]


def make_namespace(memory: ArenaMemory, cap: int) -> dict:
    ns = {n: globals()[n] for n in _BUILTIN_NAMES}
    ns.update(C=[0], CAP=cap, _cap=_cap, _w=wrap64, _div=_div, _mod=_mod, _shl=_shl,
              b_load8=memory.load8, b_loadu=memory.loadu, b_storeu=memory.storeu,
              b_gather_epi32=lambda idx, base: memory.gather(idx, base))
    return ns


def toy_runner(code, cap: int, simulated: bool = False):
    """A ``run_program`` for the harness that executes a compiled toy build."""
    state = {}

    def run(arena: Arena, p: int) -> int:
        ns = state.get(id(arena))
        if ns is None:
            memory = SimulatedMemory(arena) if simulated else ArenaMemory(arena)
            ns = make_namespace(memory, cap)
            exec(code, ns)
            state.clear()
            state[id(arena)] = ns
        ns["C"][0] = 0
        entry = ns.get("f_Interpret64")
        try:
            entry(arena.prog_offsets[p], len(arena.programs[p]), arena.regs_off, arena.lut_off)
        except RecursionError:
            raise Fault(signal.SIGSEGV, "stack overflow") from None
        return ns["C"][0]
    return run
