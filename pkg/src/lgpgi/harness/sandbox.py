"""Running candidates in child processes and turning what happened into a
fitness record.

Child contract: the child builds its own arena, runs the candidate over every
program of the suite and exits through ``os._exit`` with

    0 all outputs right, 1 wrong outputs, 3 padding overwritten,
    4 a register the program never writes was changed,
    9 the requested counter could not be read, 124 cost cap hit.

A fault kills it with a signal instead.  Counts and details travel as
``key=value`` lines, over a pipe for forked children or in the file named by
``GI_COUNTER_FILE`` for external executables.
"""

from __future__ import annotations

import faulthandler
import os
import resource
import selectors
import signal
import subprocess
import sys
import tempfile
import time
import traceback
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Callable

import numpy as np

from ..batch import BatchConfig, LaneWidth, execute_batch, model_instruction_count
from ..lgp import DivisionTable, default_table, interpret_scalar
from ..testgen import TestSuite
from .arena import (PAGE_SIZE, REG_BYTES, ROW_BYTES, Arena, build_arena, padding_intact,
                    score_outputs, unused_rows_intact)
from .counters import InstructionCounter, resolve_provider

PENALTY = 10**9
COST_CAP = 10**7  # run-length cap; keeps any legitimate count far below PENALTY
DEFAULT_TIMEOUT = 30.0


class StatusCode(IntEnum):
    OK = 0
    WRONG_OUTPUT = 1
    PADDING_OVERWRITTEN = 3
    REGISTERS_CORRUPTED = 4
    MEASUREMENT_FAILURE = 9
    TIMEOUT = 124
    SIGABRT = 128 + signal.SIGABRT
    SIGFPE = 128 + signal.SIGFPE
    SIGSEGV = 128 + signal.SIGSEGV


_EXIT_CODES = {int(c): c for c in (StatusCode.OK, StatusCode.WRONG_OUTPUT,
                                   StatusCode.PADDING_OVERWRITTEN,
                                   StatusCode.REGISTERS_CORRUPTED,
                                   StatusCode.MEASUREMENT_FAILURE, StatusCode.TIMEOUT)}
_SIGNALS = {signal.SIGSEGV: StatusCode.SIGSEGV, signal.SIGBUS: StatusCode.SIGSEGV,
            signal.SIGFPE: StatusCode.SIGFPE, signal.SIGABRT: StatusCode.SIGABRT,
            signal.SIGILL: StatusCode.SIGABRT}


@dataclass(frozen=True)
class RunStatus:
    code: StatusCode
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.code == StatusCode.OK


@dataclass(frozen=True)
class FitnessRecord:
    status: RunStatus
    error_sum: int = 0
    instruction_count: int | None = None
    fitness: int = PENALTY
    provider: str = "model"

    @property
    def passed(self) -> bool:
        return self.status.ok


def make_record(code, error_sum=0, count=None, provider="model", detail="") -> FitnessRecord:
    code = StatusCode(code)
    if code == StatusCode.OK and count is None:
        code, detail = StatusCode.MEASUREMENT_FAILURE, detail or "no instruction count"
    if code == StatusCode.OK:
        if error_sum:
            raise ValueError("OK run with nonzero error")
        fitness = int(count)
    else:
        fitness = PENALTY + int(error_sum)
    return FitnessRecord(RunStatus(code, detail), int(error_sum),
                         None if count is None else int(count), fitness, provider)


@dataclass
class Limits:
    timeout: float = DEFAULT_TIMEOUT
    counter: str | None = None  # None: $GI_COUNTER, else model
    cost_cap: int = COST_CAP


# key=value reports

def format_report(report: dict) -> str:
    lines = []
    for k, v in report.items():
        v = "" if v is None else str(v)
        lines.append(f"{k}={v.replace(chr(10), ' ')}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def _int_or_none(v):
    return int(v) if v not in (None, "", "None") else None


def record_from_report(code: StatusCode, report: dict, provider: str) -> FitnessRecord:
    error_sum = _int_or_none(report.get("error_sum")) or 0
    count_key = "hw_count" if provider == "hw" else "model_count"
    count = _int_or_none(report.get(count_key))
    detail = report.get("detail", "")
    if code != StatusCode.OK:
        count = None
    return make_record(code, error_sum, count, provider, detail)


def classify_wait(waitstatus: int, timed_out: bool = False) -> StatusCode:
    if timed_out:
        return StatusCode.TIMEOUT
    if os.WIFSIGNALED(waitstatus):
        return _SIGNALS.get(os.WTERMSIG(waitstatus), StatusCode.MEASUREMENT_FAILURE)
    return classify_exit(os.WEXITSTATUS(waitstatus))


def classify_exit(returncode: int) -> StatusCode:
    if returncode < 0:  # subprocess convention for signals
        return _SIGNALS.get(-returncode, StatusCode.MEASUREMENT_FAILURE)
    if returncode in _EXIT_CODES:
        return _EXIT_CODES[returncode]
    if returncode - 128 in _SIGNALS:  # shells report signals as 128+n
        return _SIGNALS[returncode - 128]
    return StatusCode.MEASUREMENT_FAILURE


# the per-suite harness loop, run inside the child

class Fault(Exception):
    """Raised by simulated memory to request death by ``signum``."""

    def __init__(self, signum: int, detail: str = ""):
        super().__init__(detail or signal.Signals(signum).name)
        self.signum = signum


class CostCapExceeded(Exception):
    pass


def run_suite(arena, run_program: Callable, expected: list[np.ndarray], provider: str = "model"):
    """Run every program, checking padding then unused rows then outputs.

    ``run_program(arena, p)`` executes program ``p`` on the loaded register
    page and returns its model cost.  Returns ``(exit_code, report)``.
    """
    report = {"error_sum": 0, "model_count": 0, "hw_count": None, "provider": provider}
    hw_total = 0
    code = StatusCode.OK
    for p in range(len(arena.programs)):
        arena.load(p)
        try:
            if provider == "hw":
                with InstructionCounter() as ctr:
                    cost = run_program(arena, p)
                hw_total += ctr.count
            else:
                cost = run_program(arena, p)
        except OSError as exc:
            report["detail"] = f"counter: {exc}"
            return StatusCode.MEASUREMENT_FAILURE, report
        except CostCapExceeded as exc:
            report["detail"] = f"cost cap: {exc}"
            return StatusCode.TIMEOUT, report
        report["model_count"] += int(cost or 0)
        if not padding_intact(arena):
            report["detail"] = f"program {p}: padding overwritten"
            return StatusCode.PADDING_OVERWRITTEN, report
        if not unused_rows_intact(arena, p):
            report["detail"] = f"program {p}: unused register changed"
            return StatusCode.REGISTERS_CORRUPTED, report
        err = score_outputs(arena.regs, expected[p], arena.programs[p].written)
        if err:
            code = StatusCode.WRONG_OUTPUT
            report["error_sum"] += err
    if provider == "hw":
        report["hw_count"] = hw_total
    return code, report


def die_by(signum: int) -> None:
    """Terminate this process with ``signum`` and no core file."""
    if signum == signal.SIGABRT:
        os.abort()
    signal.signal(signum, signal.SIG_DFL)
    os.kill(os.getpid(), signum)
    time.sleep(1)
    os._exit(128 + signum)


def _child_prepare() -> None:
    faulthandler.disable()
    resource.setrlimit(resource.RLIMIT_CORE, (0, 0))
    for sig in (signal.SIGSEGV, signal.SIGBUS, signal.SIGFPE, signal.SIGABRT, signal.SIGINT):
        signal.signal(sig, signal.SIG_DFL)


def run_forked(target: Callable[[], tuple], timeout: float = DEFAULT_TIMEOUT):
    """Run ``target`` in a forked child; returns ``(StatusCode, report)``.

    ``target`` returns ``(exit_code, report_dict)``.  The child leaves through
    ``os._exit``: no atexit handlers, no unwinding, no flushing of inherited
    buffers.  An escaping exception aborts it.
    """
    r, w = os.pipe()
    pid = os.fork()
    if pid == 0:  # child
        try:
            os.close(r)
            _child_prepare()
            try:
                code, report = target()
            except Fault as exc:
                os.write(w, format_report({"detail": str(exc)}).encode())
                die_by(exc.signum)
            os.write(w, format_report(report).encode())
            os._exit(int(code))
        except BaseException:
            try:
                os.write(w, format_report({"detail": traceback.format_exc(limit=3)}).encode())
            finally:
                os.abort()
    os.close(w)
    chunks = []
    timed_out = False
    deadline = time.monotonic() + timeout
    with selectors.DefaultSelector() as sel:
        sel.register(r, selectors.EVENT_READ)
        while True:
            left = deadline - time.monotonic()
            if left <= 0 or not sel.select(left):
                timed_out = True
                os.kill(pid, signal.SIGKILL)
                break
            data = os.read(r, 65536)
            if not data:
                break
            chunks.append(data)
    os.close(r)
    _, status = os.waitpid(pid, 0)
    report = parse_report(b"".join(chunks).decode(errors="replace"))
    if timed_out:
        report["detail"] = f"killed after {timeout:g}s"
    return classify_wait(status, timed_out), report


def run_inline(target: Callable[[], tuple]):
    """Same contract as :func:`run_forked` but in this process.

    Only safe for candidates whose memory faults are simulated.
    """
    try:
        code, report = target()
    except Fault as exc:
        return _SIGNALS.get(exc.signum, StatusCode.MEASUREMENT_FAILURE), {"detail": str(exc)}
    except Exception as exc:
        return StatusCode.SIGABRT, {"detail": f"{type(exc).__name__}: {exc}"}
    return StatusCode(code), parse_report(format_report(report))


# the reference interpreters as candidates

FAULTS = ("reg-minus-1", "past-registers", "lut-write", "program-write", "padding",
          "unused-register", "wrong-output", "divide-by-zero", "abort", "hang", "guard-read")


def inject_fault(arena: Arena, p: int, kind: str) -> None:
    """Deliberate misbehaviour used to exercise the harness checks."""
    mem = arena.mem
    if kind == "reg-minus-1":
        mem[arena.regs_off - ROW_BYTES] = 0  # row -1 sits in the guard page
    elif kind == "past-registers":
        mem[arena.regs_off + PAGE_SIZE] = 0
    elif kind == "lut-write":
        mem[arena.lut_off + 4] = 0
    elif kind == "program-write":
        mem[arena.prog_offsets[p]] = 0
    elif kind == "guard-read":
        int(mem[arena.lut_off - 1])
    elif kind == "padding":
        mem[arena.regs_off + REG_BYTES + 100] ^= 0xFF
    elif kind == "unused-register":
        unused = [r for r in range(8) if r not in arena.programs[p].written]
        arena.regs[unused[0], 0] ^= 1
    elif kind == "wrong-output":
        v = int(arena.regs[arena.programs[p].output_reg, 0])
        arena.regs[arena.programs[p].output_reg, 0] = v + 3 if v < 253 else v - 3
    elif kind == "divide-by-zero":
        raise Fault(signal.SIGFPE, "integer divide by zero")
    elif kind == "abort":
        os.abort()
    elif kind == "hang":
        while True:
            time.sleep(0.05)
    else:
        raise ValueError(f"unknown fault {kind!r}")


def reference_runner(impl: str = "batch", width: int = 8, redundant_mask: bool = True,
                     dispatch: str = "eq", fault: str | None = None) -> Callable:
    """A ``run_program`` for :func:`run_suite` backed by the built-in interpreters."""
    def run(arena: Arena, p: int) -> int:
        prog = arena.programs[p]
        table = DivisionTable(arena.lut_view)
        if impl == "batch":
            execute_batch(prog, arena.regs, table,
                          BatchConfig(LaneWidth(width), redundant_mask, dispatch))
        elif impl == "scalar":
            for c, (x, y) in enumerate(arena.cases[p]):
                arena.regs[:, c] = interpret_scalar(prog, (int(x), int(y)), table).regs
        else:
            raise ValueError(f"unknown implementation {impl!r}")
        if fault is not None and p == 0:
            inject_fault(arena, p, fault)
        return model_instruction_count(prog, LaneWidth(width))
    return run


def harness_target(suite: TestSuite, run_program: Callable, provider: str,
                   table: DivisionTable | None = None) -> Callable[[], tuple]:
    def target():
        arena = build_arena(suite.programs, suite.inputs, table or default_table())
        return run_suite(arena, run_program, suite.expected, provider)
    return target


def evaluate_reference(suite: TestSuite, impl: str = "batch", width: int = 8, *,
                       redundant_mask: bool = True, dispatch: str = "eq",
                       fault: str | None = None, limits: Limits | None = None) -> FitnessRecord:
    """Run a built-in interpreter over ``suite`` in a forked sandbox."""
    limits = limits or Limits()
    provider = resolve_provider(limits.counter)
    suite.expected  # compute in the parent so children share it
    runner = reference_runner(impl, width, redundant_mask, dispatch, fault)
    code, report = run_forked(harness_target(suite, runner, provider), limits.timeout)
    return record_from_report(code, report, provider)


def run_mutant(executable, suite, limits: Limits | None = None) -> FitnessRecord:
    """Run an external candidate: ``executable SUITE_PATH``."""
    limits = limits or Limits()
    provider = resolve_provider(limits.counter)
    cmd = [str(executable)] if isinstance(executable, (str, Path)) else [str(a) for a in executable]
    with tempfile.TemporaryDirectory(prefix="lgpgi-run-") as tmp:
        if isinstance(suite, TestSuite):
            suite_path = Path(tmp) / "suite.txt"
            suite.save(suite_path)
        else:
            suite_path = Path(suite)
        counter_file = Path(tmp) / "counters.txt"
        env = dict(os.environ, GI_COUNTER_FILE=str(counter_file), GI_COUNTER=provider)
        try:
            proc = subprocess.run(cmd + [str(suite_path)], env=env, timeout=limits.timeout,
                                  stdout=subprocess.DEVNULL, stderr=subprocess.PIPE)
        except subprocess.TimeoutExpired:
            return make_record(StatusCode.TIMEOUT, provider=provider,
                               detail=f"killed after {limits.timeout:g}s")
        except OSError as exc:
            return make_record(StatusCode.MEASUREMENT_FAILURE, provider=provider,
                               detail=f"spawn failed: {exc}")
        report = parse_report(counter_file.read_text()) if counter_file.exists() else {}
        if not report.get("detail") and proc.returncode:
            report["detail"] = proc.stderr.decode(errors="replace")[-300:]
    return record_from_report(classify_exit(proc.returncode), report, provider)


def child_command() -> list[str]:
    """Command line for the reference child executable."""
    return [sys.executable, "-m", "lgpgi.harness.child"]
