"""From patch to fitness: render, build twice, reject unchanged objects, run
in the sandbox, cache.

Outcome classes, one per evaluation:

    cache             key seen before, stored result returned
    compile_error     either build failed
    object_unchanged  optimised artifact identical to the unpatched one
    runtime_error     a run failed its checks or died
    timeout           a run or build exceeded its limit
    all_tests_passed
"""

from __future__ import annotations

import shlex
import subprocess
import sys
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from ..harness.counters import resolve_provider
from ..harness.sandbox import (PENALTY, FitnessRecord, Limits, StatusCode, harness_target,
                               record_from_report, run_forked, run_inline, run_mutant)
from ..testgen import TestSuite
from .edits import Patch, apply_patch
from .toycc import build_checked, check_source
from .toylang import CompileError
from .toyrt import toy_runner
from .tree import SourceTree

OUTCOMES = ("cache", "compile_error", "object_unchanged", "runtime_error",
            "all_tests_passed", "timeout")
COMPILE_PENALTY = 2 * PENALTY
DEFAULT_PARAMS = {"WIDTH": 8}
LANE_WIDTHS = (8, 16, 32)


class PipelineError(Exception):
    """The unpatched program cannot be built or does not pass."""


@dataclass(frozen=True)
class EvalResult:
    outcome: str
    fitness: int
    passed: bool
    record: FitnessRecord | None = None
    applied: tuple = ()
    detail: str = ""
    origin: str = ""  # for cache hits, the outcome of the original evaluation

    @property
    def status(self) -> StatusCode | None:
        return self.record.status.code if self.record else None


def _run_outcome(record: FitnessRecord) -> str:
    if record.passed:
        return "all_tests_passed"
    return "timeout" if record.status.code == StatusCode.TIMEOUT else "runtime_error"


def _failed(outcome: str, detail: str, applied, record=None) -> EvalResult:
    fitness = record.fitness if record else COMPILE_PENALTY
    return EvalResult(outcome, fitness, False, record, tuple(applied), detail)


class Pipeline:
    """Shared machinery: trees, params and the two-stage evaluation.

    Subclasses provide ``_build(sources, params, opt)`` returning
    ``(artifact_bytes, handle)`` or raising :class:`CompileError` /
    :class:`TimeoutError`, and ``_run(handle) -> FitnessRecord``.
    """

    def __init__(self, targets: list[SourceTree], ingredients: list[SourceTree] = (),
                 suite: TestSuite | None = None, params: dict | None = None,
                 limits: Limits | None = None, stage1_run: bool = True):
        if not targets:
            raise ValueError("at least one target tree is required")
        self.targets = [t for t in targets]
        self.ingredients = list(ingredients)
        self.trees = {t.file: t for t in self.targets + self.ingredients}
        self.suite = suite
        self.params = dict(DEFAULT_PARAMS if params is None else params)
        self.limits = limits or Limits()
        self.provider = resolve_provider(self.limits.counter)
        self.stage1_run = stage1_run
        self.builds = 0
        self._lock = threading.Lock()
        self._baseline: bytes | None = None
        self._baseline_record: FitnessRecord | None = None

    # rendering

    def sources(self, patch: Patch = Patch()) -> dict[str, str]:
        trees, _ = apply_patch(self.trees, patch)
        return {t.file: trees[t.file].render() for t in self.targets}

    def effective_params(self, patch: Patch) -> dict:
        params = dict(self.params)
        params.update(patch.param_dict())
        return params

    def baseline_artifact(self) -> bytes:
        if self._baseline is None:
            try:
                art, _ = self._counted_build(self.sources(), self.params, 3)
            except (CompileError, TimeoutError) as exc:
                raise PipelineError(f"unpatched program does not build: {exc}") from exc
            self._baseline = art
        return self._baseline

    def _counted_build(self, sources, params, opt):
        with self._lock:
            self.builds += 1
        return self._build(sources, params, opt)

    # evaluation

    def evaluate(self, patch: Patch, reject_unchanged: bool = True) -> EvalResult:
        """``reject_unchanged=False`` runs the patched program even when its
        optimised artifact matches the baseline (used for verification)."""
        trees, applied = apply_patch(self.trees, patch)
        sources = {t.file: trees[t.file].render() for t in self.targets}
        params = self.effective_params(patch)
        baseline = self.baseline_artifact()
        try:
            _, h0 = self._counted_build(sources, params, 0)
        except CompileError as exc:
            return _failed("compile_error", str(exc), applied)
        except TimeoutError as exc:
            return _failed("timeout", str(exc), applied)
        if self.stage1_run:
            rec = self._run(h0)
            if not rec.passed:
                return _failed(_run_outcome(rec), f"unoptimised build: {rec.status.detail}",
                               applied, rec)
        try:
            art, h3 = self._counted_build(sources, params, 3)
        except CompileError as exc:
            return _failed("compile_error", str(exc), applied)
        except TimeoutError as exc:
            return _failed("timeout", str(exc), applied)
        if reject_unchanged and art == baseline:
            return EvalResult("object_unchanged", self.baseline_record().fitness, False,
                              self.baseline_record(), tuple(applied))
        rec = self._run(h3)
        return EvalResult(_run_outcome(rec), rec.fitness, rec.passed, rec, tuple(applied),
                          rec.status.detail)

    def run_baseline(self) -> FitnessRecord:
        """Build and run the unpatched program (one warmup evaluation)."""
        try:
            _, handle = self._counted_build(self.sources(), self.params, 3)
        except (CompileError, TimeoutError) as exc:
            raise PipelineError(f"unpatched program does not build: {exc}") from exc
        return self._run(handle)

    def baseline_record(self) -> FitnessRecord:
        if self._baseline_record is None:
            self.set_baseline(self.run_baseline())
        return self._baseline_record

    def set_baseline(self, record: FitnessRecord) -> None:
        if not record.passed:
            raise PipelineError(f"unpatched program fails: {record.status.code.name} "
                                f"{record.status.detail}")
        self._baseline_record = record

    def _build(self, sources: dict, params: dict, opt: int):
        raise NotImplementedError

    def _run(self, handle) -> FitnessRecord:
        raise NotImplementedError


class ToyPipeline(Pipeline):
    """Built-in pipeline: the toy compiler in process, runs in the sandbox.

    ``sandbox="fork"`` runs each build in a forked child over the protected
    arena; ``"inline"`` stays in process with page permissions simulated.
    """

    def __init__(self, *args, sandbox: str = "fork", **kwargs):
        super().__init__(*args, **kwargs)
        if sandbox not in ("fork", "inline"):
            raise ValueError(f"unknown sandbox {sandbox!r}")
        self.sandbox = sandbox
        self._checked = {}

    def _build(self, sources, params, opt):
        width = params.get("WIDTH", 8)
        if width not in LANE_WIDTHS:
            raise CompileError(f"unsupported lane width {width!r}")
        src = "\n".join(sources.values())
        # both stages of one evaluation share the parse
        key = (src, tuple(sorted(params.items())))
        funcs = self._checked.get(key)
        if funcs is None:
            try:
                funcs = check_source(src, params)
            except RecursionError:
                raise CompileError("nesting too deep") from None
            self._checked = {key: funcs}
        b = build_checked(funcs, opt)
        return b.artifact.encode(), b

    def _run(self, b) -> FitnessRecord:
        simulated = self.sandbox == "inline"
        target = harness_target(self.suite, toy_runner(b.code, self.limits.cost_cap, simulated),
                                self.provider)
        if simulated:
            code, report = run_inline(target)
        else:
            code, report = run_forked(target, self.limits.timeout)
        return record_from_report(code, report, self.provider)


class CommandPipeline(Pipeline):
    """External build and run commands.

    Templates are formatted with ``{sources}`` (rendered files, space
    separated), ``{artifact}``, ``{opt}`` (0 or 3), ``{python}`` and every
    param by name.  The run command gets the suite path appended.
    """

    def __init__(self, *args, build_cmd: str, run_cmd: str, artifact: str = "artifact",
                 build_timeout: float | None = None, workdir=None, **kwargs):
        super().__init__(*args, **kwargs)
        self.build_cmd = build_cmd
        self.run_cmd = run_cmd
        self.artifact = artifact
        self.build_timeout = build_timeout or self.limits.timeout
        self._tmp = tempfile.TemporaryDirectory(prefix="lgpgi-build-") if workdir is None else None
        self.workdir = Path(workdir or self._tmp.name)
        self._serial = 0
        self._suite_path = self.workdir / "suite.txt"
        if self.suite is not None:
            self.suite.save(self._suite_path)

    def _fields(self, params, **extra):
        return {"python": shlex.quote(sys.executable), **params, **extra}

    def _build(self, sources, params, opt):
        with tempfile.TemporaryDirectory(dir=self.workdir) as d:
            paths = []
            for name, text in sources.items():
                p = Path(d) / Path(name).name.removesuffix(".xml")
                p.write_text(text)
                paths.append(shlex.quote(str(p)))
            with self._lock:
                self._serial += 1
                out = self.workdir / f"{self.artifact}.{self._serial}.O{opt}"
            cmd = self.build_cmd.format(**self._fields(params, sources=" ".join(paths),
                                                       artifact=shlex.quote(str(out)), opt=opt))
            try:
                proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True,
                                      timeout=self.build_timeout, cwd=d)
            except subprocess.TimeoutExpired:
                raise TimeoutError(f"build killed after {self.build_timeout:g}s") from None
            except OSError as exc:
                raise PipelineError(f"cannot start build: {exc}") from exc
            if proc.returncode or not out.exists():
                raise CompileError(proc.stderr.strip()[-500:] or f"build exited {proc.returncode}")
        return out.read_bytes(), (out, params)

    def _run(self, handle) -> FitnessRecord:
        path, params = handle
        cmd = self.run_cmd.format(**self._fields(params, artifact=shlex.quote(str(path))))
        try:
            return run_mutant(shlex.split(cmd), self._suite_path, self.limits)
        finally:
            path.unlink(missing_ok=True)


@dataclass
class CacheStats:
    lookups: int = 0
    hits: int = 0


class Evaluator:
    """Caching front end keyed by the canonical patch text.

    Readers may run concurrently; stores take the lock.
    """

    def __init__(self, pipeline: Pipeline, use_cache: bool = True):
        self.pipeline = pipeline
        self.use_cache = use_cache
        self.cache: dict[str, EvalResult] = {}
        self.stats = CacheStats()
        self._lock = threading.Lock()

    def lookup(self, patch: Patch) -> EvalResult | None:
        if not self.use_cache:
            return None
        hit = self.cache.get(patch.key)
        return None if hit is None else replace(hit, outcome="cache", origin=hit.outcome)

    def evaluate(self, patch: Patch) -> EvalResult:
        self.stats.lookups += 1
        hit = self.lookup(patch)
        if hit is not None:
            self.stats.hits += 1
            return hit
        res = self.pipeline.evaluate(patch)
        if self.use_cache:
            with self._lock:
                self.cache.setdefault(patch.key, res)
        return res

    def evaluate_many(self, patches: list[Patch], jobs: int = 1) -> list[EvalResult]:
        """Results in order, labelled as if evaluated one after another: the
        first occurrence of an unseen key is computed, later ones are hits."""
        fresh, seen = [], set()
        for p in patches:
            if (not self.use_cache or p.key not in self.cache) and p.key not in seen:
                fresh.append(p)
                seen.add(p.key)
        with ThreadPoolExecutor(max(1, jobs)) as pool:
            computed = dict(zip([p.key for p in fresh], pool.map(self.pipeline.evaluate, fresh)))
        out = []
        for p in patches:
            self.stats.lookups += 1
            if p.key in computed:
                res = computed.pop(p.key)
                if self.use_cache:
                    self.cache.setdefault(p.key, res)
                out.append(res)
            else:
                hit = self.lookup(p)
                if hit is None:  # caching off and a repeated key
                    hit = self.pipeline.evaluate(p)
                else:
                    self.stats.hits += 1
                out.append(hit)
        return out

    @property
    def hit_fraction(self) -> float:
        return self.stats.hits / self.stats.lookups if self.stats.lookups else 0.0
