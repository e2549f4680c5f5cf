"""Command line front end.

Exit status: 0 success, 1 verification failure, 2 usage or input error,
3 environment problem (counters or page protection unavailable).
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from .batch import LaneWidth, interpret_batch, model_instruction_count
from .gi.edits import Patch, apply_patch, parse_patch
from .gi.pipeline import PipelineError
from .gi.report import log_table, write_csv, write_report
from .gi.scenario import ScenarioError, load_scenario
from .gi.search import SearchLog, Step, local_search
from .harness.arena import ArenaSetupError
from .harness.counters import InstructionCounter, resolve_provider
from .lgp import default_table, interpret_scalar
from .testgen import TestSuite, fixture_suite, generate_suite, trace_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ENV = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _suite(path) -> TestSuite:
    if path is None:
        return fixture_suite()
    try:
        return TestSuite.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read suite: {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"malformed suite {path}: {exc}") from exc


def _run_impl(suite: TestSuite, impl: str, width: int) -> list[np.ndarray]:
    table = default_table()
    out = []
    for prog, cases in zip(suite.programs, suite.inputs):
        if impl == "batch":
            out.append(interpret_batch(prog, cases, table, LaneWidth(width)).regs)
        else:
            cols = [interpret_scalar(prog, (int(x), int(y)), table).regs for x, y in cases]
            out.append(np.array(cols, dtype=np.uint8).T)
    return out


def cmd_gen_suite(args) -> int:
    suite = generate_suite(args.seed, args.programs, args.cases)
    suite.save(args.out)
    print(f"wrote {args.out}: {len(suite.programs)} programs, {suite.n_pairs} input pairs")
    return EXIT_OK


def cmd_interpret(args) -> int:
    suite = _suite(args.suite)
    regs = _run_impl(suite, args.impl, args.width)
    for i, (prog, r) in enumerate(zip(suite.programs, regs), start=1):
        print(f"program {i} R{prog.output_reg}: " + " ".join(str(int(v)) for v in r[prog.output_reg]))
    if args.trace:
        Path(args.trace).write_text(trace_suite(suite).histogram_csv())
        ent = Path(args.trace).with_suffix(".entropy.csv")
        ent.write_text(trace_suite(suite).entropy_csv())
        print(f"trace: {args.trace} {ent}")
    if args.compare:
        other = "scalar" if args.impl == "batch" else "batch"
        ref = _run_impl(suite, other, args.width)
        bad = sum(int((a != b).sum()) for a, b in zip(regs, ref))
        print(f"compare {args.impl} vs {other}: {bad} mismatching register bytes")
        return EXIT_OK if bad == 0 else EXIT_FAIL
    return EXIT_OK


def cmd_bench(args) -> int:
    suite = _suite(args.suite)
    provider = resolve_provider(args.counter)
    count = None
    t0 = time.perf_counter()
    if provider == "hw":
        with InstructionCounter() as ctr:
            for _ in range(args.repeat):
                _run_impl(suite, args.impl, args.width)
        count = ctr.count / args.repeat
    else:
        for _ in range(args.repeat):
            _run_impl(suite, args.impl, args.width)
        count = model_instruction_count(suite.programs, LaneWidth(args.width))
    wall = (time.perf_counter() - t0) / args.repeat
    n_instr = sum(len(p) for p in suite.programs) / len(suite.programs)
    cases = len(suite.inputs[0])
    gp_ops = len(suite.programs) * n_instr * cases
    clock = args.clock_ghz * 1e9
    print(f"impl={args.impl} width={args.width} repeat={args.repeat}")
    print(f"wall: {wall * 1e3:.3f} ms per suite, {gp_ops / wall:.4g} GP ops/s")
    print(f"instructions ({provider}): {count:.0f} per suite")
    print(f"GP operations per second at {args.clock_ghz:g} GHz ({provider}): "
          f"{gp_ops * clock / count:.4g}")
    return EXIT_OK


def _scenario(args):
    sc = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        sc.seed = args.seed
    if getattr(args, "budget", None) is not None:
        sc.search.budget = args.budget
    if getattr(args, "jobs", None) is not None:
        sc.search.jobs = args.jobs
    if getattr(args, "sandbox", None):
        sc.sandbox = args.sandbox
    return sc


def _patch(text_or_path: str) -> Patch:
    p = Path(text_or_path)
    text = p.read_text() if text_or_path and p.is_file() else text_or_path
    try:
        return parse_patch(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_search(args) -> int:
    sc = _scenario(args)
    ev = sc.evaluator()
    res = local_search(ev, sc.search, seed=sc.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "best.patch").write_text(str(res.best_patch) + "\n")
    write_csv(out / "log.csv", log_table(res.log))
    files = [t.file for t in ev.pipeline.targets + ev.pipeline.ingredients]
    if sc.search.param_choices and any(len(v) > 1 for v in sc.search.param_choices.values()):
        files.append("params")
    write_report(res.log, out, files)
    counts = res.log.outcome_counts()
    print(f"baseline {res.baseline}  best {res.best_fitness}  steps {sc.search.budget}"
          f"  warmup {sc.search.warmup}  cache hits {counts.get('cache', 0)}")
    print(f"best patch ({len(res.best_patch)} edits): {res.best_patch}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_apply_patch(args) -> int:
    sc = _scenario(args)
    targets, ingredients = sc.trees()
    trees = {t.file: t for t in targets + ingredients}
    patch = _patch(args.patch)
    out_trees, flags = apply_patch(trees, patch)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t in targets:
        new = out_trees[t.file]
        (out / t.file.removesuffix(".xml")).write_text(new.render())
        (out / t.file).write_text(new.to_xml())
    for e, ok in zip(patch.edits, flags):
        print(f"{'applied' if ok else 'skipped'}: {e}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    sc = _scenario(args)
    pl = sc.build_pipeline()
    patch = _patch(args.patch)
    base = pl.baseline_record()
    res = pl.evaluate(patch, reject_unchanged=False)
    delta = res.fitness - base.fitness
    status = res.status.name if res.status is not None else "-"
    print(f"outcome {res.outcome}  status {status}  fitness {res.fitness}  "
          f"baseline {base.fitness}  delta {delta:+d}")
    if res.detail:
        print(f"detail: {res.detail}")
    return EXIT_OK if res.passed else EXIT_FAIL


def _read_log(path) -> SearchLog:
    log = SearchLog()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            log.add(Step(int(row["step"]), row["move"], int(row["length"]), row["outcome"],
                         row["cache_hit"] == "1", row["passed"] == "1", int(row["fitness"]),
                         int(row["best"]), row["accepted"] == "1", row["status"],
                         row["target_file"], row["source_file"], row["patch"]))
    return log


def cmd_report(args) -> int:
    try:
        log = _read_log(args.log)
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read log: {exc}") from exc
    paths = write_report(log, args.out, window=args.window)
    for p in paths.values():
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lgpgi", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-suite", help="generate a random test suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--programs", type=int, default=4)
    p.add_argument("--cases", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_suite)

    p = sub.add_parser("interpret", help="run the interpreters over a suite")
    p.add_argument("--suite", help="suite file (default: packaged fixture)")
    p.add_argument("--width", type=int, choices=[8, 16, 32], default=8)
    p.add_argument("--impl", choices=["scalar", "batch"], default="batch")
    p.add_argument("--compare", action="store_true", help="check against the other impl")
    p.add_argument("--trace", help="write value histograms here (entropy alongside)")
    p.set_defaults(func=cmd_interpret)

    p = sub.add_parser("bench", help="throughput of an interpreter")
    p.add_argument("--suite")
    p.add_argument("--width", type=int, choices=[8, 16, 32], default=8)
    p.add_argument("--impl", choices=["scalar", "batch"], default="batch")
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--counter", choices=["model", "hw", "auto"])
    p.add_argument("--clock-ghz", type=float, default=3.8)
    p.set_defaults(func=cmd_bench)

    def scenario_args(p, search=False):
        p.add_argument("--scenario", default="seeded", help="scenario file or packaged name")
        p.add_argument("--sandbox", choices=["fork", "inline"])
        if search:
            p.add_argument("--seed", type=int)
            p.add_argument("--budget", type=int)
            p.add_argument("--jobs", type=int)

    p = sub.add_parser("search", help="local search for a better patch")
    scenario_args(p, search=True)
    p.add_argument("--out", default="search-out")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("apply-patch", help="write patched sources")
    scenario_args(p)
    p.add_argument("--patch", required=True, help="patch file or patch text")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_apply_patch)

    p = sub.add_parser("verify", help="build and test one patch")
    scenario_args(p)
    p.add_argument("--patch", required=True, help="patch file or patch text")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="CSV bundle from a search log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=5000)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ArenaSetupError, OSError) as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return EXIT_ENV


if __name__ == "__main__":
    sys.exit(main())
