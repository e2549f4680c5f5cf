"""CSV summaries of a search log.

    outcomes.csv        evaluations per outcome class
    best_fitness.csv    best fitness after each step
    lengths.csv         mean patch length per window, passing vs failing
    runtime_status.csv  run statuses of evaluated (uncached) patches
    provenance.csv      where new edits went and where their payload came from
"""

from __future__ import annotations

import csv
from pathlib import Path

from .pipeline import OUTCOMES
from .search import WARMUP_OUTCOME, SearchLog

WINDOW = 5000
OUTCOME_ROWS = OUTCOMES + (WARMUP_OUTCOME,)
_RUN_OUTCOMES = ("runtime_error", "timeout", "all_tests_passed")


def outcome_table(log: SearchLog) -> list[list]:
    rows = [["outcome", "count"]]
    if len(log):
        counts = log.outcome_counts()
        rows += [[o, counts.get(o, 0)] for o in OUTCOME_ROWS]
        rows.append(["total", len(log)])
    return rows


def best_fitness_table(log: SearchLog) -> list[list]:
    rows = [["step", "outcome", "fitness", "best"]]
    rows += [[s.step, s.outcome, s.fitness, s.best] for s in log if s.move != "warmup"]
    return rows


def _mean(xs):
    return round(sum(xs) / len(xs), 4) if xs else ""


def length_table(log: SearchLog, window: int = WINDOW) -> list[list]:
    rows = [["window_start", "window_end", "pass_n", "pass_mean_length", "fail_n",
             "fail_mean_length", "fail_minus_pass"]]
    steps = [s for s in log if s.move != "warmup"]
    for lo in range(0, len(steps), window):
        chunk = steps[lo:lo + window]
        ok = [s.length for s in chunk if s.passed]
        bad = [s.length for s in chunk if not s.passed]
        pm, fm = _mean(ok), _mean(bad)
        diff = round(fm - pm, 4) if ok and bad else ""
        rows.append([chunk[0].step, chunk[-1].step, len(ok), pm, len(bad), fm, diff])
    return rows


def status_table(log: SearchLog) -> list[list]:
    rows = [["status", "count"]]
    counts: dict = {}
    for s in log:
        if s.outcome in _RUN_OUTCOMES and s.status:
            counts[s.status] = counts.get(s.status, 0) + 1
    rows += [[k, counts[k]] for k in sorted(counts)]
    return rows


def provenance_table(log: SearchLog, files: list[str] | None = None) -> list[list]:
    """Rows per (target, ok/err), columns per source file.  Only steps that
    introduce something new (append, replace, parameter change) count."""
    new = [s for s in log if s.target_file]
    if files is None:
        files = []
        for s in new:
            for f in (s.target_file, s.source_file):
                if f not in files:
                    files.append(f)
    rows = [["target", "result", *files, "total"]]
    targets = []
    for s in new:
        if s.target_file not in targets:
            targets.append(s.target_file)
    for t in targets:
        for result, passed in (("ok", True), ("err", False)):
            hits = [s for s in new if s.target_file == t and s.passed == passed]
            rows.append([t, result, *[sum(s.source_file == f for s in hits) for f in files],
                         len(hits)])
    return rows


def log_table(log: SearchLog) -> list[list]:
    rows = [["step", "move", "length", "outcome", "cache_hit", "passed", "fitness", "best",
             "accepted", "status", "target_file", "source_file", "patch"]]
    rows += [[s.step, s.move, s.length, s.outcome, int(s.cache_hit), int(s.passed), s.fitness,
              s.best, int(s.accepted), s.status, s.target_file, s.source_file, s.patch]
             for s in log]
    return rows


def write_csv(path, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    return path


def write_report(log: SearchLog, outdir, files: list[str] | None = None,
                 window: int = WINDOW) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tables = {
        "outcomes": outcome_table(log),
        "best_fitness": best_fitness_table(log),
        "lengths": length_table(log, window),
        "runtime_status": status_table(log),
        "provenance": provenance_table(log, files),
    }
    return {name: write_csv(outdir / f"{name}.csv", rows) for name, rows in tables.items()}
