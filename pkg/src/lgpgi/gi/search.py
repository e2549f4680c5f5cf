"""Local search over patches.

Warmup runs the unpatched program a few times and takes the median fitness
as the baseline.  Each step then derives one neighbour of the current patch
(append, delete or replace an edit, or change a parameter), evaluates it and
moves there if it passed and is no worse.  The edit most recently removed by
an accepted move may not be drawn again until another removal replaces it.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field

import numpy as np

from .edits import DEFAULT_KINDS, Edit, Patch, random_edit
from .pipeline import Evaluator

WARMUP = 3
WARMUP_OUTCOME = "warmup"


@dataclass
class SearchConfig:
    budget: int = 100_000  # search steps, warmup not included
    warmup: int = WARMUP
    weights: dict = field(default_factory=lambda: {k: 1.0 for k in DEFAULT_KINDS})
    values: dict = field(default_factory=dict)  # literal pools per edit kind
    delete_prob: float = 0.25
    replace_prob: float = 0.25
    param_choices: dict = field(default_factory=dict)  # name: candidate values
    param_prob: float = 0.1
    jobs: int = 1


@dataclass(frozen=True)
class Step:
    step: int  # 0 for warmup rows
    move: str  # warmup, append, delete, replace, param
    length: int
    outcome: str
    cache_hit: bool
    passed: bool
    fitness: int
    best: int
    accepted: bool = False
    status: str = ""
    target_file: str = ""  # where a new edit lands
    source_file: str = ""  # where its payload came from
    patch: str = ""


@dataclass
class SearchLog:
    steps: list = field(default_factory=list)

    def add(self, step: Step) -> None:
        self.steps.append(step)

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def outcome_counts(self) -> dict:
        counts: dict = {}
        for s in self.steps:
            counts[s.outcome] = counts.get(s.outcome, 0) + 1
        return counts


@dataclass
class SearchResult:
    best_patch: Patch
    best_fitness: int
    baseline: int
    log: SearchLog
    current: Patch = Patch()

    @property
    def improved(self) -> bool:
        return self.best_fitness < self.baseline


def _origin(edit: Edit | None) -> tuple[str, str]:
    if edit is None:
        return "", ""
    src = edit.payload.file if hasattr(edit.payload, "file") else edit.target.file
    return edit.target.file, src


class _Neighbours:
    def __init__(self, evaluator: Evaluator, config: SearchConfig, rng):
        pl = evaluator.pipeline
        self.targets = pl.targets
        self.ingredients = pl.ingredients
        self.defaults = pl.params
        self.config = config
        self.rng = rng
        self.searchable = {k: list(v) for k, v in config.param_choices.items() if len(v) > 1}

    def new_edit(self, tabu: Edit | None) -> Edit:
        while True:
            e = random_edit(self.rng, self.targets, self.ingredients,
                            self.config.weights, self.config.values)
            if e != tabu:
                return e

    def propose(self, current: Patch, tabu: Edit | None):
        """(neighbour, move, removed edit, added edit)"""
        cfg, rng = self.config, self.rng
        if self.searchable and rng.random() < cfg.param_prob:
            names = sorted(self.searchable)
            name = names[rng.integers(len(names))]
            now = current.param_dict().get(name, self.defaults.get(name))
            choices = [v for v in self.searchable[name] if v != now]
            return current.with_param(name, choices[rng.integers(len(choices))]), "param", None, None
        n = len(current)
        r = rng.random()
        if n and r < cfg.delete_prob:
            i = int(rng.integers(n))
            return current.without(i), "delete", current.edits[i], None
        if n and r < cfg.delete_prob + cfg.replace_prob:
            i = int(rng.integers(n))
            e = self.new_edit(tabu)
            return current.replace(i, e), "replace", current.edits[i], e
        e = self.new_edit(tabu)
        return current.append(e), "append", None, e


def warmup(evaluator: Evaluator, n: int, log: SearchLog) -> int:
    pl = evaluator.pipeline
    records = [pl.run_baseline() for _ in range(n)] or [pl.baseline_record()]
    fits = [r.fitness for r in records]
    baseline = statistics.median_low(fits)
    pl.set_baseline(next(r for r in records if r.fitness == baseline))
    for r in records[:n]:
        log.add(Step(0, "warmup", 0, WARMUP_OUTCOME, False, r.passed, r.fitness, baseline,
                     status=r.status.code.name))
    return baseline


def local_search(evaluator: Evaluator, config: SearchConfig | None = None,
                 rng=None, seed: int | None = None) -> SearchResult:
    config = config or SearchConfig()
    rng = rng if rng is not None else np.random.default_rng(seed)
    log = SearchLog()
    baseline = warmup(evaluator, config.warmup, log)
    nb = _Neighbours(evaluator, config, rng)
    current, cur_fit = Patch(), baseline
    best, best_fit = current, baseline
    tabu = None
    step = 0
    while step < config.budget:
        k = min(max(1, config.jobs), config.budget - step)
        proposals = [nb.propose(current, tabu) for _ in range(k)]
        results = evaluator.evaluate_many([p[0] for p in proposals], config.jobs) if k > 1 \
            else [evaluator.evaluate(proposals[0][0])]
        moved = False
        for (patch, move, removed, added), res in zip(proposals, results):
            step += 1
            accept = not moved and res.passed and res.fitness <= cur_fit
            if accept:
                moved = True
                current, cur_fit = patch, res.fitness
                if removed is not None:
                    tabu = removed
                if res.fitness < best_fit:
                    best, best_fit = patch, res.fitness
            tfile, sfile = ("params", "params") if move == "param" else _origin(added)
            log.add(Step(step, move, len(patch), res.outcome, res.outcome == "cache",
                         res.passed, res.fitness, best_fit, accept,
                         res.status.name if res.status is not None else "",
                         tfile, sfile, patch.key))
    return SearchResult(best, best_fit, baseline, log, current)

