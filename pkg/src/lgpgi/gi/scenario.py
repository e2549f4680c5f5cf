"""Scenario files: INI sections describing one improvement experiment.

    [software]  pipeline (toy|command), target_files, ingredient_files, suite
    [params]    NAME = v1 v2 ...   first value is the default; more than one
                                   lets the search change it
    [search]    budget, warmup, seed, delete_prob, replace_prob, param_prob, jobs
    [edits]     KIND = weight, and values.KIND = literal pool
    [limits]    timeout, build_timeout, cost_cap, sandbox (fork|inline)
    [fitness]   counter (model|hw|auto)
    [command]   build, run, artifact   (command pipeline only)

File names are looked up next to the scenario, then among the packaged
data files.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path

from ..harness.sandbox import COST_CAP, DEFAULT_TIMEOUT, Limits
from ..testgen import TestSuite
from .edits import kind_spec
from .pipeline import CommandPipeline, Evaluator, Pipeline, ToyPipeline
from .search import WARMUP, SearchConfig
from .toylang import parse_int
from .tree import SourceTree

DATA = files("lgpgi.data")


class ScenarioError(Exception):
    pass


def resolve_file(name: str, base: Path | None = None) -> Path:
    p = Path(name)
    if p.is_absolute():
        return p
    if base is not None and (base / p).exists():
        return base / p
    packaged = DATA / name
    if packaged.is_file():
        return Path(str(packaged))
    return (base or Path.cwd()) / p


def builtin_scenario(name: str) -> Path | None:
    for cand in (name, f"{name}.ini"):
        p = DATA / cand
        if p.is_file():
            return Path(str(p))
    return None


def _value(text: str):
    try:
        return parse_int(text)
    except ValueError:
        return text


@dataclass
class Scenario:
    path: Path | None
    pipeline: str = "toy"
    target_files: list = field(default_factory=list)
    ingredient_files: list = field(default_factory=list)
    suite: str = "table1.suite"
    params: dict = field(default_factory=dict)  # name: candidate values, first is default
    search: SearchConfig = field(default_factory=SearchConfig)
    seed: int = 0
    limits: Limits = field(default_factory=Limits)
    build_timeout: float = DEFAULT_TIMEOUT
    sandbox: str = "fork"
    stage1_run: bool = True
    command: dict = field(default_factory=dict)

    @property
    def base(self) -> Path | None:
        return self.path.parent if self.path else None

    def trees(self) -> tuple[list, list]:
        def load(names, read_only):
            out = []
            for n in names:
                path = resolve_file(n, self.base)
                if not path.exists():
                    raise ScenarioError(f"no such file: {n}")
                out.append(SourceTree.load(path, read_only=read_only, name=Path(n).name))
            return out
        return load(self.target_files, False), load(self.ingredient_files, True)

    def load_suite(self) -> TestSuite:
        path = resolve_file(self.suite, self.base)
        if not path.exists():
            raise ScenarioError(f"no such suite: {self.suite}")
        return TestSuite.load(path)

    def build_pipeline(self) -> Pipeline:
        targets, ingredients = self.trees()
        defaults = {k: v[0] for k, v in self.params.items()}
        common = dict(suite=self.load_suite(), params=defaults, limits=self.limits,
                      stage1_run=self.stage1_run)
        if self.pipeline == "toy":
            return ToyPipeline(targets, ingredients, sandbox=self.sandbox, **common)
        return CommandPipeline(targets, ingredients, build_cmd=self.command["build"],
                               run_cmd=self.command["run"],
                               artifact=self.command.get("artifact", "artifact"),
                               build_timeout=self.build_timeout, **common)

    def evaluator(self, use_cache: bool = True) -> Evaluator:
        return Evaluator(self.build_pipeline(), use_cache)


def parse_scenario(text: str, path: Path | None = None) -> Scenario:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(str(exc)) from exc
    sc = Scenario(path)
    try:
        sw = cp["software"] if cp.has_section("software") else {}
        sc.pipeline = sw.get("pipeline", "toy")
        if sc.pipeline not in ("toy", "command"):
            raise ScenarioError(f"unknown pipeline {sc.pipeline!r}")
        sc.target_files = sw.get("target_files", "").split()
        if not sc.target_files:
            raise ScenarioError("[software] target_files is required")
        sc.ingredient_files = sw.get("ingredient_files", "").split()
        sc.suite = sw.get("suite", sc.suite)

        if cp.has_section("params"):
            sc.params = {k: [_value(v) for v in cp["params"][k].split()] for k in cp["params"]}
            if any(not v for v in sc.params.values()):
                raise ScenarioError("[params] entries need at least one value")

        s = cp["search"] if cp.has_section("search") else {}
        cfg = SearchConfig(budget=int(s.get("budget", 100_000)), warmup=int(s.get("warmup", WARMUP)),
                           delete_prob=float(s.get("delete_prob", SearchConfig.delete_prob)),
                           replace_prob=float(s.get("replace_prob", SearchConfig.replace_prob)),
                           param_prob=float(s.get("param_prob", SearchConfig.param_prob)),
                           jobs=int(s.get("jobs", 1)),
                           param_choices=sc.params)
        sc.seed = int(s.get("seed", 0))
        if cfg.budget < 0 or cfg.warmup < 0:
            raise ScenarioError("budget and warmup must be non-negative")
        if cp.has_section("edits"):
            weights, values = {}, {}
            for key, val in cp["edits"].items():
                if key.startswith("values."):
                    kind = key.removeprefix("values.")
                    kind_spec(kind)
                    values[kind] = val.split()
                else:
                    kind_spec(key)
                    weights[key] = float(val)
            if weights:
                cfg.weights = weights
            cfg.values = values
        sc.search = cfg

        lim = cp["limits"] if cp.has_section("limits") else {}
        fit = cp["fitness"] if cp.has_section("fitness") else {}
        sc.limits = Limits(timeout=float(lim.get("timeout", DEFAULT_TIMEOUT)),
                           counter=fit.get("counter"),
                           cost_cap=int(lim.get("cost_cap", COST_CAP)))
        sc.build_timeout = float(lim.get("build_timeout", sc.limits.timeout))
        sc.sandbox = lim.get("sandbox", "fork")
        if sc.sandbox not in ("fork", "inline"):
            raise ScenarioError(f"unknown sandbox {sc.sandbox!r}")
        sc.stage1_run = lim.get("stage1_run", "yes").lower() in ("1", "yes", "true", "on")

        if sc.pipeline == "command":
            if not cp.has_section("command"):
                raise ScenarioError("command pipeline needs a [command] section")
            sc.command = dict(cp["command"])
            for key in ("build", "run"):
                if key not in sc.command:
                    raise ScenarioError(f"[command] {key} is required")
    except (ValueError, KeyError) as exc:
        raise ScenarioError(str(exc)) from exc
    return sc


def load_scenario(name) -> Scenario:
    """A path, or the name of a packaged scenario such as ``seeded``."""
    path = Path(name)
    if not path.exists():
        path = builtin_scenario(str(name))
        if path is None:
            raise ScenarioError(f"no such scenario: {name}")
    return parse_scenario(path.read_text(), path)

