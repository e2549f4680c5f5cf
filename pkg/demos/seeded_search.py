"""Short local search on the interpreter with redundant masks, then a diff of the best patch.

    python demos/seeded_search.py [seed] [budget]
"""
import difflib
import sys

from lgpgi.gi.scenario import load_scenario
from lgpgi.gi.search import local_search

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
budget = int(sys.argv[2]) if len(sys.argv) > 2 else 500

sc = load_scenario("seeded")
sc.search.budget = budget
res = local_search(sc.evaluator(), sc.search, seed=seed)
print(f"baseline {res.baseline}, best {res.best_fitness} after {budget} steps")
print("outcomes:", dict(res.log.outcome_counts()))
print("best patch:")
for e in res.best_patch.edits:
    print("   ", e)

pl = sc.build_pipeline()
before = pl.sources()["eval.toy.xml"]
after = pl.sources(res.best_patch)["eval.toy.xml"]
sys.stdout.writelines(difflib.unified_diff(before.splitlines(True), after.splitlines(True),
                                           "eval.toy", "eval.toy (patched)"))
