"""Reference candidate executable: ``python -m lgpgi.harness.child SUITE``.

Builds a guarded arena, runs a built-in interpreter over the suite, writes
``key=value`` counters to ``$GI_COUNTER_FILE`` and leaves through
``os._exit`` with the harness exit code.
"""

from __future__ import annotations

import argparse
import os
import resource
import sys
import traceback

from ..lgp import default_table
from ..testgen import TestSuite
from .arena import build_arena
from .counters import resolve_provider
from .sandbox import FAULTS, Fault, die_by, format_report, reference_runner, run_suite


def _write_counters(report: dict) -> None:
    path = os.environ.get("GI_COUNTER_FILE")
    if path:
        with open(path, "w") as fh:
            fh.write(format_report(report))


def serve(suite_path, make_runner) -> None:
    """Run ``make_runner()`` over the suite in a fresh arena and exit with the
    harness code.  Never returns."""
    resource.setrlimit(resource.RLIMIT_CORE, (0, 0))
    try:
        suite = TestSuite.load(suite_path)
        provider = resolve_provider()
        arena = build_arena(suite.programs, suite.inputs, default_table())
        code, report = run_suite(arena, make_runner(), suite.expected, provider)
    except Fault as exc:
        _write_counters({"detail": str(exc)})
        die_by(exc.signum)
    except Exception:
        _write_counters({"detail": traceback.format_exc(limit=2)})
        sys.stderr.flush()
        os.abort()
    _write_counters(report)
    sys.stdout.flush()
    os._exit(int(code))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(prog="lgpgi-child")
    ap.add_argument("suite")
    ap.add_argument("--impl", choices=["batch", "scalar"], default="batch")
    ap.add_argument("--width", type=int, choices=[8, 16, 32], default=8)
    ap.add_argument("--dispatch", choices=["eq", "ge"], default="eq")
    ap.add_argument("--no-mask", action="store_true")
    ap.add_argument("--fault", choices=FAULTS)
    args = ap.parse_args(argv)
    serve(args.suite, lambda: reference_runner(args.impl, args.width, not args.no_mask,
                                               args.dispatch, args.fault))


if __name__ == "__main__":
    main()
