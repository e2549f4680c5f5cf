"""Stand-alone toy compiler and runner, for driving the toy language through
external build and run commands.

    python -m lgpgi.gi.toy build SRC... -o OUT [-O 0|3] [-D NAME=VALUE]
    python -m lgpgi.gi.toy run ARTIFACT SUITE

``build`` exits 1 with a diagnostic on a compile error.  ``run`` follows
the harness child contract.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..harness.child import serve
from ..harness.sandbox import COST_CAP
from .toycc import build
from .toylang import CompileError, parse_int
from .toyrt import toy_runner


def _define(text: str):
    name, _, value = text.partition("=")
    return name, parse_int(value or "1")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lgpgi-toy")
    sub = ap.add_subparsers(dest="cmd", required=True)
    b = sub.add_parser("build")
    b.add_argument("sources", nargs="+")
    b.add_argument("-o", "--output", required=True)
    b.add_argument("-O", dest="opt", type=int, default=3)
    b.add_argument("-D", dest="defines", action="append", type=_define, default=[])
    r = sub.add_parser("run")
    r.add_argument("artifact")
    r.add_argument("suite")
    r.add_argument("--cost-cap", type=int, default=COST_CAP)
    args = ap.parse_args(argv)

    if args.cmd == "build":
        src = "\n".join(Path(p).read_text() for p in args.sources)
        try:
            artifact = build(src, args.opt, dict(args.defines)).artifact
        except CompileError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        Path(args.output).write_text(artifact)
        return 0

    code = compile(Path(args.artifact).read_text(), args.artifact, "exec")
    serve(args.suite, lambda: toy_runner(code, args.cost_cap))
    return 0  # not reached


if __name__ == "__main__":
    sys.exit(main())
