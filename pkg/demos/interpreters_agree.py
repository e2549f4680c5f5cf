"""Run the scalar and vectorised interpreters side by side on a fresh suite.

    python demos/interpreters_agree.py [seed]
"""
import sys

from lgpgi import LaneWidth, default_table, expected_registers, generate_suite, interpret_batch
from lgpgi.testgen import entropy_losses

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
suite = generate_suite(seed)
table = default_table()

for i, (prog, cases) in enumerate(zip(suite.programs, suite.inputs), 1):
    print(f"program {i}:")
    for ins in prog.instructions:
        print("   ", ins)
    expect = expected_registers(prog, cases, table)
    for w in LaneWidth:
        bad = int((interpret_batch(prog, cases, table, w).regs != expect).any(axis=1).sum())
        print(f"  {w.name:>4}: {len(cases) - bad}/{len(cases)} cases match the scalar oracle")
    # how much information each instruction throws away on these inputs
    for op, loss in entropy_losses(prog, cases):
        print(f"  {op.name:<4} loses {loss:.2f} bits")
