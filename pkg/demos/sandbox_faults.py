"""Inject each kind of memory fault into the guarded arena and show what the harness reports."""
from lgpgi.harness.sandbox import evaluate_reference
from lgpgi.testgen import fixture_suite

suite = fixture_suite()
clean = evaluate_reference(suite)
print(f"{'clean':<16} {clean.status.code.name:<22} instructions={clean.instruction_count}")
for fault in ("reg-minus-1", "past-registers", "lut-write", "program-write", "padding",
              "unused-register"):
    rec = evaluate_reference(suite, fault=fault)
    print(f"{fault:<16} {rec.status.code.name:<22} fitness={rec.fitness}")
