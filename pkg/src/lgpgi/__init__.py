"""Linear GP interpreter workbench with a genetic-improvement patch search."""

from .lgp import (Instruction, Opcode, Program, DivisionTable, RegisterState,
                  apply_opcode, build_division_table, default_table, expected_registers,
                  interpret_scalar, parse_program, format_program, protected_div)
from .batch import LaneWidth, RegisterFileBatch, gather_divide, interpret_batch
from .testgen import TestSuite, generate_suite, fixture_suite

__version__ = "0.1.0"
