"""Quantum state-preparation programs: a typed source language, a symbolic
basis-ket interpreter, property-based validation of program specs, and a
compiler to plain OpenQASM 2.0 circuits.

The pipeline, in dependency order: `parse` text into `lang` syntax trees,
`typecheck` flow-sensitively over qubit records, execute with `interp`,
validate specs statistically with `validate`, cross-check small instances
against the `dense` reference semantics, and lower through `oracles` /
`oqasm` arithmetic into gates with `compiler`. `programs` packages the
case studies; `cli` fronts everything.
"""

from .core import (Amplitude, Angle, BasisKet, Ket, KindEnv, QsvError,
                   QubitId, QubitRecord, Rot, SymbolicState, TypeEnv,
                   amplitude_eval, register)
from .lang import LangError, Program, SourceFile, desugar
from .parse import PqSyntaxError, parse, parse_program
from .typecheck import PqTypeError, type_program
from .interp import Rng, RunTrace, run, step_program
from .specs import SpecError, eval_spec, parse_spec
from .validate import (ValidationReport, estimate_success_rate, run_trial,
                       split_program, validate, wilson_interval)
from .dense import (simulate_circuit, simulate_pqasm_dense, states_close,
                    outcome_distribution)
from .compiler import (Circuit, CompileError, Gate, emit_openqasm,
                       gate_stats, translate)
from .programs import BUILDERS, CaseStudy, default_case_studies

__version__ = "0.1.0"

__all__ = [
    "Amplitude", "Angle", "BasisKet", "Ket", "KindEnv", "QsvError",
    "QubitId", "QubitRecord", "Rot", "SymbolicState", "TypeEnv",
    "amplitude_eval", "register",
    "LangError", "Program", "SourceFile", "desugar",
    "PqSyntaxError", "parse", "parse_program",
    "PqTypeError", "type_program",
    "Rng", "RunTrace", "run", "step_program",
    "SpecError", "eval_spec", "parse_spec",
    "ValidationReport", "estimate_success_rate", "run_trial",
    "split_program", "validate", "wilson_interval",
    "simulate_circuit", "simulate_pqasm_dense", "states_close",
    "outcome_distribution",
    "Circuit", "CompileError", "Gate", "emit_openqasm", "gate_stats",
    "translate",
    "BUILDERS", "CaseStudy", "default_case_studies",
    "__version__",
]
