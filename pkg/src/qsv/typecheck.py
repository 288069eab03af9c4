"""Flow-sensitive record typing for programs.

Each instruction is judged against a set of qubit records under a context
flag: C at the top level, M inside a `ctrl` body. The checker rewrites the
environment lazily: before an operation, every record its footprint touches
is merged into one (records merge freely); a rotation on a Nor qubit first
isolates that qubit by splitting its record, which is only possible when the
record holds no Had qubits.

Rules enforced here:
- mu: footprint must lie in the Had/Nor fields of one (merged) record.
- ry at flag C: a separable Nor qubit becomes Rot; an already-Rot qubit
  stays Rot (any flag). Nor rotations are not available under flag M.
- ctrl: the control must be Had or Nor typed; the body is checked with the
  control deleted from its record (so a body mentioning it is a cloning
  error) and must preserve the environment, which flag M guarantees.
- had: a separable Nor qubit becomes Had; re-hadamard is rejected.
- new: fresh per-qubit Nor records; measure deletes qubits and binds a
  classical variable; both `if` branches must produce the same environment.
- rec: types as skip (the one-step reading of a tail retry).
"""

from __future__ import annotations

from enum import Enum
from typing import Optional

from .core import KindEnv, QsvError, QubitId, QubitRecord, RecordError, SplitHadError, TypeEnv, split_record
from .lang import (CallRec, Ctrl, Had, If, Ins, Instruction, ISeq, MeasureLet, Mu, New,
                   Program, PSeq, Repeat, RyGate, Skip, const_int, instr_footprint,
                   mu_footprint, ref_qubits, ref_single)


class ErrorKind(Enum):
    NO_CLONING = "no_cloning"
    DOUBLE_HADAMARD = "double_hadamard"
    RY_ON_WRONG_TYPE = "ry_on_wrong_type"
    MU_ON_ROT_QUBIT = "mu_on_rot_qubit"
    UNBOUND_CLASSICAL = "unbound_classical"
    BRANCH_ENV_MISMATCH = "branch_env_mismatch"
    UNKNOWN_QUBIT = "unknown_qubit"
    REDECLARED_QUBIT = "redeclared_qubit"
    MEASURED_QUBIT_REUSE = "measured_qubit_reuse"


# short rule tags for diagnostics (HT = re-hadamard, CU = cloning via ctrl, ...)
RULE_NAMES = {
    ErrorKind.NO_CLONING: "CU",
    ErrorKind.DOUBLE_HADAMARD: "HT",
    ErrorKind.RY_ON_WRONG_TYPE: "RY",
    ErrorKind.MU_ON_ROT_QUBIT: "MU",
    ErrorKind.UNBOUND_CLASSICAL: "LET",
    ErrorKind.BRANCH_ENV_MISMATCH: "IF",
    ErrorKind.UNKNOWN_QUBIT: "VAR",
    ErrorKind.REDECLARED_QUBIT: "NEW",
    ErrorKind.MEASURED_QUBIT_REUSE: "MEA",
}


class PqTypeError(QsvError):
    def __init__(self, kind: ErrorKind, msg: str) -> None:
        super().__init__(f"rule {RULE_NAMES[kind]} ({kind.value}): {msg}")
        self.kind = kind


class ContextFlag(Enum):
    C = "C"  # top level
    M = "M"  # inside a ctrl body


class Context:
    """Mutable checking state threaded through a program."""

    __slots__ = ("env", "kinds", "classical")

    def __init__(self, env: Optional[TypeEnv] = None, kinds: Optional[KindEnv] = None,
                 classical: Optional[set[str]] = None) -> None:
        self.env = env or TypeEnv()
        self.kinds = kinds or KindEnv()
        self.classical = classical if classical is not None else set()

    def copy(self) -> "Context":
        return Context(self.env.copy(), self.kinds.copy(), set(self.classical))

    def sizes(self) -> dict[str, int]:
        return self.kinds.sizes


def _check_live(ctx: Context, qs: tuple[QubitId, ...]) -> None:
    for q in qs:
        if q.name in ctx.kinds.measured:
            raise PqTypeError(ErrorKind.MEASURED_QUBIT_REUSE,
                              f"{q} was consumed by an earlier measurement")
        if ctx.env.find(q) is None:
            raise PqTypeError(ErrorKind.UNKNOWN_QUBIT, f"{q} is not bound")


def _merge_footprint(ctx: Context, qs: tuple[QubitId, ...]) -> QubitRecord:
    _check_live(ctx, qs)
    try:
        return ctx.env.merge_for(qs)
    except RecordError as e:
        raise PqTypeError(ErrorKind.UNKNOWN_QUBIT, str(e)) from e


def _isolate_nor(ctx: Context, q: QubitId, gate: str, kind: ErrorKind) -> None:
    """Split q's record so q sits alone as (0, {q}, 0); error if Had-entangled."""
    rec = ctx.env.record_of(q)
    if rec.nor == frozenset((q,)) and not rec.had and not rec.rot:
        return
    try:
        left, right = split_record(rec, frozenset((q,)))
    except SplitHadError:
        raise PqTypeError(kind,
                          f"{gate} needs {q} separable, but it shares a record "
                          f"with Had qubits {sorted(rec.had)}") from None
    ctx.env.replace([rec], [left, right])


def type_mu(ctx: Context, op, flag: ContextFlag) -> None:
    fp = mu_footprint(op, ctx.sizes())
    if not fp:
        return  # skip
    rec = _merge_footprint(ctx, fp)
    bad = [q for q in fp if q in rec.rot]
    if bad:
        raise PqTypeError(ErrorKind.MU_ON_ROT_QUBIT,
                          f"oracle footprint touches Rot qubits {bad}")


def type_ry(ctx: Context, instr: RyGate, flag: ContextFlag) -> None:
    q = ref_single(instr.q, ctx.sizes())
    _check_live(ctx, (q,))
    rec = ctx.env.record_of(q)
    kind = rec.kind_of(q)
    if kind == "rot":
        return
    if kind == "had":
        raise PqTypeError(ErrorKind.RY_ON_WRONG_TYPE, f"ry on Had-typed qubit {q}")
    if flag is ContextFlag.M:
        raise PqTypeError(ErrorKind.RY_ON_WRONG_TYPE,
                          f"ry on Nor qubit {q} is only available at the top level")
    _isolate_nor(ctx, q, "ry", ErrorKind.RY_ON_WRONG_TYPE)
    rec = ctx.env.record_of(q)
    ctx.env.replace([rec], [QubitRecord(rot=frozenset((q,)))])


def type_ctrl(ctx: Context, instr: Ctrl, flag: ContextFlag) -> None:
    c = ref_single(instr.ctrl, ctx.sizes())
    body_fp = instr_footprint(instr.body, ctx.sizes())
    if c in body_fp:
        raise PqTypeError(ErrorKind.NO_CLONING,
                          f"ctrl body mentions its own control {c}")
    rec = _merge_footprint(ctx, (c,) + body_fp)
    if c in rec.rot:
        raise PqTypeError(ErrorKind.MU_ON_ROT_QUBIT,
                          f"ctrl control {c} must be Had or Nor typed, not Rot")
    # Check the body against the record with the control deleted; flag M
    # forbids retyping, so the body preserves the environment.
    body_ctx = ctx.copy()
    body_ctx.env.replace([rec], [rec.without(frozenset((c,)))])
    type_instruction(body_ctx, instr.body, ContextFlag.M)


def type_instruction(ctx: Context, instr: Instruction, flag: ContextFlag) -> None:
    if isinstance(instr, Mu):
        type_mu(ctx, instr.op, flag)
    elif isinstance(instr, RyGate):
        type_ry(ctx, instr, flag)
    elif isinstance(instr, Ctrl):
        type_ctrl(ctx, instr, flag)
    elif isinstance(instr, ISeq):
        for item in instr.items:
            type_instruction(ctx, item, flag)
    else:
        raise QsvError(f"unknown instruction {instr!r}")


def type_statement(ctx: Context, p: Program) -> None:
    if isinstance(p, Ins):
        type_instruction(ctx, p.instr, ContextFlag.C)
    elif isinstance(p, New):
        name = p.name
        size = const_int(p.size)
        if name in ctx.kinds.measured:
            raise PqTypeError(ErrorKind.MEASURED_QUBIT_REUSE,
                              f"register {name} was measured and cannot be redeclared")
        if name in ctx.kinds.sizes:
            raise PqTypeError(ErrorKind.REDECLARED_QUBIT, f"register {name} already exists")
        ctx.kinds.declare(name, size)
        for i in range(size):
            ctx.env.add(QubitRecord(nor=frozenset((QubitId(name, i),))))
    elif isinstance(p, Had):
        for q in ref_qubits(p.ref, ctx.sizes()):
            _check_live(ctx, (q,))
            rec = ctx.env.record_of(q)
            kind = rec.kind_of(q)
            if kind == "had":
                raise PqTypeError(ErrorKind.DOUBLE_HADAMARD, f"{q} is already Had typed")
            if kind == "rot":
                raise PqTypeError(ErrorKind.RY_ON_WRONG_TYPE, f"had on Rot-typed qubit {q}")
            _isolate_nor(ctx, q, "had", ErrorKind.DOUBLE_HADAMARD)
            rec = ctx.env.record_of(q)
            ctx.env.replace([rec], [QubitRecord(had=frozenset((q,)))])
    elif isinstance(p, MeasureLet):
        if p.reg not in ctx.kinds.sizes:
            raise PqTypeError(ErrorKind.UNKNOWN_QUBIT, f"unknown register {p.reg!r}")
        qs = frozenset(ctx.kinds.qubits(p.reg))
        _check_live(ctx, tuple(sorted(qs)))
        ctx.env.delete(qs)
        ctx.kinds.measured.add(p.reg)
        ctx.classical.add(p.var)
        type_statement(ctx, p.body)
    elif isinstance(p, If):
        if p.guard.var not in ctx.classical:
            raise PqTypeError(ErrorKind.UNBOUND_CLASSICAL,
                              f"guard variable {p.guard.var!r} is not bound")
        then_ctx = ctx.copy()
        type_statement(then_ctx, p.then)
        else_ctx = ctx.copy()
        type_statement(else_ctx, p.els)
        if then_ctx.env != else_ctx.env or then_ctx.kinds != else_ctx.kinds:
            raise PqTypeError(ErrorKind.BRANCH_ENV_MISMATCH,
                              "if branches leave different environments")
        ctx.env = then_ctx.env
        ctx.kinds = then_ctx.kinds
        ctx.classical = then_ctx.classical & else_ctx.classical
    elif isinstance(p, PSeq):
        for item in p.items:
            type_statement(ctx, item)
    elif isinstance(p, CallRec):
        pass  # one-step reading: the retry marker types as skip
    elif isinstance(p, Repeat):
        raise QsvError("type checking requires a desugared program (repeat found)")
    else:
        raise QsvError(f"unknown program node {p!r}")


def type_program(p: Program) -> Context:
    """Type-check a desugared program; returns the final context."""
    ctx = Context()
    type_statement(ctx, p)
    return ctx


def had_qubits(ctx: Context) -> set[QubitId]:
    out: set[QubitId] = set()
    for rec in ctx.env:
        out |= rec.had
    return out
