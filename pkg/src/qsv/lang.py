"""Surface language AST, desugaring, footprints, and the canonical printer.

Program layer (statements) vs instruction layer (what `ctrl` may wrap):

    e   ::= mu | ry | ctrl | new | had | let-measure | if | rec | e; e
    iota::= mu | ry(r) q | ctrl q { iota } | iota; iota
    mu  ::= {} | add(x, c) | add(x, y) | modmul(c, x, N)
          | x < c @ t | x < y @ t | x == c @ t | x == y @ t

Constant positions (array sizes, indices, mu constants, angles, repeat
bounds) hold `ConstExpr` trees so `repeat k < n { ... }` bodies can reference
the loop variable; `desugar` unrolls repeats and folds every ConstExpr to a
literal. Angles evaluate in turns; the name `pi` is bound to 1/2 (half a
turn) so `pi/8` means what it says in radians.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from .core import Angle, QsvError, QubitId


class LangError(QsvError):
    """Structural error in a program (bad constant, unresolved name)."""


# ---------------------------------------------------------------------------
# Constant expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CNum:
    value: Fraction

    def __repr__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class CVar:
    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class CBin:
    op: str  # + - * / % ^
    left: "ConstExpr"
    right: "ConstExpr"

    def __repr__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


ConstExpr = Union[CNum, CVar, CBin]


def cnum(v: Union[int, Fraction]) -> CNum:
    return CNum(Fraction(v))


def const_eval(e: ConstExpr, env: Optional[dict[str, Fraction]] = None) -> Fraction:
    env = env or {}
    if isinstance(e, CNum):
        return e.value
    if isinstance(e, CVar):
        if e.name not in env:
            raise LangError(f"unbound constant variable {e.name!r}")
        return env[e.name]
    if (e.op == "%" and isinstance(e.left, CBin) and e.left.op == "^"):
        # a^b % m without materializing a^b (b can be astronomically large)
        base = const_eval(e.left.left, env)
        exp = const_eval(e.left.right, env)
        mod = const_eval(e.right, env)
        if (base.denominator == 1 and exp.denominator == 1 and exp >= 0
                and mod.denominator == 1 and mod != 0):
            return Fraction(pow(int(base), int(exp), int(mod)))
    l, r = const_eval(e.left, env), const_eval(e.right, env)
    if e.op == "+":
        return l + r
    if e.op == "-":
        return l - r
    if e.op == "*":
        return l * r
    if e.op == "/":
        if r == 0:
            raise LangError("division by zero in constant expression")
        return l / r
    if e.op == "%":
        if r.denominator != 1 or l.denominator != 1 or r == 0:
            raise LangError(f"% needs integers, got {l} % {r}")
        return Fraction(int(l) % int(r))
    if e.op == "^":
        if r.denominator != 1 or r < 0:
            raise LangError(f"exponent must be a natural number, got {r}")
        return l ** int(r)
    raise LangError(f"unknown constant operator {e.op!r}")


def const_int(e: ConstExpr, env: Optional[dict[str, Fraction]] = None) -> int:
    v = const_eval(e, env)
    if v.denominator != 1:
        raise LangError(f"expected an integer constant, got {v}")
    return int(v)


# ---------------------------------------------------------------------------
# Qubit references
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QubitRef:
    """`name` (whole register) or `name[index]` (one qubit)."""

    name: str
    index: Optional[ConstExpr] = None

    def __repr__(self) -> str:
        return self.name if self.index is None else f"{self.name}[{self.index}]"


def qref(name: str, index: Optional[int] = None) -> QubitRef:
    return QubitRef(name, None if index is None else cnum(index))


# ---------------------------------------------------------------------------
# Oracle operations (mu)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Skip:
    """`{}`: the mu with an empty footprint."""


@dataclass(frozen=True)
class AddConst:
    target: str
    const: ConstExpr


@dataclass(frozen=True)
class AddReg:
    target: str
    addend: str


@dataclass(frozen=True)
class ModMult:
    const: ConstExpr
    target: str
    modulus: ConstExpr


@dataclass(frozen=True)
class LtConst:
    left: str
    const: ConstExpr
    out: QubitRef


@dataclass(frozen=True)
class LtReg:
    left: str
    right: str
    out: QubitRef


@dataclass(frozen=True)
class EqConst:
    left: str
    const: ConstExpr
    out: QubitRef


@dataclass(frozen=True)
class EqReg:
    left: str
    right: str
    out: QubitRef


OracleOp = Union[Skip, AddConst, AddReg, ModMult, LtConst, LtReg, EqConst, EqReg]


# ---------------------------------------------------------------------------
# Instructions (iota) and programs (e)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Mu:
    op: OracleOp


@dataclass(frozen=True)
class RyGate:
    angle: ConstExpr  # turns
    q: QubitRef


@dataclass(frozen=True)
class Ctrl:
    ctrl: QubitRef
    body: "Instruction"


@dataclass(frozen=True)
class ISeq:
    items: tuple["Instruction", ...]


Instruction = Union[Mu, RyGate, Ctrl, ISeq]


@dataclass(frozen=True)
class Ins:
    instr: Instruction


@dataclass(frozen=True)
class New:
    name: str
    size: ConstExpr


@dataclass(frozen=True)
class Had:
    ref: QubitRef


@dataclass(frozen=True)
class Guard:
    var: str
    value: ConstExpr


@dataclass(frozen=True)
class MeasureLet:
    var: str
    reg: str
    body: "Program"


@dataclass(frozen=True)
class If:
    guard: Guard
    then: "Program"
    els: "Program"


@dataclass(frozen=True)
class PSeq:
    items: tuple["Program", ...]


@dataclass(frozen=True)
class CallRec:
    """Tail self-call of the whole program (repeat-until-success retry)."""


@dataclass(frozen=True)
class Repeat:
    var: str
    count: ConstExpr
    body: "Program"


Program = Union[Ins, New, Had, MeasureLet, If, PSeq, CallRec, Repeat]


@dataclass(frozen=True)
class SourceFile:
    """A parsed .pq file: `#key value` pragmas plus the program."""

    program: Program
    meta: dict[str, str] = field(default_factory=dict, compare=False)


SKIP = Ins(Mu(Skip()))


def pseq(items: list[Program]) -> Program:
    flat: list[Program] = []
    for it in items:
        if isinstance(it, PSeq):
            flat.extend(it.items)
        else:
            flat.append(it)
    if len(flat) == 1:
        return flat[0]
    return PSeq(tuple(flat))


def iseq(items: list[Instruction]) -> Instruction:
    flat: list[Instruction] = []
    for it in items:
        if isinstance(it, ISeq):
            flat.extend(it.items)
        else:
            flat.append(it)
    if len(flat) == 1:
        return flat[0]
    return ISeq(tuple(flat))


# ---------------------------------------------------------------------------
# Desugaring: fold constants, unroll repeats
# ---------------------------------------------------------------------------


def _fold_ref(r: QubitRef, env: dict[str, Fraction]) -> QubitRef:
    if r.index is None:
        return r
    return QubitRef(r.name, cnum(const_int(r.index, env)))


def _fold_op(op: OracleOp, env: dict[str, Fraction]) -> OracleOp:
    if isinstance(op, Skip):
        return op
    if isinstance(op, AddConst):
        return AddConst(op.target, cnum(const_int(op.const, env)))
    if isinstance(op, AddReg):
        return op
    if isinstance(op, ModMult):
        return ModMult(cnum(const_int(op.const, env)), op.target,
                       cnum(const_int(op.modulus, env)))
    if isinstance(op, LtConst):
        return LtConst(op.left, cnum(const_int(op.const, env)), _fold_ref(op.out, env))
    if isinstance(op, LtReg):
        return LtReg(op.left, op.right, _fold_ref(op.out, env))
    if isinstance(op, EqConst):
        return EqConst(op.left, cnum(const_int(op.const, env)), _fold_ref(op.out, env))
    if isinstance(op, EqReg):
        return EqReg(op.left, op.right, _fold_ref(op.out, env))
    raise LangError(f"unknown oracle op {op!r}")


def _desugar_instr(i: Instruction, env: dict[str, Fraction]) -> Instruction:
    if isinstance(i, Mu):
        return Mu(_fold_op(i.op, env))
    if isinstance(i, RyGate):
        return RyGate(CNum(const_eval(i.angle, env)), _fold_ref(i.q, env))
    if isinstance(i, Ctrl):
        return Ctrl(_fold_ref(i.ctrl, env), _desugar_instr(i.body, env))
    if isinstance(i, ISeq):
        return iseq([_desugar_instr(x, env) for x in i.items])
    raise LangError(f"unknown instruction {i!r}")


def desugar(p: Program, env: Optional[dict[str, Fraction]] = None) -> Program:
    """Unroll repeats and fold every constant expression to a literal."""
    env = env or {}
    if isinstance(p, Ins):
        return Ins(_desugar_instr(p.instr, env))
    if isinstance(p, New):
        size = const_int(p.size, env)
        if size <= 0:
            raise LangError(f"register {p.name} must have positive size, got {size}")
        return New(p.name, cnum(size))
    if isinstance(p, Had):
        return Had(_fold_ref(p.ref, env))
    if isinstance(p, MeasureLet):
        return MeasureLet(p.var, p.reg, desugar(p.body, env))
    if isinstance(p, If):
        g = Guard(p.guard.var, cnum(const_int(p.guard.value, env)))
        return If(g, desugar(p.then, env), desugar(p.els, env))
    if isinstance(p, PSeq):
        return pseq([desugar(x, env) for x in p.items])
    if isinstance(p, CallRec):
        return p
    if isinstance(p, Repeat):
        n = const_int(p.count, env)
        if n < 0:
            raise LangError(f"repeat bound must be >= 0, got {n}")
        if p.var in env:
            raise LangError(f"repeat variable {p.var!r} shadows an outer one")
        steps = []
        for k in range(n):
            steps.append(desugar(p.body, {**env, p.var: Fraction(k)}))
        return pseq(steps) if steps else SKIP
    raise LangError(f"unknown program node {p!r}")


# ---------------------------------------------------------------------------
# Footprints and free variables (desugared programs)
# ---------------------------------------------------------------------------


def ref_qubits(r: QubitRef, sizes: dict[str, int]) -> tuple[QubitId, ...]:
    if r.name not in sizes:
        raise LangError(f"unknown register {r.name!r}")
    if r.index is None:
        return tuple(QubitId(r.name, i) for i in range(sizes[r.name]))
    i = const_int(r.index)
    if not 0 <= i < sizes[r.name]:
        raise LangError(f"index {i} out of range for {r.name}[{sizes[r.name]}]")
    return (QubitId(r.name, i),)


def ref_single(r: QubitRef, sizes: dict[str, int]) -> QubitId:
    qs = ref_qubits(r, sizes)
    if len(qs) != 1:
        raise LangError(f"{r!r} must name a single qubit")
    return qs[0]


def mu_footprint(op: OracleOp, sizes: dict[str, int]) -> tuple[QubitId, ...]:
    """The ordered qubits a mu reads/writes (registers little-endian, out last)."""
    def reg(name: str) -> tuple[QubitId, ...]:
        return ref_qubits(QubitRef(name, None), sizes)

    if isinstance(op, Skip):
        return ()
    if isinstance(op, AddConst):
        return reg(op.target)
    if isinstance(op, AddReg):
        return reg(op.target) + reg(op.addend)
    if isinstance(op, ModMult):
        return reg(op.target)
    if isinstance(op, (LtConst, EqConst)):
        return reg(op.left) + (ref_single(op.out, sizes),)
    if isinstance(op, (LtReg, EqReg)):
        return reg(op.left) + reg(op.right) + (ref_single(op.out, sizes),)
    raise LangError(f"unknown oracle op {op!r}")


def instr_footprint(i: Instruction, sizes: dict[str, int]) -> tuple[QubitId, ...]:
    if isinstance(i, Mu):
        return mu_footprint(i.op, sizes)
    if isinstance(i, RyGate):
        return (ref_single(i.q, sizes),)
    if isinstance(i, Ctrl):
        c = ref_single(i.ctrl, sizes)
        return (c,) + tuple(q for q in instr_footprint(i.body, sizes) if q != c)
    if isinstance(i, ISeq):
        out: list[QubitId] = []
        for x in i.items:
            for q in instr_footprint(x, sizes):
                if q not in out:
                    out.append(q)
        return tuple(out)
    raise LangError(f"unknown instruction {i!r}")


# ---------------------------------------------------------------------------
# Canonical printer
# ---------------------------------------------------------------------------


def _fmt_angle(e: ConstExpr) -> str:
    if isinstance(e, CNum):
        return f"{e.value}t"
    return f"({e})t"


def _fmt_op(op: OracleOp) -> str:
    if isinstance(op, Skip):
        return "{}"
    if isinstance(op, AddConst):
        return f"add({op.target}, {op.const})"
    if isinstance(op, AddReg):
        return f"add({op.target}, {op.addend})"
    if isinstance(op, ModMult):
        return f"modmul({op.const}, {op.target}, {op.modulus})"
    if isinstance(op, LtConst):
        return f"{op.left} < {op.const} @ {op.out}"
    if isinstance(op, LtReg):
        return f"{op.left} < {op.right} @ {op.out}"
    if isinstance(op, EqConst):
        return f"{op.left} == {op.const} @ {op.out}"
    if isinstance(op, EqReg):
        return f"{op.left} == {op.right} @ {op.out}"
    raise LangError(f"unknown oracle op {op!r}")


def _fmt_instr(i: Instruction, indent: int) -> list[str]:
    pad = "  " * indent
    if isinstance(i, Mu):
        return [pad + _fmt_op(i.op)]
    if isinstance(i, RyGate):
        return [pad + f"ry({_fmt_angle(i.angle)}) {i.q}"]
    if isinstance(i, Ctrl):
        lines = [pad + f"ctrl {i.ctrl} {{"]
        lines += _fmt_instr(i.body, indent + 1)
        lines.append(pad + "}")
        return lines
    if isinstance(i, ISeq):
        out: list[str] = []
        for x in i.items:
            out += _fmt_instr(x, indent)
        return out
    raise LangError(f"unknown instruction {i!r}")


def _fmt_program(p: Program, indent: int) -> list[str]:
    pad = "  " * indent
    if isinstance(p, Ins):
        return _fmt_instr(p.instr, indent)
    if isinstance(p, New):
        return [pad + f"new {p.name}[{p.size}]"]
    if isinstance(p, Had):
        return [pad + f"had {p.ref}"]
    if isinstance(p, MeasureLet):
        lines = [pad + f"let {p.var} = measure({p.reg}) in {{"]
        lines += _fmt_program(p.body, indent + 1)
        lines.append(pad + "}")
        return lines
    if isinstance(p, If):
        lines = [pad + f"if {p.guard.var} == {p.guard.value} {{"]
        lines += _fmt_program(p.then, indent + 1)
        lines.append(pad + "} else {")
        lines += _fmt_program(p.els, indent + 1)
        lines.append(pad + "}")
        return lines
    if isinstance(p, PSeq):
        out: list[str] = []
        for x in p.items:
            out += _fmt_program(x, indent)
        return out
    if isinstance(p, CallRec):
        return [pad + "rec"]
    if isinstance(p, Repeat):
        lines = [pad + f"repeat {p.var} < {p.count} {{"]
        lines += _fmt_program(p.body, indent + 1)
        lines.append(pad + "}")
        return lines
    raise LangError(f"unknown program node {p!r}")


def print_program(p: Program) -> str:
    return "\n".join(_fmt_program(p, 0)) + "\n"


def print_file(f: SourceFile) -> str:
    lines = [f"#{k} {v}" for k, v in f.meta.items()]
    if lines:
        lines.append("")
    return "\n".join(lines) + print_program(f.program)
