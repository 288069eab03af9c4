"""Translation to a flat gate-level circuit and OpenQASM 2.0 emission.

Target gates are {x, h, cx, rz, ry, measure} where rz(a) is the phase gate
diag(1, e^{2*pi*i*a}) on `a` turns and ry(a) sends |0> to cos(a)|0>+sin(a)|1>
(half the OpenQASM ry argument). Everything else is decomposed:

  * controlled ry: ry(a/2); controls-X; ry(-a/2); controls-X
  * controlled phase: the two-CX phase ladder, recursing on control count
  * multi-controlled X: Toffoli expansion below three controls, otherwise
    H-conjugated multi-controlled phase

Oracle operations splice in their staged circuits; a PQASM `ctrl` adds its
control wire to every stage instruction except the QFT/RQFT frames (the
frames cancel when the middle is skipped, so they stay uncontrolled). Shift
instructions never reach the gate list: they permute the per-variable
wire maps at compile time.

Qubit allocation is append-only. `new` maps fresh qubits to the next free
indices, measurement unmaps qubits without reusing their wires, and oracle
scratch wires live in a pool shared across instructions (scratch is always
returned to |0>, so reuse is sound). One classical register per measured
variable, named after it; branch bodies compile to `if(var==k)` gates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .core import Angle, QsvError, QubitId, register
from .lang import (CallRec, Ctrl, Had, If, Ins, ISeq, Instruction, MeasureLet,
                   Mu, New, PSeq, Program, RyGate, Skip, SKIP, const_eval,
                   const_int, ref_single)
from .oqasm import (OCU, OID, OQFT, OSR, OSeq, OX, ORZ, OLshift, ORshift,
                    ORev, OqasmInstr)
from .oracles import OracleImpl, OracleStage, oracle_for


class CompileError(QsvError):
    """Program shape the translator does not accept."""


class UnmappedQubit(CompileError):
    """A wire was needed for a qubit that is not mapped (already measured)."""


@dataclass(frozen=True)
class Gate:
    kind: str                     # x h cx rz ry measure
    qubits: tuple[int, ...]
    angle: Optional[Angle] = None
    creg: Optional[tuple[str, int]] = None   # measure target (var, bit)
    cond: Optional[tuple[str, int]] = None   # apply iff var == value


@dataclass
class Circuit:
    width: int = 0
    gates: list[Gate] = field(default_factory=list)
    cregs: list[tuple[str, int]] = field(default_factory=list)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for g in self.gates:
            out[g.kind] = out.get(g.kind, 0) + 1
        return out


class QubitMap:
    """Injective qubit-to-wire map; wires are never reused."""

    def __init__(self) -> None:
        self.mapping: dict[QubitId, int] = {}
        self.total_size = 0

    def add(self, q: QubitId) -> int:
        if q in self.mapping:
            raise CompileError(f"{q} already mapped")
        idx = self.total_size
        self.mapping[q] = idx
        self.total_size += 1
        return idx

    def alloc_raw(self) -> int:
        idx = self.total_size
        self.total_size += 1
        return idx

    def index(self, q: QubitId) -> int:
        if q not in self.mapping:
            raise UnmappedQubit(f"{q} has no wire (measured away?)")
        return self.mapping[q]

    def remove(self, qs) -> None:
        for q in qs:
            self.mapping.pop(q, None)


HALF = Angle(Fraction(1, 2))
EIGHTH = Angle(Fraction(1, 8))


class _Translator:
    def __init__(self) -> None:
        self.circ = Circuit()
        self.map = QubitMap()
        self.sizes: dict[str, int] = {}
        self.measured: set[str] = set()
        self.pool: list[int] = []  # scratch wires, |0> between instructions
        self.cond: Optional[tuple[str, int]] = None

    # -- gate emission -----------------------------------------------------

    def emit(self, kind: str, qubits: tuple[int, ...], angle: Optional[Angle] = None,
             creg: Optional[tuple[str, int]] = None) -> None:
        if angle is not None and angle.is_zero and kind == "rz":
            return
        self.circ.gates.append(Gate(kind, qubits, angle, creg, self.cond))

    def x(self, q: int) -> None:
        self.emit("x", (q,))

    def h(self, q: int) -> None:
        self.emit("h", (q,))

    def cx(self, c: int, t: int) -> None:
        self.emit("cx", (c, t))

    def rz(self, a: Angle, q: int) -> None:
        self.emit("rz", (q,), a)

    def ry(self, a: Angle, q: int) -> None:
        self.emit("ry", (q,), a)

    # -- derived gates -------------------------------------------------------

    def ccx(self, a: int, b: int, c: int) -> None:
        t, tdg = EIGHTH, -EIGHTH
        self.h(c)
        self.cx(b, c)
        self.rz(tdg, c)
        self.cx(a, c)
        self.rz(t, c)
        self.cx(b, c)
        self.rz(tdg, c)
        self.cx(a, c)
        self.rz(t, b)
        self.rz(t, c)
        self.h(c)
        self.cx(a, b)
        self.rz(t, a)
        self.rz(tdg, b)
        self.cx(a, b)

    def mcx(self, controls: list[int], t: int) -> None:
        if not controls:
            self.x(t)
        elif len(controls) == 1:
            self.cx(controls[0], t)
        elif len(controls) == 2:
            self.ccx(controls[0], controls[1], t)
        else:
            self.h(t)
            self.mcp(HALF, controls, t)
            self.h(t)

    def cp(self, theta: Angle, c: int, t: int) -> None:
        half = theta.scale(Fraction(1, 2))
        self.rz(half, c)
        self.cx(c, t)
        self.rz(-half, t)
        self.cx(c, t)
        self.rz(half, t)

    def mcp(self, theta: Angle, controls: list[int], t: int) -> None:
        if theta.is_zero:
            return
        if not controls:
            self.rz(theta, t)
        elif len(controls) == 1:
            self.cp(theta, controls[0], t)
        else:
            half = theta.scale(Fraction(1, 2))
            last, rest = controls[-1], controls[:-1]
            self.cp(half, last, t)
            self.mcx(rest, last)
            self.cp(-half, last, t)
            self.mcx(rest, last)
            self.mcp(half, rest, t)

    def mcry(self, a: Angle, controls: list[int], t: int) -> None:
        if not controls:
            self.ry(a, t)
            return
        half = a.scale(Fraction(1, 2))
        self.ry(half, t)
        self.mcx(controls, t)
        self.ry(-half, t)
        self.mcx(controls, t)

    # -- oracle lowering -----------------------------------------------------

    def scratch(self, n: int) -> list[int]:
        while len(self.pool) < n:
            self.pool.append(self.map.alloc_raw())
        return self.pool[:n]

    def lower_mu(self, op, controls: list[int]) -> None:
        if isinstance(op, Skip):
            return
        impl, binding = oracle_for(op, self.sizes)
        assert impl is not None
        wires: dict[tuple[str, int], int] = {}
        for role, qids in binding.items():
            for i, q in enumerate(qids):
                wires[(role, i)] = self.map.index(q)
        scratch_needed = sum(w for _, w in impl.ancillas)
        scratch = iter(self.scratch(scratch_needed))
        for role, w in impl.ancillas:
            for i in range(w):
                wires[(role, i)] = next(scratch)
        for stage in impl.stages:
            self.lower_stage(stage, wires, controls)

    def lower_stage(self, stage: OracleStage, wires: dict[tuple[str, int], int],
                    controls: list[int]) -> None:
        var_pos = {var: [wires[w] for w in ws] for var, ws in stage.wires.items()}
        items = stage.prog.items if isinstance(stage.prog, OSeq) else (stage.prog,)
        for it in items:
            if isinstance(it, OQFT):
                self.lower_qft(var_pos[it.x], it.inv)
            else:
                self.lower_oq(it, var_pos, controls)

    def lower_qft(self, ws: list[int], inv: bool) -> None:
        n = len(ws)
        steps: list[tuple[str, Angle, tuple[int, ...]]] = []
        for k in range(n):
            steps.append(("h", Angle(0), (ws[k],)))
            for j in range(k + 1, n):
                steps.append(("cp", Angle(Fraction(1, 1 << (j - k + 1))),
                              (ws[j], ws[k])))
        if inv:
            steps.reverse()
        for kind, a, qs in steps:
            if kind == "h":
                self.h(qs[0])
            else:
                self.cp(-a if inv else a, qs[0], qs[1])

    def lower_oq(self, it: OqasmInstr, var_pos: dict[str, list[int]],
                 controls: list[int]) -> None:
        if isinstance(it, OID):
            return
        if isinstance(it, OX):
            self.mcx(controls, var_pos[it.p[0]][it.p[1]])
            return
        if isinstance(it, ORZ):
            a = Angle(Fraction(1, 1 << it.m))
            self.mcp(-a if it.neg else a, controls, var_pos[it.p[0]][it.p[1]])
            return
        if isinstance(it, OSR):
            ws = var_pos[it.x]
            for i in range(it.m + 1):
                a = Angle(Fraction(1, 1 << (it.m - i + 1)))
                self.mcp(-a if it.neg else a, controls, ws[i])
            return
        if isinstance(it, OQFT):
            if controls:
                raise CompileError("cannot control a Fourier transform frame")
            self.lower_qft(var_pos[it.x], it.inv)
            return
        if isinstance(it, OCU):
            c = var_pos[it.p[0]][it.p[1]]
            self.lower_oq(it.body, var_pos, controls + [c])
            return
        if isinstance(it, (OLshift, ORshift, ORev)):
            if controls:
                raise CompileError("cannot control a virtual shift")
            ws = var_pos[it.x]
            w = len(ws)
            if isinstance(it, OLshift):
                var_pos[it.x] = [ws[(k - 1) % w] for k in range(w)]
            elif isinstance(it, ORshift):
                var_pos[it.x] = [ws[(k + 1) % w] for k in range(w)]
            else:
                var_pos[it.x] = list(reversed(ws))
            return
        if isinstance(it, OSeq):
            for sub in it.items:
                self.lower_oq(sub, var_pos, controls)
            return
        raise CompileError(f"cannot lower {it!r}")

    # -- PQASM statements ------------------------------------------------------

    def compile_instr(self, instr: Instruction, controls: list[int]) -> None:
        if isinstance(instr, Mu):
            self.lower_mu(instr.op, controls)
            return
        if isinstance(instr, RyGate):
            q = ref_single(instr.q, self.sizes)
            self.mcry(Angle(const_eval(instr.angle)), controls, self.map.index(q))
            return
        if isinstance(instr, Ctrl):
            c = ref_single(instr.ctrl, self.sizes)
            self.compile_instr(instr.body, controls + [self.map.index(c)])
            return
        if isinstance(instr, ISeq):
            for it in instr.items:
                self.compile_instr(it, controls)
            return
        raise CompileError(f"cannot compile instruction {instr!r}")

    def compile_program(self, p: Program) -> None:
        if isinstance(p, Ins):
            self.compile_instr(p.instr, [])
            return
        if isinstance(p, New):
            size = const_int(p.size)
            if p.name in self.sizes:
                raise CompileError(f"register {p.name} redeclared")
            self.sizes[p.name] = size
            for q in register(p.name, size):
                self.map.add(q)
            return
        if isinstance(p, Had):
            if p.ref.index is None:
                qs = register(p.ref.name, self.sizes[p.ref.name])
            else:
                qs = (ref_single(p.ref, self.sizes),)
            for q in qs:
                self.h(self.map.index(q))
            return
        if isinstance(p, MeasureLet):
            if p.reg not in self.sizes or p.reg in self.measured:
                raise CompileError(f"cannot measure register {p.reg!r}")
            if any(v == p.var for v, _ in self.circ.cregs):
                raise CompileError(f"measurement variable {p.var!r} reused")
            qs = register(p.reg, self.sizes[p.reg])
            self.circ.cregs.append((p.var, len(qs)))
            for k, q in enumerate(qs):
                self.emit("measure", (self.map.index(q),), creg=(p.var, k))
            self.map.remove(qs)
            self.measured.add(p.reg)
            self.compile_program(p.body)
            return
        if isinstance(p, If):
            if self.cond is not None:
                raise CompileError("nested classical conditions are not supported")
            var, value = p.guard.var, const_int(p.guard.value)
            width = next((w for v, w in self.circ.cregs if v == var), None)
            if width is None:
                raise CompileError(f"guard variable {var!r} was never measured")
            if p.then != SKIP:
                self.cond = (var, value)
                self.compile_program(p.then)
                self.cond = None
            if p.els != SKIP:
                if width != 1:
                    raise CompileError("else branches need a one-bit guard register")
                self.cond = (var, 1 - value)
                self.compile_program(p.els)
                self.cond = None
            return
        if isinstance(p, PSeq):
            for item in p.items:
                self.compile_program(item)
            return
        if isinstance(p, CallRec):
            # A circuit is one round of the retry loop; `rec` just ends the
            # branch and leaves the restart decision to the classical harness.
            return
        raise CompileError(f"cannot compile program node {p!r}")


def _check_rec_tail(p: Program, tail: bool) -> None:
    # `rec` compiles to "end of round", which is only faithful when nothing
    # would run after it; the source semantics restarts the whole program.
    if isinstance(p, CallRec):
        if not tail:
            raise CompileError("rec must be the last thing a round does")
        return
    if isinstance(p, PSeq):
        for k, item in enumerate(p.items):
            _check_rec_tail(item, tail and k == len(p.items) - 1)
        return
    if isinstance(p, MeasureLet):
        _check_rec_tail(p.body, tail)
        return
    if isinstance(p, If):
        _check_rec_tail(p.then, tail)
        _check_rec_tail(p.els, tail)
        return


def translate(p: Program) -> tuple[Circuit, QubitMap]:
    """Compile a desugared program to a flat circuit (one retry round)."""
    _check_rec_tail(p, True)
    tr = _Translator()
    tr.compile_program(p)
    tr.circ.width = tr.map.total_size
    return tr.circ, tr.map


# ---------------------------------------------------------------------------
# Emission and statistics
# ---------------------------------------------------------------------------


def _radians(a: Angle) -> str:
    return f"{float(a.turns) * 2.0 * math.pi:.17g}"


def emit_openqasm(c: Circuit) -> str:
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{max(c.width, 1)}];"]
    if c.cregs:
        for var, w in c.cregs:
            lines.append(f"creg {var}[{w}];")
    else:
        lines.append("creg c[1];")
    for g in c.gates:
        if g.kind == "measure":
            assert g.creg is not None
            stmt = f"measure q[{g.qubits[0]}] -> {g.creg[0]}[{g.creg[1]}];"
        elif g.kind in ("x", "h"):
            stmt = f"{g.kind} q[{g.qubits[0]}];"
        elif g.kind == "cx":
            stmt = f"cx q[{g.qubits[0]}],q[{g.qubits[1]}];"
        elif g.kind == "rz":
            assert g.angle is not None
            stmt = f"rz({_radians(g.angle)}) q[{g.qubits[0]}];"
        elif g.kind == "ry":
            # qelib1 ry(lam) rotates by lam/2, so emit 4*pi*turns directly;
            # renormalizing 2*turns mod 1 first would flip the gate's sign.
            assert g.angle is not None
            lam = f"{float(g.angle.turns) * 4.0 * math.pi:.17g}"
            stmt = f"ry({lam}) q[{g.qubits[0]}];"
        else:
            raise CompileError(f"cannot emit gate {g!r}")
        if g.cond is not None:
            stmt = f"if({g.cond[0]}=={g.cond[1]}) " + stmt
        lines.append(stmt)
    return "\n".join(lines) + "\n"


def gate_stats(c: Circuit) -> dict[str, object]:
    counts = c.counts()
    return {
        "qubit_count": c.width,
        "gate_count": sum(n for k, n in counts.items() if k != "measure"),
        "by_kind": counts,
        "measured_bits": sum(w for _, w in c.cregs),
    }
