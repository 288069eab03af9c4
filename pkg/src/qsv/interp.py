"""Symbolic single-ket interpreter with determinized Hadamard and measurement.

Each trial tracks one basis ket. `had` draws a uniform bit per qubit and
multiplies the amplitude by 1/sqrt(2) (and by (-1)^(j*b) when the qubit held
|b>). Measurement reads the ket's definite bits: the outcome is determined
by the draws, but the renormalization factor r (the summed weight of the
surviving branch across the whole superposition) cannot be known from one
ket, so the residual amplitude is left undivided and a `pending_norm` marker
records the measurement; the validator resolves r by enumerating or sampling
draws. Rotation qubits caught by a measurement are expanded first, sampling
cos^2/sin^2 and keeping the matching trig factor on the amplitude exactly.

`step_program` mutates the state in place and returns the remaining program;
one `had` over a register counts as one step with branch label 2^-k.
Recursion markers stop a plain run (FuelExhausted): the validator replaces
them with `{}` and treats a trial that would have recursed as an unsatisfied
guard, while `run(follow_rec=True)` restarts the trial with fresh draws, the
repeat-until-success reading.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .core import (Amplitude, Angle, BasisKet, Ket, QsvError, QubitId,
                   QubitRecord, Rot, SymbolicState, register)
from .lang import (CallRec, Ctrl, Guard, Had, If, Ins, ISeq, Instruction,
                   MeasureLet, Mu, New, PSeq, Program, RyGate, SKIP,
                   const_eval, const_int, pseq, ref_single)
from .oracles import classical_apply

THREE_QUARTER = Angle(Fraction(3, 4))


class IllTypedExec(QsvError):
    """The ket disagrees with what the instruction expects (defensive)."""


class StuckError(QsvError):
    """No semantic rule applies to the configuration."""


class FuelExhausted(QsvError):
    """Step budget ran out, or a recursion marker was hit in plain mode."""


class Rng:
    """Deterministic seeded source; `sub(i)` derives independent per-trial
    streams from a master seed so parallel trials stay order-independent."""

    def __init__(self, seed: int) -> None:
        self.seed = seed
        self._r = random.Random(seed)

    def bit(self) -> int:
        return self._r.getrandbits(1)

    def random(self) -> float:
        return self._r.random()

    def sub(self, i: int) -> "Rng":
        h = hashlib.sha256(f"{self.seed}:{i}".encode()).digest()
        return Rng(int.from_bytes(h[:8], "big"))


@dataclass
class RunTrace:
    steps: list[tuple[str, object]] = field(default_factory=list)
    measurements: list[tuple[str, int, object]] = field(default_factory=list)
    final: Optional[SymbolicState] = None
    hit_rec: bool = False
    # "fail": rec raises FuelExhausted. "truncate": rec becomes `{}` and sets
    # hit_rec, the validator's one-step reading.
    rec_mode: str = "fail"

    @property
    def path_probability(self) -> float:
        p = 1.0
        for _, label in self.steps:
            if isinstance(label, Fraction):
                p *= float(label)
            elif isinstance(label, float):
                p *= label
        return p

    @property
    def path_probability_exact(self) -> Optional[Fraction]:
        p = Fraction(1)
        for _, label in self.steps:
            if isinstance(label, Fraction):
                p *= label
            elif isinstance(label, float):
                return None
        return p


# ---------------------------------------------------------------------------
# Instruction level
# ---------------------------------------------------------------------------


def _apply_ry(ket: BasisKet, q: QubitId, r: Angle) -> None:
    st = ket.qubits.get(q)
    if st is None:
        raise IllTypedExec(f"ry touches unknown qubit {q}")
    if isinstance(st, Ket):
        ket.qubits[q] = Rot(r if st.bit == 0 else THREE_QUARTER - r)
    else:
        ket.qubits[q] = Rot(st.angle + r)


def exec_instruction(instr: Instruction, state: SymbolicState) -> None:
    """Fig. 5 semantics on the state's single ket, in place."""
    if isinstance(instr, Mu):
        try:
            classical_apply(instr.op, state.ket, state.kinds.sizes)
        except QsvError as e:
            if isinstance(e, IllTypedExec):
                raise
            raise IllTypedExec(str(e)) from e
        return
    if isinstance(instr, RyGate):
        q = ref_single(instr.q, state.kinds.sizes)
        _apply_ry(state.ket, q, Angle(const_eval(instr.angle)))
        rec = state.env.find(q)
        if rec is not None and q in rec.nor:
            state.env.replace([rec], [QubitRecord(rec.had, rec.nor - {q},
                                                  rec.rot | {q})])
        return
    if isinstance(instr, Ctrl):
        c = ref_single(instr.ctrl, state.kinds.sizes)
        st = state.ket.qubits.get(c)
        if st is None or not isinstance(st, Ket):
            raise IllTypedExec(f"control {c} is not a definite bit: {st}")
        if st.bit == 1:
            exec_instruction(instr.body, state)
        return
    if isinstance(instr, ISeq):
        for it in instr.items:
            exec_instruction(it, state)
        return
    raise IllTypedExec(f"unknown instruction {instr!r}")


# ---------------------------------------------------------------------------
# Program level
# ---------------------------------------------------------------------------


def expand_rot_for_measure(ket: BasisKet, q: QubitId, rng: Rng) -> tuple[int, float]:
    """Sample a Rot qubit down to a bit just before measuring it."""
    st = ket.qubits[q]
    if not isinstance(st, Rot):
        raise IllTypedExec(f"{q} is not rotation-typed: {st}")
    p1 = st.angle.sin() ** 2
    bit = 1 if rng.random() < p1 else 0
    ket.amplitude = ket.amplitude.times_trig("sin" if bit else "cos", st.angle)
    ket.qubits[q] = Ket(bit)
    return bit, (p1 if bit else 1.0 - p1)


def _step_statement(state: SymbolicState, p: Program, rng: Rng,
                    trace: RunTrace) -> Program:
    if isinstance(p, Ins):
        exec_instruction(p.instr, state)
        trace.steps.append(("S-Ins", Fraction(1)))
        return SKIP
    if isinstance(p, New):
        size = const_int(p.size)
        state.kinds.declare(p.name, size)
        for q in register(p.name, size):
            state.env.add(QubitRecord(frozenset(), frozenset([q]), frozenset()))
            state.ket.qubits[q] = Ket(0)
        trace.steps.append(("S-New", Fraction(1)))
        return SKIP
    if isinstance(p, Had):
        qs = [QubitId(p.ref.name, i) for i in range(state.kinds.sizes[p.ref.name])] \
            if p.ref.index is None else [ref_single(p.ref, state.kinds.sizes)]
        for q in qs:
            st = state.ket.qubits.get(q)
            if st is None or not isinstance(st, Ket):
                raise IllTypedExec(f"had on {q} holding {st}")
            j = rng.bit()
            amp = state.ket.amplitude.times_inv_sqrt2()
            if j == 1 and st.bit == 1:
                amp = amp.negated()
            state.ket.amplitude = amp
            state.ket.qubits[q] = Ket(j)
            rec = state.env.record_of(q)
            state.env.replace([rec], [QubitRecord(frozenset([q]), frozenset(), frozenset()),
                                      rec.without(frozenset([q]))])
        trace.steps.append(("S-Had", Fraction(1, 2 ** len(qs))))
        return SKIP
    if isinstance(p, MeasureLet):
        if not state.kinds.live(p.reg):
            raise StuckError(f"measure of unknown or spent register {p.reg!r}")
        qs = list(state.kinds.qubits(p.reg))
        for q in qs:
            if isinstance(state.ket.qubits.get(q), Rot):
                bit, prob = expand_rot_for_measure(state.ket, q, rng)
                trace.steps.append(("S-RotBranch", prob))
        value = state.ket.read_value(qs)
        for q in qs:
            del state.ket.qubits[q]
        state.env.delete(frozenset(qs))
        state.kinds.measured.add(p.reg)
        state.sigma[p.var] = value
        state.pending_norm.append((p.var, value))
        trace.steps.append(("S-Mea", Fraction(1)))
        trace.measurements.append((p.var, value, "pending"))
        return p.body
    if isinstance(p, If):
        g: Guard = p.guard
        if g.var not in state.sigma:
            raise StuckError(f"guard variable {g.var!r} has no measured value")
        if state.sigma[g.var] == const_int(g.value):
            trace.steps.append(("S-IfT", Fraction(1)))
            return p.then
        trace.steps.append(("S-IfF", Fraction(1)))
        return p.els
    if isinstance(p, PSeq):
        head, rest = p.items[0], list(p.items[1:])
        out = _step_statement(state, head, rng, trace)
        if out != SKIP:
            rest.insert(0, out)
        return pseq(rest) if rest else SKIP
    if isinstance(p, CallRec):
        if trace.rec_mode == "truncate":
            trace.hit_rec = True
            trace.steps.append(("S-RecStop", Fraction(1)))
            return SKIP
        raise FuelExhausted("recursion marker hit; plain runs do not restart")
    raise StuckError(f"no rule for program node {p!r}")


def step_program(state: SymbolicState, p: Program, rng: Rng,
                 trace: Optional[RunTrace] = None) -> tuple[SymbolicState, Program, object]:
    """One Fig. 6 step. Mutates and returns the state; label is the branch
    probability of the random choices made in this step."""
    trace = trace if trace is not None else RunTrace()
    before = len(trace.steps)
    rest = _step_statement(state, p, rng, trace)
    label: object = Fraction(1)
    for _, lab in trace.steps[before:]:
        if isinstance(lab, float) and isinstance(label, Fraction):
            label = float(label)
        label = label * lab
    return state, rest, label


def run(p: Program, rng: Rng, fuel: int = 10 ** 6,
        state: Optional[SymbolicState] = None, check: bool = True,
        follow_rec: bool = False, rec_mode: str = "fail") -> RunTrace:
    """Iterate step_program until `{}`. Deterministic given the seed."""
    initial = state.copy() if state is not None and follow_rec else None
    state = state if state is not None else SymbolicState()
    original = p
    trace = RunTrace(rec_mode="fail" if follow_rec else rec_mode)
    budget = fuel
    while budget > 0:
        if p == SKIP:
            trace.final = state
            return trace
        try:
            state, p, _ = step_program(state, p, rng, trace)
        except FuelExhausted:
            if not follow_rec:
                trace.hit_rec = True
                raise
            trace.steps.append(("S-Rec", Fraction(1)))
            trace.measurements.clear()
            state = initial.copy() if initial is not None else SymbolicState()
            p = original
        if check:
            state.well_formed()
        budget -= 1
    raise FuelExhausted(f"no termination within {fuel} steps")
