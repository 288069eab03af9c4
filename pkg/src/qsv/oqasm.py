"""Oracle sub-language: reversible register programs with a Fourier basis.

A variable is a fixed-width tuple of qubits. Its basis is either Nor (each
qubit a classical bit with an accumulated global phase) or Phi(n) (the
variable holds an integer upsilon mod 2^n encoded in per-qubit phases:
logical position k carries upsilon / 2^(n-k) of a turn, positions >= n are
phase-free |+>). Values read big-endian over logical positions: position 0
is the most significant bit. The Phi form stores upsilon directly - the
per-qubit angles of a well-formed state are derived from it exactly, which
keeps SR and the inverse transform O(1)/O(width).

Shift instructions (Lshift/Rshift/Rev) permute logical positions through a
virtual permutation and cost no gates downstream. A controlled body must be
shift-neutral (net permutation identity) and must not touch its control.

Gate set and typing:
    ID p | X p | RZ m p | RRZ m p          Nor only (RZ adds +-1/2^m phase on |1>)
    SR m x | SRD m x                        Phi n only, m < n (adds +-2^(n-m-1) to upsilon)
    QFT n x : Nor -> Phi n  (n <= width)    RQFT n x : Phi n -> Nor
    CU p body                               control Nor, fresh, body neutral and type-preserving
    Lshift x | Rshift x | Rev x             Nor only
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from .core import Angle, QsvError, ZERO_ANGLE


class OqasmError(QsvError):
    """Ill-typed or ill-formed oracle program or state."""


Pos = tuple[str, int]  # (variable, logical position)


# ---------------------------------------------------------------------------
# Syntax
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OID:
    p: Pos


@dataclass(frozen=True)
class OX:
    p: Pos


@dataclass(frozen=True)
class ORZ:
    m: int
    p: Pos
    neg: bool = False


@dataclass(frozen=True)
class OSR:
    m: int
    x: str
    neg: bool = False


@dataclass(frozen=True)
class OQFT:
    n: int
    x: str
    inv: bool = False


@dataclass(frozen=True)
class OCU:
    p: Pos
    body: "OqasmInstr"


@dataclass(frozen=True)
class OLshift:
    x: str


@dataclass(frozen=True)
class ORshift:
    x: str


@dataclass(frozen=True)
class ORev:
    x: str


@dataclass(frozen=True)
class OSeq:
    items: tuple["OqasmInstr", ...]


OqasmInstr = Union[OID, OX, ORZ, OSR, OQFT, OCU, OLshift, ORshift, ORev, OSeq]


def oseq(items: list[OqasmInstr]) -> OqasmInstr:
    flat: list[OqasmInstr] = []
    for it in items:
        if isinstance(it, OSeq):
            flat.extend(it.items)
        else:
            flat.append(it)
    if len(flat) == 1:
        return flat[0]
    return OSeq(tuple(flat))


# ---------------------------------------------------------------------------
# Structural helpers
# ---------------------------------------------------------------------------


def touched(instr: OqasmInstr) -> set[tuple[str, Optional[int]]]:
    """Positions an instruction touches; (x, None) means the whole variable."""
    if isinstance(instr, (OID, OX, ORZ)):
        return {(instr.p[0], instr.p[1])}
    if isinstance(instr, (OSR, OQFT, OLshift, ORshift, ORev)):
        return {(instr.x, None)}
    if isinstance(instr, OCU):
        return {(instr.p[0], instr.p[1])} | touched(instr.body)
    if isinstance(instr, OSeq):
        out: set[tuple[str, Optional[int]]] = set()
        for it in instr.items:
            out |= touched(it)
        return out
    raise OqasmError(f"unknown instruction {instr!r}")


def fresh_for(p: Pos, instr: OqasmInstr) -> bool:
    """True if the body never touches control position p."""
    for var, idx in touched(instr):
        if var == p[0] and (idx is None or idx == p[1]):
            return False
    return True


def _compose_perm(base: dict[str, tuple[int, ...]], instr: OqasmInstr,
                  widths: dict[str, int]) -> None:
    def get(x: str) -> tuple[int, ...]:
        return base.get(x, tuple(range(widths[x])))

    if isinstance(instr, OLshift):
        p = get(instr.x)
        w = len(p)
        base[instr.x] = tuple(p[(k - 1) % w] for k in range(w))
    elif isinstance(instr, ORshift):
        p = get(instr.x)
        w = len(p)
        base[instr.x] = tuple(p[(k + 1) % w] for k in range(w))
    elif isinstance(instr, ORev):
        p = get(instr.x)
        base[instr.x] = tuple(reversed(p))
    elif isinstance(instr, OSeq):
        for it in instr.items:
            _compose_perm(base, it, widths)
    elif isinstance(instr, OCU):
        pass  # bodies are neutral by typing; no net permutation


def neutral(instr: OqasmInstr, widths: dict[str, int]) -> bool:
    """True if the net logical permutation of every variable is identity."""
    perms: dict[str, tuple[int, ...]] = {}
    _compose_perm(perms, instr, widths)
    return all(p == tuple(range(len(p))) for p in perms.values())


# ---------------------------------------------------------------------------
# Typing
# ---------------------------------------------------------------------------

NOR = "Nor"


def phi(n: int) -> tuple[str, int]:
    return ("Phi", n)


def oqasm_typecheck(widths: dict[str, int], instr: OqasmInstr,
                    omega: Optional[dict[str, object]] = None) -> dict[str, object]:
    """Check an oracle program; returns the final basis assignment."""
    omega = dict(omega) if omega is not None else {x: NOR for x in widths}

    def need(x: str) -> object:
        if x not in widths:
            raise OqasmError(f"unknown variable {x!r}")
        return omega[x]

    def need_pos(p: Pos) -> None:
        basis = need(p[0])
        if basis != NOR:
            raise OqasmError(f"{p} requires a Nor variable, found {basis}")
        if not 0 <= p[1] < widths[p[0]]:
            raise OqasmError(f"position {p} out of range (width {widths[p[0]]})")

    if isinstance(instr, OID):
        need(instr.p[0])
    elif isinstance(instr, (OX, ORZ)):
        need_pos(instr.p)
        if isinstance(instr, ORZ) and instr.m < 0:
            raise OqasmError(f"RZ precision must be >= 0, got {instr.m}")
    elif isinstance(instr, OSR):
        basis = need(instr.x)
        if not (isinstance(basis, tuple) and basis[0] == "Phi"):
            raise OqasmError(f"SR on {instr.x} requires a Phi variable, found {basis}")
        if not 0 <= instr.m < basis[1]:
            raise OqasmError(f"SR precision {instr.m} must be below Phi {basis[1]}")
    elif isinstance(instr, OQFT):
        basis = need(instr.x)
        if not instr.inv:
            if basis != NOR:
                raise OqasmError(f"QFT on {instr.x} requires Nor, found {basis}")
            if not 0 < instr.n <= widths[instr.x]:
                raise OqasmError(f"QFT precision {instr.n} exceeds width {widths[instr.x]}")
            omega[instr.x] = phi(instr.n)
        else:
            if basis != phi(instr.n):
                raise OqasmError(f"inverse QFT {instr.n} on {instr.x} requires Phi {instr.n}, "
                                 f"found {basis}")
            omega[instr.x] = NOR
    elif isinstance(instr, (OLshift, ORshift, ORev)):
        basis = need(instr.x)
        if basis != NOR:
            raise OqasmError(f"shift on {instr.x} requires Nor, found {basis}")
    elif isinstance(instr, OCU):
        need_pos(instr.p)
        if not fresh_for(instr.p, instr.body):
            raise OqasmError(f"controlled body touches its control {instr.p}")
        body_omega = oqasm_typecheck(widths, instr.body, omega)
        if body_omega != omega:
            raise OqasmError("controlled body must preserve every variable's basis")
        if not neutral(instr.body, widths):
            raise OqasmError("controlled body must be shift-neutral")
    elif isinstance(instr, OSeq):
        for it in instr.items:
            omega = oqasm_typecheck(widths, it, omega)
    else:
        raise OqasmError(f"unknown instruction {instr!r}")
    return omega


# ---------------------------------------------------------------------------
# State and semantics
# ---------------------------------------------------------------------------


class OVar:
    """One variable's state: physical qubits plus a virtual permutation."""

    __slots__ = ("width", "basis", "phi_n", "ups", "bits", "phases", "perm")

    def __init__(self, width: int) -> None:
        self.width = width
        self.basis = NOR
        self.phi_n = 0
        self.ups = 0
        self.bits: list[int] = [0] * width
        self.phases: list[Angle] = [ZERO_ANGLE] * width
        self.perm: tuple[int, ...] = tuple(range(width))

    def copy(self) -> "OVar":
        v = OVar.__new__(OVar)
        v.width, v.basis, v.phi_n, v.ups = self.width, self.basis, self.phi_n, self.ups
        v.bits = list(self.bits)
        v.phases = list(self.phases)
        v.perm = self.perm
        return v

    # logical accessors
    def bit(self, i: int) -> int:
        return self.bits[self.perm[i]]

    def set_bit(self, i: int, b: int) -> None:
        self.bits[self.perm[i]] = b

    def phase(self, i: int) -> Angle:
        return self.phases[self.perm[i]]

    def add_phase(self, i: int, delta: Angle) -> None:
        self.phases[self.perm[i]] = self.phases[self.perm[i]] + delta

    def local_angle(self, k: int) -> Angle:
        """Phi basis: the value phase of logical position k (derived from ups)."""
        if self.basis == NOR:
            raise OqasmError("local_angle on a Nor variable")
        return Angle(Fraction(self.ups * (1 << k), 1 << self.phi_n))

    def nor_value(self) -> int:
        v = 0
        for k in range(self.width):
            v = (v << 1) | self.bit(k)
        return v

    def set_nor_value(self, value: int) -> None:
        for k in range(self.width):
            self.set_bit(k, (value >> (self.width - 1 - k)) & 1)


class OqasmState:
    """A mapping of variables to OVars."""

    def __init__(self, widths: dict[str, int]) -> None:
        self.vars: dict[str, OVar] = {x: OVar(w) for x, w in widths.items()}

    @classmethod
    def from_values(cls, widths: dict[str, int], values: dict[str, int]) -> "OqasmState":
        st = cls(widths)
        for x, v in values.items():
            if not 0 <= v < (1 << widths[x]):
                raise OqasmError(f"value {v} out of range for {x}[{widths[x]}]")
            st.vars[x].set_nor_value(v)
        return st

    def copy(self) -> "OqasmState":
        st = OqasmState.__new__(OqasmState)
        st.vars = {x: v.copy() for x, v in self.vars.items()}
        return st

    def value(self, x: str) -> int:
        v = self.vars[x]
        if v.basis != NOR:
            raise OqasmError(f"{x} is not in the Nor basis")
        return v.nor_value()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OqasmState):
            return NotImplemented
        if self.vars.keys() != other.vars.keys():
            return False
        for x, v in self.vars.items():
            w = other.vars[x]
            if (v.basis, v.width) != (w.basis, w.width):
                return False
            if v.basis == NOR:
                if any(v.bit(k) != w.bit(k) for k in range(v.width)):
                    return False
            else:
                if (v.phi_n, v.ups) != (w.phi_n, w.ups):
                    return False
            if any(v.phase(k) != w.phase(k) for k in range(v.width)):
                return False
        return True

    def well_formed(self) -> None:
        for x, v in self.vars.items():
            if sorted(v.perm) != list(range(v.width)):
                raise OqasmError(f"{x} has a corrupt permutation")
            if v.basis == NOR:
                if any(b not in (0, 1) for b in v.bits):
                    raise OqasmError(f"{x} holds a non-bit in the Nor basis")
            else:
                if not 0 < v.phi_n <= v.width:
                    raise OqasmError(f"{x} has Phi precision {v.phi_n} out of range")
                if not 0 <= v.ups < (1 << v.phi_n):
                    raise OqasmError(f"{x} has upsilon {v.ups} out of range")


def oqasm_exec(state: OqasmState, instr: OqasmInstr) -> None:
    """Execute in place. Raises OqasmError on basis mismatches."""
    if isinstance(instr, OID):
        return
    if isinstance(instr, OX):
        v = state.vars[instr.p[0]]
        if v.basis != NOR:
            raise OqasmError(f"X on non-Nor variable {instr.p[0]}")
        v.set_bit(instr.p[1], 1 - v.bit(instr.p[1]))
        return
    if isinstance(instr, ORZ):
        v = state.vars[instr.p[0]]
        if v.basis != NOR:
            raise OqasmError(f"RZ on non-Nor variable {instr.p[0]}")
        if v.bit(instr.p[1]) == 1:
            delta = Fraction(1, 1 << instr.m)
            v.add_phase(instr.p[1], Angle(-delta if instr.neg else delta))
        return
    if isinstance(instr, OSR):
        v = state.vars[instr.x]
        if v.basis == NOR:
            raise OqasmError(f"SR on Nor variable {instr.x}")
        if instr.m >= v.phi_n:
            raise OqasmError(f"SR precision {instr.m} out of range for Phi {v.phi_n}")
        delta = 1 << (v.phi_n - instr.m - 1)
        v.ups = (v.ups - delta if instr.neg else v.ups + delta) % (1 << v.phi_n)
        return
    if isinstance(instr, OQFT):
        v = state.vars[instr.x]
        if not instr.inv:
            if v.basis != NOR:
                raise OqasmError(f"QFT on non-Nor variable {instr.x}")
            y = v.nor_value()
            v.basis = "Phi"
            v.phi_n = instr.n
            v.ups = y % (1 << instr.n)
        else:
            if v.basis == NOR or v.phi_n != instr.n:
                raise OqasmError(f"inverse QFT {instr.n} on {instr.x} in basis {v.basis}")
            # upsilon < 2^n fills the low-weight (late) positions; the rest are 0
            v.basis = NOR
            v.set_nor_value(v.ups)
            v.ups = 0
            v.phi_n = 0
        return
    if isinstance(instr, (OLshift, ORshift, ORev)):
        v = state.vars[instr.x]
        if v.basis != NOR:
            raise OqasmError(f"shift on non-Nor variable {instr.x}")
        w = v.width
        if isinstance(instr, OLshift):
            v.perm = tuple(v.perm[(k - 1) % w] for k in range(w))
        elif isinstance(instr, ORshift):
            v.perm = tuple(v.perm[(k + 1) % w] for k in range(w))
        else:
            v.perm = tuple(reversed(v.perm))
        return
    if isinstance(instr, OCU):
        v = state.vars[instr.p[0]]
        if v.basis != NOR:
            raise OqasmError(f"control {instr.p} is not in the Nor basis")
        if v.bit(instr.p[1]) == 1:
            oqasm_exec(state, instr.body)
        return
    if isinstance(instr, OSeq):
        for it in instr.items:
            oqasm_exec(state, it)
        return
    raise OqasmError(f"unknown instruction {instr!r}")


def oqasm_invert(instr: OqasmInstr) -> OqasmInstr:
    """Syntactic inverse: running instr then its inverse is the identity."""
    if isinstance(instr, (OID, OX)):
        return instr
    if isinstance(instr, ORZ):
        return ORZ(instr.m, instr.p, not instr.neg)
    if isinstance(instr, OSR):
        return OSR(instr.m, instr.x, not instr.neg)
    if isinstance(instr, OQFT):
        return OQFT(instr.n, instr.x, not instr.inv)
    if isinstance(instr, OCU):
        return OCU(instr.p, oqasm_invert(instr.body))
    if isinstance(instr, OLshift):
        return ORshift(instr.x)
    if isinstance(instr, ORshift):
        return OLshift(instr.x)
    if isinstance(instr, ORev):
        return instr
    if isinstance(instr, OSeq):
        return OSeq(tuple(oqasm_invert(it) for it in reversed(instr.items)))
    raise OqasmError(f"unknown instruction {instr!r}")


def instruction_count(instr: OqasmInstr) -> int:
    if isinstance(instr, OSeq):
        return sum(instruction_count(it) for it in instr.items)
    if isinstance(instr, OCU):
        return 1 + instruction_count(instr.body)
    return 1
