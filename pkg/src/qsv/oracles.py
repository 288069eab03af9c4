"""Arithmetic oracle library: classical semantics plus circuit realizations.

Every mu operation has two faces that must agree:

  * a classical function on little-endian register values, used by the
    symbolic interpreter (`classical_apply`), and
  * a reversible circuit built from the oracle sub-language, used by the
    compiler and by the agreement tests (`oracle_for`).

Circuits come as a sequence of stages. A stage regroups the same wires into
fresh variables (a wire is a (role, bit) pair; roles are the mu's registers
plus scratch registers from `ancillas`). Regrouping is what lets the
comparator borrow its own output qubit as the sign bit of a one-qubit-wider
register instead of paying for an ancilla: stage one runs a Fourier-basis
subtract over [out | x] and leaves the borrow in out, stage two re-adds the
constant over x alone to restore it. Layouts are big-endian (position 0 is
the most significant bit) because that is how the Fourier transform reads
values; the little-endian wire numbering is absorbed into the wire maps.

Stage programs contain no shift instructions, and their top-level QFT/RQFT
pairs cancel to the identity when every other top-level instruction is
skipped. `with_controls` relies on both properties: it wraps each non-QFT
top-level instruction with control qubits and leaves the transforms bare,
which is the standard way to control Fourier-basis arithmetic.

`rz_adder` is also exported stand-alone in its classic metaprogram shape
(Rev; Rev; QFT; controlled SR cascade; inverse QFT; Rev; Rev); the AddReg
oracle uses the equivalent shift-free form with the reversal folded into
the stage layout so it stays controllable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

from .core import BasisKet, QsvError, QubitId
from .lang import (AddConst, AddReg, EqConst, EqReg, LangError, LtConst,
                   LtReg, ModMult, OracleOp, Skip, const_int, ref_single)
from .oqasm import (NOR, OCU, OID, OQFT, OSR, OSeq, OX, OqasmInstr,
                    OqasmState, ORev, oqasm_exec, oqasm_invert, oseq, Pos)


class OracleError(QsvError):
    """Oracle precondition violation."""


class AliasError(OracleError):
    """The output qubit overlaps an operand register."""


class NotCoprimeError(OracleError):
    """modmul constant shares a factor with the modulus."""


class RangeError(OracleError):
    """Operand value outside the oracle's contract."""


class WidthMismatch(OracleError):
    """Register widths disagree."""


Wire = tuple[str, int]  # (role, little-endian bit index)


# ---------------------------------------------------------------------------
# The classic QFT adder metaprogram
# ---------------------------------------------------------------------------


def _rz_adder_cascade(a: str, b: str, n: int) -> list[OqasmInstr]:
    if n == 0:
        return [OID((a, 0))]
    m = n - 1
    return [OCU((a, m), OSR(m, b))] + _rz_adder_cascade(a, b, m)


def rz_adder(a: str, b: str, n: int) -> OqasmInstr:
    """|a>|b> -> |a>|(a+b) mod 2^n> on two width-n little-endian variables."""
    if n <= 0:
        raise WidthMismatch(f"adder width must be positive, got {n}")
    return oseq([ORev(a), ORev(b), OQFT(n, b)]
                + _rz_adder_cascade(a, b, n)
                + [OQFT(n, b, inv=True), ORev(b), ORev(a)])


# ---------------------------------------------------------------------------
# Stage plumbing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleStage:
    widths: dict[str, int]
    wires: dict[str, tuple[Wire, ...]]  # variable -> wire per logical position
    prog: OqasmInstr

    def __post_init__(self) -> None:
        if self.widths.keys() != self.wires.keys():
            raise OracleError("stage widths and wire maps disagree")
        for var, ws in self.wires.items():
            if len(ws) != self.widths[var]:
                raise OracleError(f"stage variable {var} has {len(ws)} wires, "
                                  f"width {self.widths[var]}")


@dataclass(frozen=True)
class OracleImpl:
    name: str
    regs: tuple[tuple[str, int], ...]      # mu-facing (role, width), footprint order
    ancillas: tuple[tuple[str, int], ...]  # scratch (role, width), |0> in and out
    stages: tuple[OracleStage, ...]
    classical: Callable[[dict[str, int]], dict[str, int]]

    def classical_fn(self, values: dict[str, int]) -> dict[str, int]:
        """Apply the classical semantics; only footprint roles change."""
        for role, w in self.regs:
            v = values[role]
            if not 0 <= v < (1 << w):
                raise RangeError(f"{self.name}: {role}={v} out of range for width {w}")
        out = dict(values)
        out.update(self.classical(values))
        return out

    def circuit_fn(self) -> tuple[OracleStage, ...]:
        return self.stages


def exec_stages(impl: OracleImpl, values: dict[str, int]) -> dict[str, int]:
    """Run the staged circuit on basis values; checks ancillas return to 0."""
    bits: dict[Wire, int] = {}
    for role, w in impl.regs:
        for i in range(w):
            bits[(role, i)] = (values[role] >> i) & 1
    for role, w in impl.ancillas:
        for i in range(w):
            bits[(role, i)] = 0
    for stage in impl.stages:
        st = OqasmState(stage.widths)
        for var, ws in stage.wires.items():
            for pos, wire in enumerate(ws):
                st.vars[var].set_bit(pos, bits[wire])
        oqasm_exec(st, stage.prog)
        for var, ws in stage.wires.items():
            if st.vars[var].basis != NOR:
                raise OracleError(f"{impl.name}: stage left {var} outside Nor")
            for pos, wire in enumerate(ws):
                bits[wire] = st.vars[var].bit(pos)
    for role, w in impl.ancillas:
        for i in range(w):
            if bits[(role, i)] != 0:
                raise OracleError(f"{impl.name}: ancilla {role}[{i}] not restored")
    return {role: sum(bits[(role, i)] << i for i in range(w))
            for role, w in impl.regs}


def with_controls(prog: OqasmInstr, controls: list[Pos]) -> OqasmInstr:
    """Control a stage program: wrap everything except the QFT/RQFT frame."""
    if not controls:
        return prog
    items = prog.items if isinstance(prog, OSeq) else (prog,)
    out: list[OqasmInstr] = []
    for it in items:
        if isinstance(it, OQFT):
            out.append(it)
        else:
            for p in reversed(controls):
                it = OCU(p, it)
            out.append(it)
    return oseq(out)


# ---------------------------------------------------------------------------
# Layout and phase-arithmetic helpers
# ---------------------------------------------------------------------------


def _big_endian(role: str, width: int) -> tuple[Wire, ...]:
    return tuple((role, width - 1 - k) for k in range(width))


def _identity(role: str, width: int) -> tuple[Wire, ...]:
    return tuple((role, k) for k in range(width))


def _phi_add(var: str, phi_n: int, c: int, neg: bool = False) -> list[OqasmInstr]:
    """Add (subtract) the constant c to a Phi(phi_n) variable's value."""
    c %= 1 << phi_n
    return [OSR(phi_n - 1 - k, var, neg) for k in reversed(range(phi_n))
            if (c >> k) & 1]


def _phi_add_reg(var: str, phi_n: int, reg: str, reg_width: int,
                 neg: bool = False) -> list[OqasmInstr]:
    """Add (subtract) a Nor register's value to a Phi variable, bit by bit."""
    out: list[OqasmInstr] = []
    for k in reversed(range(min(reg_width, phi_n))):
        out.append(OCU((reg, k), OSR(phi_n - 1 - k, var, neg)))
    return out


# ---------------------------------------------------------------------------
# Adders
# ---------------------------------------------------------------------------


def add_const_oracle(width: int, c: int) -> OracleImpl:
    stage = OracleStage(
        widths={"w": width},
        wires={"w": _big_endian("t", width)},
        prog=oseq([OQFT(width, "w")] + _phi_add("w", width, c)
                  + [OQFT(width, "w", inv=True)]),
    )
    def classical(vals: dict[str, int]) -> dict[str, int]:
        return {"t": (vals["t"] + c) % (1 << width)}
    return OracleImpl("add_const", (("t", width),), (), (stage,), classical)


def add_reg_oracle(width: int, addend_width: int) -> OracleImpl:
    if addend_width > width:
        raise WidthMismatch(f"addend width {addend_width} exceeds target {width}")
    stage = OracleStage(
        widths={"w": width, "a": addend_width},
        wires={"w": _big_endian("t", width), "a": _identity("a", addend_width)},
        prog=oseq([OQFT(width, "w")] + _phi_add_reg("w", width, "a", addend_width)
                  + [OQFT(width, "w", inv=True)]),
    )
    def classical(vals: dict[str, int]) -> dict[str, int]:
        return {"t": (vals["t"] + vals["a"]) % (1 << width)}
    return OracleImpl("add_reg", (("t", width), ("a", addend_width)), (),
                      (stage,), classical)


# ---------------------------------------------------------------------------
# Comparators
# ---------------------------------------------------------------------------


def _lt_stages(m: int, x: str, out: str, c: Union[int, str]) -> list[OracleStage]:
    """out ^= (x < c), x restored. c is a constant or a register role name.

    Stage 1 subtracts c from the extended register [out | x]; the borrow
    lands in out. Stage 2 adds c mod 2^m back over x alone.
    """
    v_wires = ((out, 0),) + _big_endian(x, m)
    if isinstance(c, int):
        if not 0 <= c <= (1 << m):
            raise RangeError(f"comparator constant {c} out of range for width {m}")
        s1 = OracleStage(
            widths={"v": m + 1},
            wires={"v": v_wires},
            prog=oseq([OQFT(m + 1, "v")] + _phi_add("v", m + 1, c, neg=True)
                      + [OQFT(m + 1, "v", inv=True)]),
        )
        s2 = OracleStage(
            widths={"w": m},
            wires={"w": _big_endian(x, m)},
            prog=oseq([OQFT(m, "w")] + _phi_add("w", m, c)
                      + [OQFT(m, "w", inv=True)]),
        )
    else:
        s1 = OracleStage(
            widths={"v": m + 1, "y": m},
            wires={"v": v_wires, "y": _identity(c, m)},
            prog=oseq([OQFT(m + 1, "v")] + _phi_add_reg("v", m + 1, "y", m, neg=True)
                      + [OQFT(m + 1, "v", inv=True)]),
        )
        s2 = OracleStage(
            widths={"w": m, "y": m},
            wires={"w": _big_endian(x, m), "y": _identity(c, m)},
            prog=oseq([OQFT(m, "w")] + _phi_add_reg("w", m, "y", m)
                      + [OQFT(m, "w", inv=True)]),
        )
    return [s1, s2]


def comparator_lt_const(width: int, c: int) -> OracleImpl:
    stages = _lt_stages(width, "x", "out", c)
    def classical(vals: dict[str, int]) -> dict[str, int]:
        return {"out": vals["out"] ^ (1 if vals["x"] < c else 0)}
    return OracleImpl("lt_const", (("x", width), ("out", 1)), (),
                      tuple(stages), classical)


def comparator_lt_reg(width: int) -> OracleImpl:
    stages = _lt_stages(width, "x", "out", "y")
    def classical(vals: dict[str, int]) -> dict[str, int]:
        return {"out": vals["out"] ^ (1 if vals["x"] < vals["y"] else 0)}
    return OracleImpl("lt_reg", (("x", width), ("y", width), ("out", 1)), (),
                      tuple(stages), classical)


def comparator_eq_const(width: int, c: int) -> OracleImpl:
    if not 0 <= c < (1 << width):
        raise RangeError(f"comparator constant {c} out of range for width {width}")
    # x == c  iff  (x < c) xor (x < c+1)
    stages = _lt_stages(width, "x", "out", c) + _lt_stages(width, "x", "out", c + 1)
    def classical(vals: dict[str, int]) -> dict[str, int]:
        return {"out": vals["out"] ^ (1 if vals["x"] == c else 0)}
    return OracleImpl("eq_const", (("x", width), ("out", 1)), (),
                      tuple(stages), classical)


def comparator_eq_reg(width: int) -> OracleImpl:
    # x == y  iff  not ((x < y) xor (y < x))
    stages = _lt_stages(width, "x", "out", "y") + _lt_stages(width, "y", "out", "x")
    stages.append(OracleStage(widths={"o": 1}, wires={"o": (("out", 0),)},
                              prog=OX(("o", 0))))
    def classical(vals: dict[str, int]) -> dict[str, int]:
        return {"out": vals["out"] ^ (1 if vals["x"] == vals["y"] else 0)}
    return OracleImpl("eq_reg", (("x", width), ("y", width), ("out", 1)), (),
                      tuple(stages), classical)


# ---------------------------------------------------------------------------
# Modular multiplication
# ---------------------------------------------------------------------------


def _mod_add_block(x: str, k: int, s: str, t: str, a: int, N: int,
                   m: int) -> list[OqasmInstr]:
    """s <- (s + a) mod N when x's bit k is set, via the borrow-flag scheme.

    s is a width m+1 Phi-capable register with position 0 the sign bit; t is
    the one-qubit borrow flag. Runs correctly (as the identity on s, t) when
    the control bit is clear.
    """
    n1 = m + 1
    msb: Pos = (s, 0)
    return (
        [OQFT(n1, s),
         OCU((x, k), oseq(_phi_add(s, n1, a)))]
        + _phi_add(s, n1, N, neg=True)
        + [OQFT(n1, s, inv=True),
           OCU(msb, OX((t, 0))),
           OQFT(n1, s),
           OCU((t, 0), oseq(_phi_add(s, n1, N))),
           OCU((x, k), oseq(_phi_add(s, n1, a, neg=True))),
           OQFT(n1, s, inv=True),
           OX(msb),
           OCU(msb, OX((t, 0))),
           OX(msb),
           OQFT(n1, s),
           OCU((x, k), oseq(_phi_add(s, n1, a))),
           OQFT(n1, s, inv=True)]
    )


def _cmult(x: str, s: str, t: str, c: int, N: int, m: int) -> OqasmInstr:
    """s <- (s + c * x) mod N, controlled bit by bit on x."""
    blocks: list[OqasmInstr] = []
    for k in range(m):
        blocks.extend(_mod_add_block(x, k, s, t, (c << k) % N, N, m))
    return oseq(blocks)


def mod_mult_oracle(width: int, c: int, N: int) -> OracleImpl:
    if N < 2 or N > (1 << width):
        raise RangeError(f"modulus {N} out of range for width {width}")
    c %= N
    if math.gcd(c, N) != 1:
        raise NotCoprimeError(f"gcd({c}, {N}) != 1")
    m = width
    c_inv = pow(c, -1, N)
    swap: list[OqasmInstr] = []
    for i in range(m):
        spos: Pos = ("s", m - i)
        swap += [OCU(("x", i), OX(spos)), OCU(spos, OX(("x", i))),
                 OCU(("x", i), OX(spos))]
    prog = oseq([_cmult("x", "s", "t", c, N, m)] + swap
                + [oqasm_invert(_cmult("x", "s", "t", c_inv, N, m))])
    stage = OracleStage(
        widths={"x": m, "s": m + 1, "t": 1},
        wires={"x": _identity("x", m), "s": _big_endian("s", m + 1),
               "t": (("t", 0),)},
        prog=prog,
    )
    def classical(vals: dict[str, int]) -> dict[str, int]:
        if vals["x"] >= N:
            raise RangeError(f"modmul input {vals['x']} >= modulus {N}")
        return {"x": (c * vals["x"]) % N}
    return OracleImpl("mod_mult", (("x", m),), (("s", m + 1), ("t", 1)),
                      (stage,), classical)


# ---------------------------------------------------------------------------
# Binding mu operations to oracles
# ---------------------------------------------------------------------------


def oracle_for(op: OracleOp, sizes: dict[str, int]):
    """Map a desugared mu onto (impl, role -> little-endian qubit list)."""
    def reg(name: str) -> list[QubitId]:
        if name not in sizes:
            raise LangError(f"unknown register {name!r}")
        return [QubitId(name, i) for i in range(sizes[name])]

    if isinstance(op, Skip):
        return None, {}
    if isinstance(op, AddConst):
        w = sizes[op.target]
        return add_const_oracle(w, const_int(op.const) % (1 << w)), {"t": reg(op.target)}
    if isinstance(op, AddReg):
        return (add_reg_oracle(sizes[op.target], sizes[op.addend]),
                {"t": reg(op.target), "a": reg(op.addend)})
    if isinstance(op, ModMult):
        return (mod_mult_oracle(sizes[op.target], const_int(op.const),
                                const_int(op.modulus)),
                {"x": reg(op.target)})
    if isinstance(op, (LtConst, EqConst)):
        out = ref_single(op.out, sizes)
        left = reg(op.left)
        if out in left:
            raise AliasError(f"output {out!r} lies inside operand {op.left!r}")
        w = sizes[op.left]
        c = const_int(op.const)
        if isinstance(op, LtConst):
            if not 0 <= c <= (1 << w):
                raise RangeError(f"comparison constant {c} out of range")
            impl = comparator_lt_const(w, c)
        else:
            impl = comparator_eq_const(w, c)
        return impl, {"x": left, "out": [out]}
    if isinstance(op, (LtReg, EqReg)):
        out = ref_single(op.out, sizes)
        left, right = reg(op.left), reg(op.right)
        if sizes[op.left] != sizes[op.right]:
            raise WidthMismatch(f"{op.left} and {op.right} have different widths")
        if out in left or out in right:
            raise AliasError(f"output {out!r} lies inside an operand register")
        if op.left == op.right:
            raise AliasError("comparison operands must be distinct registers")
        impl = (comparator_lt_reg if isinstance(op, LtReg)
                else comparator_eq_reg)(sizes[op.left])
        return impl, {"x": left, "y": right, "out": [out]}
    raise LangError(f"unknown oracle op {op!r}")


def classical_apply(op: OracleOp, ket: BasisKet, sizes: dict[str, int]) -> None:
    """Fast path used by the interpreter: integer math straight on the ket."""
    if isinstance(op, Skip):
        return
    if isinstance(op, AddConst):
        w = sizes[op.target]
        qs = [QubitId(op.target, i) for i in range(w)]
        ket.write_value(qs, (ket.read_value(qs) + const_int(op.const)) % (1 << w))
        return
    if isinstance(op, AddReg):
        w = sizes[op.target]
        tgt = [QubitId(op.target, i) for i in range(w)]
        add = [QubitId(op.addend, i) for i in range(sizes[op.addend])]
        ket.write_value(tgt, (ket.read_value(tgt) + ket.read_value(add)) % (1 << w))
        return
    if isinstance(op, ModMult):
        c, N = const_int(op.const), const_int(op.modulus)
        if N < 2:
            raise RangeError(f"modulus {N} must be at least 2")
        if math.gcd(c % N, N) != 1:
            raise NotCoprimeError(f"gcd({c}, {N}) != 1")
        qs = [QubitId(op.target, i) for i in range(sizes[op.target])]
        v = ket.read_value(qs)
        if v >= N:
            raise RangeError(f"modmul input {v} >= modulus {N}")
        ket.write_value(qs, (c * v) % N)
        return
    if isinstance(op, (LtConst, EqConst, LtReg, EqReg)):
        out = ref_single(op.out, sizes)
        left = [QubitId(op.left, i) for i in range(sizes[op.left])]
        if out in left:
            raise AliasError(f"output {out!r} lies inside operand {op.left!r}")
        lv = ket.read_value(left)
        if isinstance(op, (LtConst, EqConst)):
            rv = const_int(op.const)
        else:
            if sizes[op.left] != sizes[op.right]:
                raise WidthMismatch(f"{op.left} and {op.right} have different widths")
            right = [QubitId(op.right, i) for i in range(sizes[op.right])]
            if out in right or op.left == op.right:
                raise AliasError("comparison operands alias the output or each other")
            rv = ket.read_value(right)
        hit = lv < rv if isinstance(op, (LtConst, LtReg)) else lv == rv
        if hit:
            ket.write_value([out], 1 - ket.read_value([out]))
        return
    raise LangError(f"unknown oracle op {op!r}")
