"""Per-ket specification DSL, embedded in `.pq` files as `#spec` pragmas.

A spec is a boolean expression over one finished trial:

    in(reg)    value drawn for a register after the new/had prefix
    out(reg)   register value in the final ket (must be definite bits)
    rot(reg)   final rotation angle of a one-qubit register, in turns
    x, y, ...  measured classical variables
    ampmag2    squared magnitude of the final renormalized amplitude
               (exact enumeration mode only)
    popcount(e), modexp(c, e, N), alldistinct(e1, ..., en)

with exact rational arithmetic (+ - * / % ^), comparisons (== != < <= > >=),
an approximate comparison ~= at 1e-9, and ! && || =>. All comparisons except
~= are exact over rationals; `=>` is right-associative and binds loosest.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from .core import Ket, QsvError, QubitId, Rot, SymbolicState


class SpecError(QsvError):
    """Malformed spec, or a spec evaluated against an unsuitable trial."""


@dataclass(frozen=True)
class SNum:
    value: Fraction


@dataclass(frozen=True)
class SName:
    name: str


@dataclass(frozen=True)
class SCall:
    fn: str  # in out rot popcount modexp alldistinct
    args: tuple["SpecExpr", ...]


@dataclass(frozen=True)
class SUn:
    op: str  # ! -
    e: "SpecExpr"


@dataclass(frozen=True)
class SBin:
    op: str
    left: "SpecExpr"
    right: "SpecExpr"


SpecExpr = Union[SNum, SName, SCall, SUn, SBin]

_TOKEN = re.compile(r"\s*(=>|&&|\|\||~=|==|!=|<=|>=|[0-9]+|[A-Za-z_][A-Za-z_0-9]*"
                    r"|[()+\-*/%^<>!,])")

_FUNCS = {"in": 1, "out": 1, "rot": 1, "popcount": 1, "modexp": 3,
          "alldistinct": None}


def _tokenize(text: str) -> list[str]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise SpecError(f"bad spec syntax at {text[pos:pos+12]!r}")
        out.append(m.group(1))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, tokens: list[str]) -> None:
        self.toks = tokens
        self.i = 0

    def peek(self) -> Optional[str]:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, expect: Optional[str] = None) -> str:
        t = self.peek()
        if t is None:
            raise SpecError("spec ended unexpectedly")
        if expect is not None and t != expect:
            raise SpecError(f"expected {expect!r}, found {t!r}")
        self.i += 1
        return t

    def parse(self) -> SpecExpr:
        e = self.implies()
        if self.peek() is not None:
            raise SpecError(f"trailing tokens in spec: {self.toks[self.i:]}")
        return e

    def implies(self) -> SpecExpr:
        left = self.disj()
        if self.peek() == "=>":
            self.take()
            return SBin("=>", left, self.implies())
        return left

    def disj(self) -> SpecExpr:
        e = self.conj()
        while self.peek() == "||":
            self.take()
            e = SBin("||", e, self.conj())
        return e

    def conj(self) -> SpecExpr:
        e = self.negation()
        while self.peek() == "&&":
            self.take()
            e = SBin("&&", e, self.negation())
        return e

    def negation(self) -> SpecExpr:
        if self.peek() == "!":
            self.take()
            return SUn("!", self.negation())
        return self.comparison()

    def comparison(self) -> SpecExpr:
        e = self.additive()
        if self.peek() in ("==", "!=", "<", "<=", ">", ">=", "~="):
            op = self.take()
            return SBin(op, e, self.additive())
        return e

    def additive(self) -> SpecExpr:
        e = self.multiplicative()
        while self.peek() in ("+", "-"):
            op = self.take()
            e = SBin(op, e, self.multiplicative())
        return e

    def multiplicative(self) -> SpecExpr:
        e = self.unary()
        while self.peek() in ("*", "/", "%"):
            op = self.take()
            e = SBin(op, e, self.unary())
        return e

    def unary(self) -> SpecExpr:
        if self.peek() == "-":
            self.take()
            return SUn("-", self.unary())
        return self.power()

    def power(self) -> SpecExpr:
        e = self.atom()
        if self.peek() == "^":
            self.take()
            return SBin("^", e, self.unary())
        return e

    def atom(self) -> SpecExpr:
        t = self.take()
        if t == "(":
            e = self.implies()
            self.take(")")
            return e
        if t.isdigit():
            return SNum(Fraction(int(t)))
        if t in _FUNCS:
            self.take("(")
            args = [self.implies()]
            while self.peek() == ",":
                self.take()
                args.append(self.implies())
            self.take(")")
            arity = _FUNCS[t]
            if arity is not None and len(args) != arity:
                raise SpecError(f"{t} takes {arity} argument(s), got {len(args)}")
            if t in ("in", "out", "rot") and not isinstance(args[0], SName):
                raise SpecError(f"{t}() takes a register name")
            return SCall(t, tuple(args))
        if t == "ampmag2":
            return SName("ampmag2")
        if re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", t):
            return SName(t)
        raise SpecError(f"unexpected token {t!r} in spec")


def parse_spec(text: str) -> SpecExpr:
    return _Parser(_tokenize(text)).parse()


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class SpecContext:
    """One finished trial, as the spec sees it."""

    inputs: dict[str, int]
    sigma: dict[str, int]
    final: Optional[SymbolicState]
    norms: Optional[dict[str, Fraction]] = None  # measurement var -> exact r
    hit_rec: bool = False


Value = Union[Fraction, bool]

APPROX_TOL = 1e-9


def _num(v: Value, what: str) -> Fraction:
    if isinstance(v, bool):
        raise SpecError(f"{what} needs a number, got a boolean")
    return v


def _boolean(v: Value, what: str) -> bool:
    if not isinstance(v, bool):
        raise SpecError(f"{what} needs a boolean, got {v}")
    return v


def _register_qubits(ctx: SpecContext, name: str) -> list[QubitId]:
    st = ctx.final
    if st is None:
        raise SpecError("trial produced no final state")
    if name not in st.kinds.sizes:
        raise SpecError(f"unknown register {name!r} in spec")
    return [QubitId(name, i) for i in range(st.kinds.sizes[name])]


def eval_spec(e: SpecExpr, ctx: SpecContext) -> Value:
    if isinstance(e, SNum):
        return e.value
    if isinstance(e, SName):
        if e.name == "ampmag2":
            return _ampmag2(ctx)
        if e.name in ctx.sigma:
            return Fraction(ctx.sigma[e.name])
        raise SpecError(f"{e.name!r} is not a measured variable")
    if isinstance(e, SUn):
        if e.op == "!":
            return not _boolean(eval_spec(e.e, ctx), "!")
        return -_num(eval_spec(e.e, ctx), "unary -")
    if isinstance(e, SCall):
        return _eval_call(e, ctx)
    if isinstance(e, SBin):
        return _eval_bin(e, ctx)
    raise SpecError(f"unknown spec node {e!r}")


def _eval_call(e: SCall, ctx: SpecContext) -> Value:
    if e.fn == "in":
        name = e.args[0].name  # type: ignore[union-attr]
        if name not in ctx.inputs:
            raise SpecError(f"no input recorded for register {name!r}")
        return Fraction(ctx.inputs[name])
    if e.fn == "out":
        name = e.args[0].name  # type: ignore[union-attr]
        qs = _register_qubits(ctx, name)
        assert ctx.final is not None
        if ctx.final.kinds.live(name):
            return Fraction(ctx.final.ket.read_value(qs))
        raise SpecError(f"register {name!r} was measured; use its variable")
    if e.fn == "rot":
        name = e.args[0].name  # type: ignore[union-attr]
        qs = _register_qubits(ctx, name)
        if len(qs) != 1:
            raise SpecError(f"rot() needs a one-qubit register, {name} has {len(qs)}")
        assert ctx.final is not None
        st = ctx.final.ket.qubits.get(qs[0])
        if isinstance(st, Rot):
            return st.angle.turns
        if isinstance(st, Ket):
            return Fraction(0) if st.bit == 0 else Fraction(1, 4)
        raise SpecError(f"{name} has no final state")
    if e.fn == "popcount":
        v = _num(eval_spec(e.args[0], ctx), "popcount")
        if v.denominator != 1 or v < 0:
            raise SpecError(f"popcount needs a natural number, got {v}")
        return Fraction(bin(int(v)).count("1"))
    if e.fn == "modexp":
        c, x, n = (_num(eval_spec(a, ctx), "modexp") for a in e.args)
        if any(v.denominator != 1 for v in (c, x, n)) or n < 2 or x < 0:
            raise SpecError("modexp needs naturals with modulus >= 2")
        return Fraction(pow(int(c), int(x), int(n)))
    if e.fn == "alldistinct":
        vals = [_num(eval_spec(a, ctx), "alldistinct") for a in e.args]
        return len(set(vals)) == len(vals)
    raise SpecError(f"unknown spec function {e.fn!r}")


def _ampmag2(ctx: SpecContext) -> Fraction:
    if ctx.final is None:
        raise SpecError("trial produced no final state")
    raw = ctx.final.ket.amplitude.mag2_rational
    if raw is None:
        raise SpecError("ampmag2 is not rational here (rotation factors present)")
    if ctx.final.pending_norm:
        if ctx.norms is None:
            raise SpecError("ampmag2 needs exact enumeration to resolve measurement "
                            "normalization; run in exact mode")
        for var, _ in ctx.final.pending_norm:
            if var not in ctx.norms:
                raise SpecError(f"no exact norm available for measurement {var!r}")
            raw = raw / ctx.norms[var]
    return raw


def _eval_bin(e: SBin, ctx: SpecContext) -> Value:
    op = e.op
    if op == "=>":
        if not _boolean(eval_spec(e.left, ctx), "=>"):
            return True
        return _boolean(eval_spec(e.right, ctx), "=>")
    if op == "&&":
        return (_boolean(eval_spec(e.left, ctx), "&&")
                and _boolean(eval_spec(e.right, ctx), "&&"))
    if op == "||":
        return (_boolean(eval_spec(e.left, ctx), "||")
                or _boolean(eval_spec(e.right, ctx), "||"))
    l, r = eval_spec(e.left, ctx), eval_spec(e.right, ctx)
    if op in ("==", "!="):
        if isinstance(l, bool) != isinstance(r, bool):
            raise SpecError(f"cannot compare {l} with {r}")
        return (l == r) if op == "==" else (l != r)
    if op == "~=":
        return abs(float(_num(l, "~=")) - float(_num(r, "~="))) <= APPROX_TOL
    ln, rn = _num(l, op), _num(r, op)
    if op == "<":
        return ln < rn
    if op == "<=":
        return ln <= rn
    if op == ">":
        return ln > rn
    if op == ">=":
        return ln >= rn
    if op == "+":
        return ln + rn
    if op == "-":
        return ln - rn
    if op == "*":
        return ln * rn
    if op == "/":
        if rn == 0:
            raise SpecError("division by zero in spec")
        return ln / rn
    if op == "%":
        if ln.denominator != 1 or rn.denominator != 1 or rn == 0:
            raise SpecError(f"% needs integers, got {ln} % {rn}")
        return Fraction(int(ln) % int(rn))
    if op == "^":
        if rn.denominator != 1 or rn < 0:
            raise SpecError(f"exponent must be a natural number, got {rn}")
        return ln ** int(rn)
    raise SpecError(f"unknown operator {op!r}")
