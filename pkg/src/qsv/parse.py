"""Recursive-descent parser for .pq source.

Statements are self-delimiting; semicolons are optional separators and
newlines are insignificant. `// ...` comments run to end of line. Lines
starting with `#key value` are pragmas collected into SourceFile.meta.

The second operand of `add`, `<` and `==` is a register name if it names a
register declared by an earlier `new`, otherwise a constant expression (which
may reference enclosing `repeat` variables).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .lang import (AddConst, AddReg, CBin, CNum, CVar, CallRec, ConstExpr, Ctrl, EqConst,
                   EqReg, Guard, Had, If, Ins, Instruction, LtConst, LtReg, MeasureLet,
                   ModMult, Mu, New, Program, QubitRef, Repeat, RyGate, SKIP, Skip,
                   SourceFile, cnum, iseq, pseq)


class PqSyntaxError(SyntaxError):
    """Parse error with position information."""

    def __init__(self, msg: str, line: int, col: int, filename: str = "<pq>") -> None:
        super().__init__(msg, (filename, line, col, None))


@dataclass
class Token:
    kind: str  # ident num sym eof
    text: str
    value: Optional[Fraction]
    line: int
    col: int


_TOKEN_RE = re.compile(r"""
    (?P<comment>//[^\n]*)
  | (?P<num>\d+(?:\.\d+)?t?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<sym>==|\{\}|[-+*/%^@<>=(),;\[\]{}])
  | (?P<ws>[ \t\r\n]+)
  | (?P<bad>.)
""", re.VERBOSE)


def _tokenize(text: str, filename: str) -> tuple[list[Token], dict[str, str]]:
    tokens: list[Token] = []
    meta: dict[str, str] = {}
    line = 1
    for raw in text.split("\n"):
        stripped = raw.lstrip()
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if body:
                key, _, value = body.partition(" ")
                meta[key] = value.strip()
            line += 1
            continue
        pos = 0
        while pos < len(raw):
            m = _TOKEN_RE.match(raw, pos)
            assert m is not None
            pos = m.end()
            col = m.start() + 1
            if m.lastgroup in ("ws", "comment"):
                continue
            if m.lastgroup == "bad":
                raise PqSyntaxError(f"unexpected character {m.group()!r}", line, col, filename)
            text_ = m.group()
            if m.lastgroup == "num":
                lit = text_[:-1] if text_.endswith("t") else text_
                tokens.append(Token("num", text_, Fraction(lit), line, col))
            elif m.lastgroup == "ident":
                tokens.append(Token("ident", text_, None, line, col))
            else:
                tokens.append(Token("sym", text_, None, line, col))
        line += 1
    tokens.append(Token("eof", "", None, line, 1))
    return tokens, meta


class _Parser:
    def __init__(self, tokens: list[Token], filename: str) -> None:
        self.toks = tokens
        self.pos = 0
        self.filename = filename
        self.registers: set[str] = set()
        self.loop_vars: list[str] = []

    # -- token plumbing ----------------------------------------------------

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        t = self.peek()
        if not self.at(kind, text):
            want = text or kind
            raise PqSyntaxError(f"expected {want!r}, found {t.text!r}", t.line, t.col,
                                self.filename)
        return self.next()

    def error(self, msg: str) -> PqSyntaxError:
        t = self.peek()
        return PqSyntaxError(msg, t.line, t.col, self.filename)

    # -- constant expressions ----------------------------------------------

    def const_expr(self) -> ConstExpr:
        return self._add_expr()

    def _add_expr(self) -> ConstExpr:
        e = self._mul_expr()
        while self.at("sym", "+") or self.at("sym", "-"):
            op = self.next().text
            e = CBin(op, e, self._mul_expr())
        return e

    def _mul_expr(self) -> ConstExpr:
        e = self._pow_expr()
        while self.at("sym", "*") or self.at("sym", "/") or self.at("sym", "%"):
            op = self.next().text
            e = CBin(op, e, self._pow_expr())
        return e

    def _pow_expr(self) -> ConstExpr:
        e = self._atom_expr()
        if self.at("sym", "^"):
            self.next()
            return CBin("^", e, self._pow_expr())  # right associative
        return e

    def _atom_expr(self) -> ConstExpr:
        t = self.peek()
        if t.kind == "num":
            self.next()
            return CNum(t.value)
        if t.kind == "ident":
            self.next()
            if t.text == "pi":
                return CNum(Fraction(1, 2))  # half a turn
            return CVar(t.text)
        if self.at("sym", "("):
            self.next()
            e = self.const_expr()
            self.expect("sym", ")")
            return e
        if self.at("sym", "-"):
            self.next()
            return CBin("-", cnum(0), self._atom_expr())
        raise self.error(f"expected a constant expression, found {t.text!r}")

    # -- references ----------------------------------------------------------

    def qubit_ref(self) -> QubitRef:
        name = self.expect("ident").text
        if self.at("sym", "["):
            self.next()
            idx = self.const_expr()
            self.expect("sym", "]")
            return QubitRef(name, idx)
        return QubitRef(name, None)

    # -- instructions --------------------------------------------------------

    def instr_block(self) -> Instruction:
        if self.at("sym", "{}"):
            self.next()
            return Mu(Skip())
        self.expect("sym", "{")
        items: list[Instruction] = []
        while not self.at("sym", "}"):
            self._skip_semis()
            if self.at("sym", "}"):
                break
            items.append(self.instruction())
        self.expect("sym", "}")
        if not items:
            return Mu(Skip())
        return iseq(items)

    def instruction(self) -> Instruction:
        t = self.peek()
        if self.at("sym", "{}"):
            self.next()
            return Mu(Skip())
        if t.kind == "ident" and t.text == "ctrl":
            self.next()
            c = self.qubit_ref()
            return Ctrl(c, self.instr_block())
        if t.kind == "ident" and t.text == "ry":
            self.next()
            self.expect("sym", "(")
            angle = self.const_expr()
            self.expect("sym", ")")
            return RyGate(angle, self.qubit_ref())
        if t.kind == "ident":
            return Mu(self.mu_op())
        raise self.error(f"expected an instruction, found {t.text!r}")

    def _const_or_reg(self) -> tuple[Optional[str], Optional[ConstExpr]]:
        """Second operand: a declared register name, or a constant expression."""
        t = self.peek()
        if (t.kind == "ident" and t.text in self.registers
                and t.text not in self.loop_vars):
            self.next()
            return t.text, None
        return None, self.const_expr()

    def mu_op(self):
        t = self.peek()
        if t.text == "add":
            self.next()
            self.expect("sym", "(")
            target = self.expect("ident").text
            self.expect("sym", ",")
            reg, const = self._const_or_reg()
            self.expect("sym", ")")
            return AddReg(target, reg) if reg is not None else AddConst(target, const)
        if t.text == "modmul":
            self.next()
            self.expect("sym", "(")
            const = self.const_expr()
            self.expect("sym", ",")
            target = self.expect("ident").text
            self.expect("sym", ",")
            modulus = self.const_expr()
            self.expect("sym", ")")
            return ModMult(const, target, modulus)
        # comparison mu: reg (< | ==) operand @ out
        left = self.expect("ident").text
        if self.at("sym", "<"):
            self.next()
            reg, const = self._const_or_reg()
            self.expect("sym", "@")
            out = self.qubit_ref()
            return LtReg(left, reg, out) if reg is not None else LtConst(left, const, out)
        if self.at("sym", "=="):
            self.next()
            reg, const = self._const_or_reg()
            self.expect("sym", "@")
            out = self.qubit_ref()
            return EqReg(left, reg, out) if reg is not None else EqConst(left, const, out)
        raise self.error(f"expected an oracle operation after {left!r}")

    # -- statements ------------------------------------------------------------

    def _skip_semis(self) -> None:
        while self.at("sym", ";"):
            self.next()

    def block(self) -> Program:
        if self.at("sym", "{}"):  # empty braces lex as the skip token
            self.next()
            return SKIP
        self.expect("sym", "{")
        body = self.statements(until="}")
        self.expect("sym", "}")
        return body

    def statements(self, until: str) -> Program:
        items: list[Program] = []
        while True:
            self._skip_semis()
            t = self.peek()
            if t.kind == "eof" or (t.kind == "sym" and t.text == until):
                break
            items.append(self.statement())
        return pseq(items) if items else SKIP

    def statement(self) -> Program:
        t = self.peek()
        if self.at("sym", "{}"):
            self.next()
            return SKIP
        if self.at("sym", "{"):
            return self.block()
        if t.kind != "ident":
            raise self.error(f"expected a statement, found {t.text!r}")
        if t.text == "new":
            self.next()
            name = self.expect("ident").text
            size: ConstExpr = cnum(1)
            if self.at("sym", "["):
                self.next()
                size = self.const_expr()
                self.expect("sym", "]")
            self.registers.add(name)
            return New(name, size)
        if t.text == "had":
            self.next()
            return Had(self.qubit_ref())
        if t.text == "rec":
            self.next()
            return CallRec()
        if t.text == "repeat":
            self.next()
            var = self.expect("ident").text
            self.expect("sym", "<")
            count = self.const_expr()
            self.loop_vars.append(var)
            body = self.block()
            self.loop_vars.pop()
            return Repeat(var, count, body)
        if t.text == "let":
            self.next()
            var = self.expect("ident").text
            self.expect("sym", "=")
            kw = self.expect("ident")
            if kw.text != "measure":
                raise PqSyntaxError("expected 'measure'", kw.line, kw.col, self.filename)
            self.expect("sym", "(")
            reg = self.expect("ident").text
            self.expect("sym", ")")
            kw = self.expect("ident")
            if kw.text != "in":
                raise PqSyntaxError("expected 'in'", kw.line, kw.col, self.filename)
            body = self.block() if self.at("sym", "{") else self.statement()
            return MeasureLet(var, reg, body)
        if t.text == "if":
            self.next()
            var = self.expect("ident").text
            self.expect("sym", "==")
            value = self.const_expr()
            then = self.block()
            kw = self.expect("ident")
            if kw.text != "else":
                raise PqSyntaxError("expected 'else'", kw.line, kw.col, self.filename)
            els = self.block()
            return If(Guard(var, value), then, els)
        # instruction statements: ctrl / ry / mu
        return Ins(self.instruction())


def parse(text: str, filename: str = "<pq>") -> SourceFile:
    tokens, meta = _tokenize(text, filename)
    p = _Parser(tokens, filename)
    program = p.statements(until="\x00")
    t = p.peek()
    if t.kind != "eof":
        raise PqSyntaxError(f"unexpected {t.text!r}", t.line, t.col, filename)
    return SourceFile(program, meta)


def parse_program(text: str, filename: str = "<pq>") -> Program:
    return parse(text, filename).program
