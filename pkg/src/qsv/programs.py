"""The five shipped state-preparation programs, as parameterized builders.

Each builder renders .pq source text (the same text that ships as package
data at the default parameters), parses it back, and returns the program
together with its per-ket specification and closed-form success rate.
Generating the source first keeps the packaged files and the builders in
lockstep by construction.

Register naming: where the usual presentation numbers registers with bars
and primes, the files use plain identifiers; each file header states the
mapping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .core import QsvError
from .lang import Program, desugar
from .parse import parse
from .specs import SpecExpr, parse_spec


class CaseStudyError(QsvError):
    """Builder parameters outside the construction's precondition."""


@dataclass(frozen=True)
class CaseStudy:
    name: str
    params: dict = field(compare=False)
    source: str = ""
    program: Program = None          # desugared
    spec: SpecExpr = None
    spec_text: str = ""
    success_formula: Fraction = Fraction(1)
    description: str = ""


def _assemble(name: str, params: dict, source: str, rate: Fraction,
              description: str) -> CaseStudy:
    sf = parse(source, filename=f"<{name}>")
    spec_text = sf.meta.get("spec", "")
    if not spec_text:
        raise CaseStudyError(f"{name}: generated source lost its #spec pragma")
    return CaseStudy(name=name, params=params, source=source,
                     program=desugar(sf.program), spec=parse_spec(spec_text),
                     spec_text=spec_text, success_formula=rate,
                     description=description)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_n_basis_ket(m: int = 8, n: int = 100) -> CaseStudy:
    """Uniform superposition over |0..n) by post-selected comparison."""
    if not 0 < n < (1 << m):
        raise CaseStudyError(f"need 0 < n < 2^m, got n={n}, m={m}")
    rate = Fraction(n, 1 << m)
    source = f"""\
// Uniform superposition over the first {n} basis kets of an {m}-bit register.
// Draw every bit, flag whether the value lands below {n}, and retry from
// scratch unless the measured flag reads 1. Register q is the draw target,
// u holds the comparison flag.
#name n_basis_ket
#spec x == 1 => (out(q) == in(q) && in(q) < {n})
#success {rate}

new q[{m}]
new u[1]
had q
q < {n} @ u[0]
let x = measure(u) in
if x == 1 {{}} else {{ rec }}
"""
    return _assemble(
        "n_basis_ket", {"m": m, "n": n}, source, rate,
        f"uniform state over values 0..{n - 1} in {m} bits, retry on overflow")


def build_mod_exp(m: int = 8, c: int = 3, modulus: int = 7) -> CaseStudy:
    """Entangle an exponent register with c^j mod N in the accumulator."""
    if modulus < 2:
        raise CaseStudyError(f"modulus must be at least 2, got {modulus}")
    if math.gcd(c % modulus, modulus) != 1:
        raise CaseStudyError(f"gcd({c}, {modulus}) must be 1")
    if modulus > (1 << m):
        raise CaseStudyError(f"modulus {modulus} needs more than {m} bits")
    source = f"""\
// Modular exponentiation by repeated squaring: q1 holds the exponent in
// uniform superposition, q2 accumulates {c}^j mod {modulus} starting from 1.
// Bit k of the exponent multiplies the accumulator by {c}^(2^k) mod {modulus}.
#name mod_exp
#spec out(q2) == modexp({c}, in(q1), {modulus}) && out(q1) == in(q1)
#success 1

new q1[{m}]
new q2[{m}]
had q1
add(q2, 1)
repeat k < {m} {{ ctrl q1[k] {{ modmul({c}^(2^k) % {modulus}, q2, {modulus}) }} }}
"""
    return _assemble(
        "mod_exp", {"m": m, "c": c, "modulus": modulus}, source, Fraction(1),
        f"maps each |j> to |j>|{c}^j mod {modulus}>, no retries needed")


def build_amp_amp(n: int = 8, r: Fraction = Fraction(1, 10)) -> CaseStudy:
    """Address-controlled rotation ladder: |j>|0> -> |j> rot((2j+1) r / 2^n)."""
    r = Fraction(r)
    top = (2 ** (n + 1) - 1) * r / 2 ** n
    if not (0 <= r and top < Fraction(1, 4)):
        raise CaseStudyError(
            f"ladder angles must stay in [0, 1/4) turns; top angle is {top}")
    source = f"""\
// Rotation ladder: address register q in uniform superposition, target u
// rotated by ((2j+1) * {r}) / 2^{n} turns for address j. A free rotation
// supplies the +1; bit k of the address adds 2^(k+1) ladder steps.
#name amp_amp
#spec rot(u) == (2 * in(q) + 1) * {r} / 2^{n}
#success 1

new q[{n}]
new u[1]
had q
ry({r} / 2^{n}) u[0]
repeat k < {n} {{ ctrl q[k] {{ ry(2^(k+1) * {r} / 2^{n}) u[0] }} }}
"""
    return _assemble(
        "amp_amp", {"n": n, "r": r}, source, Fraction(1),
        f"rotates the target by (2j+1)*{r}/2^{n} turns per address j")


def build_hamming(n: int = 8, k: int = 3) -> CaseStudy:
    """Uniform superposition over n-bit strings of Hamming weight k."""
    if not 0 <= k <= n:
        raise CaseStudyError(f"need 0 <= k <= n, got k={k}, n={n}")
    counter = max(1, math.ceil(math.log2(n + 1)))
    rate = Fraction(math.comb(n, k), 1 << n)
    source = f"""\
// Weight-{k} superposition over {n} bits: count set bits of q1 into the
// {counter}-bit counter q2, measure the count, retry unless it reads {k}.
#name hamming
#spec x == {k} => (out(q1) == in(q1) && popcount(in(q1)) == {k})
#success {rate}

new q1[{n}]
new q2[{counter}]
had q1
repeat j < {n} {{ ctrl q1[j] {{ add(q2, 1) }} }}
let x = measure(q2) in
if x == {k} {{}} else {{ rec }}
"""
    return _assemble(
        "hamming", {"n": n, "k": k}, source, rate,
        f"uniform state over {n}-bit strings with exactly {k} ones")


def distinct_rate(n: int, m: int) -> Fraction:
    """Probability that n independent uniform m-bit values are all distinct."""
    ff = 1
    for i in range(n):
        ff *= max((1 << m) - i, 0)
    return Fraction(ff, 1 << (n * m))


def build_distinct(n: int = 5, m: int = 8) -> CaseStudy:
    """Superposition over tuples of pairwise-distinct m-bit segments."""
    if n < 2:
        raise CaseStudyError(f"need at least two segments, got n={n}")
    if m < 1:
        raise CaseStudyError(f"segments need at least one bit, got m={m}")
    pairs = n * (n - 1) // 2
    counter = max(1, math.ceil(math.log2(pairs + 1)))
    rate = distinct_rate(n, m)
    segs = [f"q{j + 2}" for j in range(n)]
    decls = "\n".join(f"new {s}[{m}]" for s in segs)
    hads = "\n".join(f"had {s}" for s in segs)
    compares = []
    for a in range(n):
        for b in range(a + 1, n):
            compares.append(f"{segs[a]} == {segs[b]} @ q0[0]")
            compares.append("ctrl q0[0] { add(q1, 1) }")
            compares.append(f"{segs[a]} == {segs[b]} @ q0[0]")
    body = "\n".join(compares)
    spec_args = ", ".join(f"in({s})" for s in segs)
    source = f"""\
// Pairwise-distinct segments: {n} registers of {m} bits each (q2..q{n + 1}),
// a collision counter q1 ({counter} bits) and a scratch flag q0. Every pair
// is compared into the flag, the flag conditionally bumps the counter, and
// the same comparison uncomputes the flag, so q0 always ends at |0>.
// Measure the collision count; retry unless it reads zero.
#name distinct
#spec x == 0 => (out(q0) == 0 && alldistinct({spec_args}))
#success {rate}

new q0[1]
new q1[{counter}]
{decls}
{hads}
{body}
let x = measure(q1) in
if x == 0 {{}} else {{ rec }}
"""
    return _assemble(
        "distinct", {"n": n, "m": m}, source, rate,
        f"uniform state over {n}-tuples of pairwise-distinct {m}-bit values")


# ---------------------------------------------------------------------------
# Registry and helpers
# ---------------------------------------------------------------------------


BUILDERS = {
    "n_basis_ket": build_n_basis_ket,
    "mod_exp": build_mod_exp,
    "amp_amp": build_amp_amp,
    "hamming": build_hamming,
    "distinct": build_distinct,
}


def default_case_studies() -> list[CaseStudy]:
    """All five at their shipped (8-bit-register) parameters."""
    return [b() for b in BUILDERS.values()]


def mod_exp_prefix(m: int, c: int, modulus: int, k: int) -> CaseStudy:
    """First k ladder iterations only; used to check the loop invariant
    (after step k the accumulator holds c^(j mod 2^k) mod N)."""
    full = build_mod_exp(m, c, modulus)
    lines = full.source.splitlines()
    out = []
    for ln in lines:
        if ln.startswith("repeat k <"):
            out.append(ln.replace(f"repeat k < {m}", f"repeat k < {k}", 1))
        elif ln.startswith("#spec"):
            out.append(f"#spec out(q2) == modexp({c}, in(q1) % 2^{k}, {modulus})"
                       f" && out(q1) == in(q1)")
        else:
            out.append(ln)
    return _assemble("mod_exp_prefix",
                     {"m": m, "c": c, "modulus": modulus, "k": k},
                     "\n".join(out) + "\n", Fraction(1),
                     f"ladder truncated to {k} of {m} steps")
