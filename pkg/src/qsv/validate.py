"""Property-based validation: split, draw, run, check, estimate.

A testable program is `new ...; had ...; body` with the prefix free of other
statements and the body free of new/had. One trial draws a uniform bit per
Had qubit (amplitude 2^{-h/2}), runs the body once with recursion markers
truncated to `{}`, and checks the per-ket spec against the finished trial.
A trial that would have recursed counts as unsuccessful but not failing: the
guarded parts of a spec are vacuous there, its unconditional parts (say, an
uncomputed flag returning to zero) still apply.

Success rates come either from exhaustive enumeration of all 2^h draws
(h <= 20, exact rationals) or from sampling with a 95% Wilson interval. The
same enumeration resolves the measurement normalization r that single-ket
runs leave pending, which is what makes `ampmag2` checkable.

Trials are independent: trial i always uses the stream derived from
(seed, i), so --jobs K cannot change any outcome, only wall time.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from math import sqrt
from typing import Optional, Sequence

from .core import (Amplitude, Ket, QsvError, QubitId, QubitRecord,
                   SymbolicState, register)
from .interp import Rng, run
from .lang import (CallRec, Had, If, MeasureLet, New, PSeq, Program,
                   SKIP, const_int, pseq)
from .specs import SCall, SName, SpecContext, SpecError, SpecExpr, SBin, SUn, eval_spec


class ShapeError(QsvError):
    """Program is not in new*; had*; body form."""


class TooManyDraws(QsvError):
    """Exact enumeration over 2^h draws is out of reach."""


EXACT_DRAW_LIMIT = 20


class _NoRng:
    """Placeholder for exact mode, where no randomness may be consumed."""

    def bit(self) -> int:
        raise QsvError("exact enumeration hit a random choice (rotation measurement)")

    def random(self) -> float:
        raise QsvError("exact enumeration hit a random choice (rotation measurement)")


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitProgram:
    prefix: Program
    body: Program       # recursion markers replaced by {}
    raw_body: Program   # recursion markers intact (the validator runs this)
    regs: tuple[tuple[str, int], ...]
    had_qubits: tuple[QubitId, ...]
    nor_qubits: tuple[QubitId, ...]


def _replace_rec(p: Program) -> Program:
    if isinstance(p, CallRec):
        return SKIP
    if isinstance(p, PSeq):
        return pseq([_replace_rec(x) for x in p.items])
    if isinstance(p, MeasureLet):
        return MeasureLet(p.var, p.reg, _replace_rec(p.body))
    if isinstance(p, If):
        return If(p.guard, _replace_rec(p.then), _replace_rec(p.els))
    return p


def split_program(p: Program) -> SplitProgram:
    """Split a desugared program into its new/had prefix and its body."""
    items = list(p.items) if isinstance(p, PSeq) else [p]
    regs: list[tuple[str, int]] = []
    had: list[QubitId] = []
    i = 0
    while i < len(items) and isinstance(items[i], New):
        st = items[i]
        regs.append((st.name, const_int(st.size)))
        i += 1
    sizes = dict(regs)
    while i < len(items) and isinstance(items[i], Had):
        ref = items[i].ref
        if ref.name not in sizes:
            raise ShapeError(f"had on undeclared register {ref.name!r}")
        if ref.index is None:
            had.extend(QubitId(ref.name, k) for k in range(sizes[ref.name]))
        else:
            had.append(QubitId(ref.name, const_int(ref.index)))
        i += 1
    rest = items[i:]

    def no_prefix_ops(q: Program) -> None:
        if isinstance(q, (New, Had)):
            raise ShapeError(f"{type(q).__name__} after the program prefix")
        if isinstance(q, PSeq):
            for x in q.items:
                no_prefix_ops(x)
        elif isinstance(q, MeasureLet):
            no_prefix_ops(q.body)
        elif isinstance(q, If):
            no_prefix_ops(q.then)
            no_prefix_ops(q.els)

    raw_body = pseq(rest) if rest else SKIP
    no_prefix_ops(raw_body)
    if len(set(had)) != len(had):
        raise ShapeError("a qubit is sent through had twice in the prefix")
    had_set = set(had)
    nor = [q for name, size in regs for q in register(name, size)
           if q not in had_set]
    prefix = pseq(items[:i]) if i else SKIP
    return SplitProgram(prefix=prefix, body=_replace_rec(raw_body),
                        raw_body=raw_body, regs=tuple(regs),
                        had_qubits=tuple(had), nor_qubits=tuple(nor))


# ---------------------------------------------------------------------------
# Trial machinery
# ---------------------------------------------------------------------------


def generate_ket(had_qubits: Sequence[QubitId], nor_qubits: Sequence[QubitId],
                 rng, draws: Optional[Sequence[int]] = None) -> SymbolicState:
    """Fresh state with one drawn bit per Had qubit, |0> per Nor qubit."""
    state = SymbolicState()
    sizes: dict[str, int] = {}
    for q in list(had_qubits) + list(nor_qubits):
        sizes[q.name] = max(sizes.get(q.name, 0), q.index + 1)
    for name, size in sizes.items():
        state.kinds.declare(name, size)
    for q in nor_qubits:
        state.env.add(QubitRecord(frozenset(), frozenset([q]), frozenset()))
        state.ket.qubits[q] = Ket(0)
    amp = Amplitude()
    for k, q in enumerate(had_qubits):
        bit = draws[k] if draws is not None else rng.bit()
        state.env.add(QubitRecord(frozenset([q]), frozenset(), frozenset()))
        state.ket.qubits[q] = Ket(bit)
        amp = amp.times_inv_sqrt2()
    state.ket.amplitude = amp
    state.well_formed()
    return state


@dataclass
class TrialResult:
    draws: tuple[int, ...]
    inputs: dict[str, int]
    sigma: dict[str, int]
    final: Optional[SymbolicState]
    hit_rec: bool

    @property
    def succeeded(self) -> bool:
        return not self.hit_rec


def run_trial(split: SplitProgram, rng, draws: Optional[Sequence[int]] = None,
              fuel: int = 10 ** 6, check: bool = True) -> TrialResult:
    state = generate_ket(split.had_qubits, split.nor_qubits, rng, draws)
    bits = tuple(state.ket.read_bit(q) for q in split.had_qubits)
    inputs = {name: state.ket.read_value(register(name, size))
              for name, size in split.regs}
    trace = run(split.raw_body, rng, fuel=fuel, state=state, check=check,
                rec_mode="truncate")
    return TrialResult(draws=bits, inputs=inputs, sigma=dict(state.sigma),
                       final=trace.final, hit_rec=trace.hit_rec)


def enumerate_trials(split: SplitProgram, fuel: int = 10 ** 6, check: bool = False):
    """All 2^h draw assignments, in draw-integer order (bit k -> qubit k)."""
    h = len(split.had_qubits)
    if h > EXACT_DRAW_LIMIT:
        raise TooManyDraws(f"{h} Had qubits means 2^{h} draws; cap is "
                           f"2^{EXACT_DRAW_LIMIT}")
    rng = _NoRng()
    for j in range(1 << h):
        draws = [(j >> k) & 1 for k in range(h)]
        yield run_trial(split, rng, draws=draws, fuel=fuel, check=check)


def exact_norms(split: SplitProgram, fuel: int = 10 ** 6) -> dict[str, dict[int, Fraction]]:
    """r per (measurement var, outcome): summed squared ket magnitude."""
    norms: dict[str, dict[int, Fraction]] = {}
    for trial in enumerate_trials(split, fuel=fuel):
        if trial.final is None:
            continue
        mag2 = trial.final.ket.amplitude.mag2_rational
        if mag2 is None:
            raise QsvError("exact norms need rotation-free amplitudes")
        for var, value in trial.final.pending_norm:
            norms.setdefault(var, {})
            norms[var][value] = norms[var].get(value, Fraction(0)) + mag2
    return norms


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass
class Failure:
    index: int
    draws: str
    sigma: dict[str, int]
    message: str


@dataclass
class ValidationReport:
    tests_run: int = 0
    failures: list[Failure] = field(default_factory=list)
    success_count: int = 0
    hit_rec_count: int = 0
    elapsed: float = 0.0
    estimated_success_rate: float = 0.0
    wilson: tuple[float, float] = (0.0, 1.0)
    seed: int = 0
    success_bits: bytes = b""  # one byte per trial, in trial order

    @property
    def passed(self) -> bool:
        return not self.failures


def spec_uses_ampmag2(e: SpecExpr) -> bool:
    if isinstance(e, SName):
        return e.name == "ampmag2"
    if isinstance(e, SBin):
        return spec_uses_ampmag2(e.left) or spec_uses_ampmag2(e.right)
    if isinstance(e, SUn):
        return spec_uses_ampmag2(e.e)
    if isinstance(e, SCall):
        return any(spec_uses_ampmag2(a) for a in e.args)
    return False


def _check_trial(trial: TrialResult, spec: SpecExpr,
                 norms: Optional[dict[str, dict[int, Fraction]]]) -> Optional[str]:
    trial_norms = None
    if norms is not None and trial.final is not None:
        trial_norms = {}
        for var, value in trial.final.pending_norm:
            r = norms.get(var, {}).get(value)
            if r is not None:
                trial_norms[var] = r
    ctx = SpecContext(inputs=trial.inputs, sigma=trial.sigma, final=trial.final,
                      norms=trial_norms, hit_rec=trial.hit_rec)
    try:
        ok = eval_spec(spec, ctx)
    except SpecError as e:
        return f"spec error: {e}"
    if ok is not True:
        return "spec violated"
    return None


def _run_range(program: Program, spec: SpecExpr, seed: int, start: int, stop: int,
               fuel: int, norms, check: bool) -> tuple[int, int, int, list[Failure], bytes]:
    split = split_program(program)
    master = Rng(seed)
    successes = recs = done = 0
    failures: list[Failure] = []
    bits = bytearray()
    for i in range(start, stop):
        rng = master.sub(i)
        try:
            trial = run_trial(split, rng, fuel=fuel, check=check)
        except QsvError as e:
            failures.append(Failure(i, "", {}, f"run error: {e}"))
            done += 1
            bits.append(0)
            continue
        msg = _check_trial(trial, spec, norms)
        if msg is not None:
            failures.append(Failure(i, "".join(map(str, trial.draws)),
                                    dict(trial.sigma), msg))
        if trial.succeeded:
            successes += 1
        else:
            recs += 1
        bits.append(1 if trial.succeeded else 0)
        done += 1
    return done, successes, recs, failures, bytes(bits)


def validate(program: Program, spec: SpecExpr, n_tests: int = 10_000,
             seed: int = 0, jobs: int = 1, fuel: int = 10 ** 6,
             check: bool = False) -> ValidationReport:
    """Run n_tests independent trials; passes iff no trial fails the spec.

    check=True re-asserts state well-formedness after every step, roughly
    doubling cost at small widths and far worse at 60 bits; the invariant
    has its own property suite, so bulk validation leaves it off.
    """
    t0 = time.perf_counter()
    split = split_program(program)  # early shape check
    norms = None
    if spec_uses_ampmag2(spec):
        if len(split.had_qubits) > EXACT_DRAW_LIMIT:
            raise TooManyDraws("ampmag2 needs exact norms; too many Had qubits")
        norms = exact_norms(split, fuel=fuel)
    report = ValidationReport(seed=seed)
    if jobs <= 1 or n_tests < 4:
        parts = [_run_range(program, spec, seed, 0, n_tests, fuel, norms, check)]
    else:
        bounds = [(n_tests * k // jobs, n_tests * (k + 1) // jobs)
                  for k in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_pool_entry,
                                  [(program, spec, seed, lo, hi, fuel, norms, check)
                                   for lo, hi in bounds]))
    all_bits = bytearray()
    for done, successes, recs, failures, bits in parts:
        report.tests_run += done
        report.success_count += successes
        report.hit_rec_count += recs
        report.failures.extend(failures)
        all_bits.extend(bits)
    report.success_bits = bytes(all_bits)
    report.failures.sort(key=lambda f: f.index)
    report.estimated_success_rate = (report.success_count / report.tests_run
                                     if report.tests_run else 0.0)
    report.wilson = wilson_interval(report.success_count, report.tests_run)
    report.elapsed = time.perf_counter() - t0
    return report


def _pool_entry(args):
    return _run_range(*args)


# ---------------------------------------------------------------------------
# Success-rate estimation
# ---------------------------------------------------------------------------


def _guard_holds(trial: TrialResult, guard: Optional[tuple[str, int]]) -> bool:
    if guard is None:
        return trial.succeeded
    var, value = guard
    return trial.sigma.get(var) == value


def guard_from_program(p: Program) -> Optional[tuple[str, int]]:
    """The measurement guard whose else-branch recurses, if there is one."""
    def contains_rec(q: Program) -> bool:
        if isinstance(q, CallRec):
            return True
        if isinstance(q, PSeq):
            return any(contains_rec(x) for x in q.items)
        if isinstance(q, MeasureLet):
            return contains_rec(q.body)
        if isinstance(q, If):
            return contains_rec(q.then) or contains_rec(q.els)
        return False

    found: list[tuple[str, int]] = []

    def walk(q: Program) -> None:
        if isinstance(q, PSeq):
            for x in q.items:
                walk(x)
        elif isinstance(q, MeasureLet):
            walk(q.body)
        elif isinstance(q, If):
            if contains_rec(q.els) and not contains_rec(q.then):
                found.append((q.guard.var, const_int(q.guard.value)))
            walk(q.then)
            walk(q.els)

    walk(p)
    return found[0] if found else None


def estimate_success_rate(program: Program, guard: Optional[tuple[str, int]] = None,
                          mode: str = "exact", n_samples: int = 10_000,
                          seed: int = 0, fuel: int = 10 ** 6):
    """Exact: Fraction over all 2^h draws. Sampled: (rate, 95% Wilson)."""
    split = split_program(program)
    if mode == "exact":
        hits = total = 0
        for trial in enumerate_trials(split, fuel=fuel):
            hits += 1 if _guard_holds(trial, guard) else 0
            total += 1
        return Fraction(hits, total)
    if mode != "sampled":
        raise QsvError(f"unknown estimation mode {mode!r}")
    master = Rng(seed)
    hits = 0
    for i in range(n_samples):
        trial = run_trial(split, master.sub(i), fuel=fuel, check=False)
        hits += 1 if _guard_holds(trial, guard) else 0
    return hits / n_samples, wilson_interval(hits, n_samples)


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    phat = successes / n
    denom = 1 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))
