"""Core value model: exact angles, symbolic amplitudes, basis kets, records.

Conventions used across the package:

- Angles are exact rational fractions of a full turn (2*pi), normalized to
  [0, 1). `Angle.radians` is the only place floating point enters.
- A qubit in a basis ket is either a computational value |0>/|1> (`Ket`) or a
  real rotation state `Rot(r)` = cos(r)|0> + sin(r)|1> with r an Angle.
- Register values read little-endian: index 0 is the least significant bit.
- A qubit record is a disjoint triple (had, nor, rot) of qubit sets; a type
  environment is a set of pairwise-disjoint records. Records merge freely
  (fieldwise union); a record may split only along its Nor/Rot fields, and
  only when that does not separate Had qubits from the record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Union


class QsvError(Exception):
    """Base class for all errors raised by this package."""


class SplitHadError(QsvError):
    """A record split would separate Had-typed qubits from their record."""


class RecordError(QsvError):
    """Malformed record or environment operation (overlap, unknown qubit)."""


# ---------------------------------------------------------------------------
# Qubit identifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class QubitId:
    """One qubit of a declared register: `name[index]`."""

    name: str
    index: int

    def __repr__(self) -> str:
        return f"{self.name}[{self.index}]"


def register(name: str, size: int) -> tuple[QubitId, ...]:
    return tuple(QubitId(name, i) for i in range(size))


# ---------------------------------------------------------------------------
# Exact angles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Angle:
    """An exact rational number of turns, normalized to [0, 1)."""

    turns: Fraction

    def __init__(self, turns: Union[Fraction, int, str]) -> None:
        object.__setattr__(self, "turns", Fraction(turns) % 1)

    def __add__(self, other: "Angle") -> "Angle":
        return Angle(self.turns + other.turns)

    def __sub__(self, other: "Angle") -> "Angle":
        return Angle(self.turns - other.turns)

    def __neg__(self) -> "Angle":
        return Angle(-self.turns)

    def scale(self, k: Union[int, Fraction]) -> "Angle":
        return Angle(self.turns * k)

    @property
    def radians(self) -> float:
        return 2.0 * math.pi * float(self.turns)

    def cos(self) -> float:
        return math.cos(self.radians)

    def sin(self) -> float:
        return math.sin(self.radians)

    @property
    def is_zero(self) -> bool:
        return self.turns == 0

    def __repr__(self) -> str:
        return f"{self.turns}t"


ZERO_ANGLE = Angle(0)
HALF_TURN = Angle(Fraction(1, 2))


# ---------------------------------------------------------------------------
# Symbolic amplitudes
# ---------------------------------------------------------------------------

# A trig factor is ("cos"|"sin", Angle); the amplitude's magnitude carries the
# signed product of its trig factors (cos of an obtuse angle is negative).
TrigFactor = tuple[str, Angle]


@dataclass(frozen=True)
class Amplitude:
    """Symbolic amplitude  e^(2*pi*i*phase) * 2^(-sqrt2_exp/2) * sqrt(root) * prod(trig).

    `sqrt2_exp` counts 1/sqrt(2) factors from Hadamards exactly; `root` is a
    positive rational under a square root used by measurement renormalization
    (dividing by sqrt(r) multiplies `root` by 1/r); `trig` collects cos/sin
    factors introduced when a Rot qubit is expanded for measurement.
    """

    phase: Angle = ZERO_ANGLE
    sqrt2_exp: int = 0
    root: Fraction = Fraction(1)
    trig: tuple[TrigFactor, ...] = ()

    def __post_init__(self) -> None:
        if self.root <= 0:
            raise QsvError(f"amplitude root must be positive, got {self.root}")

    def times_phase(self, phase: Angle) -> "Amplitude":
        return Amplitude(self.phase + phase, self.sqrt2_exp, self.root, self.trig)

    def times_inv_sqrt2(self) -> "Amplitude":
        return Amplitude(self.phase, self.sqrt2_exp + 1, self.root, self.trig)

    def times_trig(self, kind: str, angle: Angle) -> "Amplitude":
        if kind not in ("cos", "sin"):
            raise QsvError(f"unknown trig factor kind {kind!r}")
        return Amplitude(self.phase, self.sqrt2_exp, self.root, self.trig + ((kind, angle),))

    def div_sqrt(self, r: Fraction) -> "Amplitude":
        """Divide by sqrt(r); used to renormalize after measurement."""
        if r <= 0:
            raise QsvError(f"cannot renormalize by sqrt({r})")
        return Amplitude(self.phase, self.sqrt2_exp, self.root / r, self.trig)

    @property
    def mag2_rational(self) -> Optional[Fraction]:
        """Exact squared magnitude, or None if trig factors make it irrational."""
        if self.trig:
            return None
        return self.root / Fraction(2) ** self.sqrt2_exp

    def negated(self) -> "Amplitude":
        return self.times_phase(HALF_TURN)


def amplitude_eval(amp: Amplitude) -> complex:
    """Evaluate a symbolic amplitude to a complex float."""
    mag = math.sqrt(float(amp.root)) * 2.0 ** (-amp.sqrt2_exp / 2.0)
    for kind, angle in amp.trig:
        mag *= angle.cos() if kind == "cos" else angle.sin()
    return mag * complex(math.cos(amp.phase.radians), math.sin(amp.phase.radians))


UNIT_AMPLITUDE = Amplitude()


# ---------------------------------------------------------------------------
# Per-qubit basis states and basis kets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Ket:
    """Computational basis value |0> or |1>."""

    bit: int

    def __post_init__(self) -> None:
        if self.bit not in (0, 1):
            raise QsvError(f"ket bit must be 0 or 1, got {self.bit}")

    def __repr__(self) -> str:
        return f"|{self.bit}>"


@dataclass(frozen=True)
class Rot:
    """Rotation state cos(r)|0> + sin(r)|1>."""

    angle: Angle

    def __repr__(self) -> str:
        return f"rot({self.angle})"


BasisQubitState = Union[Ket, Rot]


class BasisKet:
    """One symbolic basis ket: a qubit-to-state map plus a symbolic amplitude.

    Mutable on purpose: the interpreter's hot loop updates qubits in place.
    `copy()` before forking.
    """

    __slots__ = ("qubits", "amplitude")

    def __init__(self, qubits: Optional[dict[QubitId, BasisQubitState]] = None,
                 amplitude: Amplitude = UNIT_AMPLITUDE) -> None:
        self.qubits: dict[QubitId, BasisQubitState] = dict(qubits or {})
        self.amplitude = amplitude

    def copy(self) -> "BasisKet":
        return BasisKet(self.qubits, self.amplitude)

    def read_bit(self, q: QubitId) -> int:
        st = self.qubits[q]
        if not isinstance(st, Ket):
            raise QsvError(f"qubit {q} is not in a computational basis state: {st}")
        return st.bit

    def read_value(self, qs: Iterable[QubitId]) -> int:
        """Little-endian integer value of the given qubits."""
        v = 0
        for k, q in enumerate(qs):
            v |= self.read_bit(q) << k
        return v

    def write_value(self, qs: Iterable[QubitId], value: int) -> None:
        for k, q in enumerate(qs):
            self.qubits[q] = Ket((value >> k) & 1)

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, BasisKet)
                and self.qubits == other.qubits
                and self.amplitude == other.amplitude)

    def __repr__(self) -> str:
        parts = " ".join(f"{q}={st}" for q, st in sorted(self.qubits.items()))
        return f"BasisKet({self.amplitude}; {parts})"


# ---------------------------------------------------------------------------
# Qubit records and type environments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QubitRecord:
    """A disjoint triple of Had / Nor / Rot typed qubit sets."""

    had: frozenset[QubitId] = frozenset()
    nor: frozenset[QubitId] = frozenset()
    rot: frozenset[QubitId] = frozenset()

    def __post_init__(self) -> None:
        if (self.had & self.nor) or (self.had & self.rot) or (self.nor & self.rot):
            raise RecordError(f"record fields overlap: {self}")

    @property
    def qubits(self) -> frozenset[QubitId]:
        return self.had | self.nor | self.rot

    def kind_of(self, q: QubitId) -> str:
        if q in self.had:
            return "had"
        if q in self.nor:
            return "nor"
        if q in self.rot:
            return "rot"
        raise RecordError(f"{q} not in record {self}")

    def without(self, qs: frozenset[QubitId]) -> "QubitRecord":
        return QubitRecord(self.had - qs, self.nor - qs, self.rot - qs)

    def __repr__(self) -> str:
        def fmt(s: frozenset[QubitId]) -> str:
            return "{" + ",".join(map(repr, sorted(s))) + "}"
        return f"({fmt(self.had)},{fmt(self.nor)},{fmt(self.rot)})"


def merge_records(a: QubitRecord, b: QubitRecord) -> QubitRecord:
    """Fieldwise union; the two records must not share qubits."""
    if a.qubits & b.qubits:
        raise RecordError(f"cannot merge overlapping records {a} and {b}")
    return QubitRecord(a.had | b.had, a.nor | b.nor, a.rot | b.rot)


def split_record(r: QubitRecord, part: frozenset[QubitId]) -> tuple[QubitRecord, QubitRecord]:
    """Split `part` out of `r`. Had qubits cannot be separated: they stay in
    the remainder, and `part` touching them is an error."""
    if part & r.had:
        raise SplitHadError(f"cannot split Had qubits {sorted(part & r.had)} out of {r}")
    if not part <= r.qubits:
        raise RecordError(f"{sorted(part - r.qubits)} not in record {r}")
    left = QubitRecord(frozenset(), r.nor & part, r.rot & part)
    right = QubitRecord(r.had, r.nor - part, r.rot - part)
    return left, right


class TypeEnv:
    """A set of pairwise-disjoint qubit records. Order is irrelevant;
    equality compares the record sets."""

    __slots__ = ("records",)

    def __init__(self, records: Iterable[QubitRecord] = ()) -> None:
        self.records: list[QubitRecord] = [r for r in records if r.qubits]
        seen: set[QubitId] = set()
        for r in self.records:
            if seen & r.qubits:
                raise RecordError("records overlap in environment")
            seen |= r.qubits

    def copy(self) -> "TypeEnv":
        env = TypeEnv.__new__(TypeEnv)
        env.records = list(self.records)
        return env

    @property
    def qubits(self) -> set[QubitId]:
        out: set[QubitId] = set()
        for r in self.records:
            out |= r.qubits
        return out

    def record_of(self, q: QubitId) -> QubitRecord:
        for r in self.records:
            if q in r.qubits:
                return r
        raise RecordError(f"{q} not bound in environment")

    def find(self, q: QubitId) -> Optional[QubitRecord]:
        for r in self.records:
            if q in r.qubits:
                return r
        return None

    def add(self, r: QubitRecord) -> None:
        if r.qubits & self.qubits:
            raise RecordError(f"record {r} overlaps environment")
        if r.qubits:
            self.records.append(r)

    def replace(self, old: Iterable[QubitRecord], new: Iterable[QubitRecord]) -> None:
        olds = list(old)
        for r in olds:
            self.records.remove(r)
        for r in new:
            if r.qubits:
                self.add(r)

    def merge_for(self, qs: Iterable[QubitId]) -> QubitRecord:
        """Merge every record touching `qs` into one; returns the merged record."""
        qs = set(qs)
        touched: list[QubitRecord] = []
        for r in self.records:
            if r.qubits & qs:
                touched.append(r)
        if not touched:
            raise RecordError(f"no record holds any of {sorted(qs)}")
        missing = qs - set().union(*(r.qubits for r in touched))
        if missing:
            raise RecordError(f"{sorted(missing)} not bound in environment")
        merged = touched[0]
        for r in touched[1:]:
            merged = merge_records(merged, r)
        self.replace(touched, [merged])
        return merged

    def delete(self, qs: frozenset[QubitId]) -> None:
        new = [r.without(qs) for r in self.records]
        self.records = [r for r in new if r.qubits]

    def canonical(self) -> frozenset[QubitRecord]:
        return frozenset(self.records)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TypeEnv) and self.canonical() == other.canonical()

    def __iter__(self) -> Iterator[QubitRecord]:
        return iter(self.records)

    def __repr__(self) -> str:
        return "TypeEnv{" + "; ".join(map(repr, self.records)) + "}"


class KindEnv:
    """Declared registers: name -> size, plus which are already measured."""

    __slots__ = ("sizes", "measured")

    def __init__(self) -> None:
        self.sizes: dict[str, int] = {}
        self.measured: set[str] = set()

    def copy(self) -> "KindEnv":
        k = KindEnv()
        k.sizes = dict(self.sizes)
        k.measured = set(self.measured)
        return k

    def declare(self, name: str, size: int) -> None:
        if name in self.sizes:
            raise RecordError(f"register {name} already declared")
        self.sizes[name] = size

    def live(self, name: str) -> bool:
        return name in self.sizes and name not in self.measured

    def qubits(self, name: str) -> tuple[QubitId, ...]:
        return register(name, self.sizes[name])

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, KindEnv) and self.sizes == other.sizes
                and self.measured == other.measured)


# ---------------------------------------------------------------------------
# Symbolic machine state
# ---------------------------------------------------------------------------


@dataclass
class SymbolicState:
    """State threaded by the determinized interpreter: one basis ket, the
    flow-sensitive environment, the classical store, and normalization debt.

    `pending_norm` collects the measurement outcome probabilities that a
    single-ket run cannot know (the ket's amplitude is left un-renormalized
    for them); the validator resolves these by enumeration or sampling.
    """

    env: TypeEnv = field(default_factory=TypeEnv)
    kinds: KindEnv = field(default_factory=KindEnv)
    ket: BasisKet = field(default_factory=BasisKet)
    sigma: dict[str, int] = field(default_factory=dict)
    pending_norm: list[tuple[str, int]] = field(default_factory=list)

    def copy(self) -> "SymbolicState":
        return SymbolicState(self.env.copy(), self.kinds.copy(), self.ket.copy(),
                             dict(self.sigma), list(self.pending_norm))

    def well_formed(self) -> None:
        """Assert the record/kind/ket domains agree and states match kinds."""
        live = set()
        for name, size in self.kinds.sizes.items():
            if name not in self.kinds.measured:
                live |= set(register(name, size))
        env_qs = self.env.qubits
        if env_qs != live:
            raise QsvError(f"env/kind domain mismatch: {sorted(env_qs ^ live)}")
        if set(self.ket.qubits) != live:
            raise QsvError(f"ket/kind domain mismatch: {sorted(set(self.ket.qubits) ^ live)}")
        for r in self.env:
            for q in r.had | r.nor:
                if not isinstance(self.ket.qubits[q], Ket):
                    raise QsvError(f"{q} typed {r.kind_of(q)} but holds {self.ket.qubits[q]}")
            for q in r.rot:
                if not isinstance(self.ket.qubits[q], Rot):
                    raise QsvError(f"{q} typed rot but holds {self.ket.qubits[q]}")
