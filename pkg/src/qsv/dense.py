"""Dense statevector reference semantics.

Both simulators here keep the full 2^n amplitude vector, so they are capped
at WIDTH_CAP qubits and exist to cross-check the symbolic interpreter and
the compiled circuits, not to scale.

Index convention: qubit k is bit k of the basis-state index, so qubit 0 is
the least significant bit. For the source-level simulator the qubit order
list maps positions to qubit identities; freshly allocated qubits are
appended (they become the new high bits).

Measurement is handled by branch enumeration: every outcome with nonzero
probability produces its own branch with the exact conditional state, no
sampling involved. Source-level branches drop the measured qubits from the
vector; circuit-level branches keep the (now definite) wires, mirroring
what hardware would do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (BasisKet, Ket, QsvError, QubitId, amplitude_eval,
                   register)
from .lang import (CallRec, Ctrl, Had, If, Ins, ISeq, Instruction, MeasureLet,
                   Mu, New, PSeq, Program, RyGate, Skip, const_eval, const_int,
                   ref_single)
from .oracles import OracleError, classical_apply
from .compiler import Circuit

WIDTH_CAP = 12
NORM_TOL = 1e-9


class WidthCapExceeded(QsvError):
    """The dense simulator refuses to allocate this many qubits."""


class DenseError(QsvError):
    pass


def _apply_1q(vec: np.ndarray, m: np.ndarray, q: int,
              mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Apply a 2x2 matrix on qubit q; `mask` restricts to basis states
    (indexed with qubit q cleared) where a control condition holds."""
    n = vec.size
    step = 1 << q
    idx = np.arange(n)
    lo = idx[(idx & step) == 0]
    hi = lo | step
    a, b = vec[lo], vec[hi]
    na = m[0, 0] * a + m[0, 1] * b
    nb = m[1, 0] * a + m[1, 1] * b
    out = vec.copy()
    if mask is None:
        out[lo], out[hi] = na, nb
    else:
        out[lo[mask]], out[hi[mask]] = na[mask], nb[mask]
    return out


def _controls_mask(lo: np.ndarray, controls: list[int]) -> np.ndarray:
    mask = np.ones(lo.size, dtype=bool)
    for c in controls:
        mask &= (lo & (1 << c)) != 0
    return mask


def _apply_controlled_1q(vec: np.ndarray, m: np.ndarray, q: int,
                         controls: list[int]) -> np.ndarray:
    if not controls:
        return _apply_1q(vec, m, q)
    n = vec.size
    step = 1 << q
    idx = np.arange(n)
    lo = idx[(idx & step) == 0]
    return _apply_1q(vec, m, q, _controls_mask(lo, controls))


H_MATRIX = np.array([[1, 1], [1, -1]], dtype=np.complex128) / math.sqrt(2.0)
X_MATRIX = np.array([[0, 1], [1, 0]], dtype=np.complex128)


def _ry_matrix(turns: float) -> np.ndarray:
    th = 2.0 * math.pi * turns
    c, s = math.cos(th), math.sin(th)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def _rz_matrix(turns: float) -> np.ndarray:
    return np.array([[1, 0], [0, np.exp(2j * math.pi * turns)]],
                    dtype=np.complex128)


# ---------------------------------------------------------------------------
# Circuit-level simulation
# ---------------------------------------------------------------------------


@dataclass
class CircuitBranch:
    outcomes: dict[str, int]     # classical register values
    probability: float
    state: np.ndarray            # full-width vector, measured wires definite


def simulate_circuit(c: Circuit, initial: Optional[np.ndarray] = None,
                     cap: int = WIDTH_CAP) -> list[CircuitBranch]:
    """Run every measurement branch of a compiled circuit exactly."""
    if c.width > cap:
        raise WidthCapExceeded(f"{c.width} qubits > cap {cap}")
    dim = 1 << c.width
    if initial is None:
        vec = np.zeros(dim, dtype=np.complex128)
        vec[0] = 1.0
    else:
        vec = np.asarray(initial, dtype=np.complex128).copy()
        if vec.size != dim:
            raise DenseError(f"initial vector has {vec.size} amplitudes, "
                             f"circuit needs {dim}")
    branches = [CircuitBranch({}, 1.0, vec)]
    for g in c.gates:
        nxt: list[CircuitBranch] = []
        for br in branches:
            if g.cond is not None and br.outcomes.get(g.cond[0], 0) != g.cond[1]:
                nxt.append(br)
                continue
            if g.kind == "measure":
                assert g.creg is not None
                q = g.qubits[0]
                var, bit = g.creg
                idx = np.arange(br.state.size)
                for b in (0, 1):
                    sel = ((idx >> q) & 1) == b
                    p = float(np.sum(np.abs(br.state[sel]) ** 2))
                    if p <= 1e-15:
                        continue
                    sub = br.state.copy()
                    sub[~sel] = 0.0
                    sub /= math.sqrt(p)
                    out = dict(br.outcomes)
                    out[var] = out.get(var, 0) | (b << bit)
                    nxt.append(CircuitBranch(out, br.probability * p, sub))
                continue
            if g.kind == "x":
                br.state = _apply_1q(br.state, X_MATRIX, g.qubits[0])
            elif g.kind == "h":
                br.state = _apply_1q(br.state, H_MATRIX, g.qubits[0])
            elif g.kind == "cx":
                br.state = _apply_controlled_1q(br.state, X_MATRIX,
                                                g.qubits[1], [g.qubits[0]])
            elif g.kind == "rz":
                assert g.angle is not None
                br.state = _apply_1q(br.state, _rz_matrix(float(g.angle.turns)),
                                     g.qubits[0])
            elif g.kind == "ry":
                assert g.angle is not None
                br.state = _apply_1q(br.state, _ry_matrix(float(g.angle.turns)),
                                     g.qubits[0])
            else:
                raise DenseError(f"cannot simulate gate kind {g.kind!r}")
            nxt.append(br)
        branches = nxt
    return branches


def outcome_distribution(branches: list[CircuitBranch]) -> dict[tuple, float]:
    """Collapse branches to a probability map keyed by sorted outcome items."""
    dist: dict[tuple, float] = {}
    for br in branches:
        key = tuple(sorted(br.outcomes.items()))
        dist[key] = dist.get(key, 0.0) + br.probability
    return dist


# ---------------------------------------------------------------------------
# Source-level simulation
# ---------------------------------------------------------------------------


@dataclass
class DenseBranch:
    sigma: dict[str, int]
    probability: float
    qubits: tuple[QubitId, ...]   # position k <-> bit k of the index
    state: np.ndarray
    hit_rec: bool = False

    def qubit_pos(self, q: QubitId) -> int:
        return self.qubits.index(q)


class _DenseRun:
    """One in-progress branch of the source-level simulation.

    `kinds` tracks which single-qubit rotation rule applies: a "bit" qubit
    holds a definite 0/1 in every basis state of its record history, so ry
    replaces per the two basis cases (the |1> case lands on the 3/4-r
    rotation, which is not unitary as a matrix, hence the bookkeeping);
    a "rot" qubit accumulates rotations, which is an honest unitary.
    """

    def __init__(self) -> None:
        self.sigma: dict[str, int] = {}
        self.qubits: list[QubitId] = []
        self.kinds: dict[QubitId, str] = {}   # "bit" | "had" | "rot"
        self.sizes: dict[str, int] = {}
        self.live: dict[str, bool] = {}
        self.state = np.ones(1, dtype=np.complex128)
        self.probability = 1.0
        self.hit_rec = False

    def clone(self) -> "_DenseRun":
        other = _DenseRun.__new__(_DenseRun)
        other.sigma = dict(self.sigma)
        other.qubits = list(self.qubits)
        other.kinds = dict(self.kinds)
        other.sizes = dict(self.sizes)
        other.live = dict(self.live)
        other.state = self.state.copy()
        other.probability = self.probability
        other.hit_rec = self.hit_rec
        return other

    def pos(self, q: QubitId) -> int:
        try:
            return self.qubits.index(q)
        except ValueError:
            raise DenseError(f"{q} is not allocated") from None

    def alloc(self, name: str, size: int, cap: int) -> None:
        if name in self.sizes:
            raise DenseError(f"register {name} redeclared")
        if len(self.qubits) + size > cap:
            raise WidthCapExceeded(
                f"{len(self.qubits) + size} qubits > cap {cap}")
        self.sizes[name] = size
        self.live[name] = True
        for q in register(name, size):
            self.qubits.append(q)
            self.kinds[q] = "bit"
        self.state = np.concatenate(
            [self.state, np.zeros(self.state.size * ((1 << size) - 1),
                                  dtype=np.complex128)])

    def check_norm(self) -> None:
        norm = float(np.sum(np.abs(self.state) ** 2))
        if abs(norm - 1.0) > NORM_TOL:
            raise DenseError(f"state norm drifted to {norm}")


def _mu_permutation(run: _DenseRun, op) -> np.ndarray:
    """Inverse index permutation realizing the classical oracle bijection
    on this layout: new_state[target] = old_state[inv[target]].

    Indices where the classical function is undefined (modmul input at or
    above the modulus, say) must carry no amplitude; they complete the
    bijection as fixed points.
    """
    n = len(run.qubits)
    perm = np.empty(1 << n, dtype=np.int64)
    poison: list[int] = []
    for idx in range(1 << n):
        ket = BasisKet({q: Ket((idx >> k) & 1)
                        for k, q in enumerate(run.qubits)})
        try:
            classical_apply(op, ket, run.sizes)
        except OracleError:
            if abs(run.state[idx]) > 1e-12:
                raise DenseError(
                    f"oracle undefined on populated basis state {idx:#x}")
            poison.append(idx)
            perm[idx] = -1
            continue
        tgt = 0
        for k, q in enumerate(run.qubits):
            tgt |= ket.read_bit(q) << k
        perm[idx] = tgt
    if poison:
        image = set(int(t) for t in perm if t >= 0)
        unused = sorted(set(range(1 << n)) - image)
        if set(unused) == set(poison):
            for idx in poison:
                perm[idx] = idx
        else:
            for idx, tgt in zip(poison, unused):
                perm[idx] = tgt
    if np.unique(perm).size != perm.size:
        raise DenseError("oracle is not injective on this layout")
    inv = np.empty_like(perm)
    inv[perm] = np.arange(1 << n)
    return inv


def _dense_instr(run: _DenseRun, instr: Instruction,
                 controls: list[int]) -> None:
    if isinstance(instr, Mu):
        if isinstance(instr.op, Skip):
            return
        perm = _mu_permutation(run, instr.op)
        if controls:
            idx = np.arange(run.state.size)
            active = np.ones(run.state.size, dtype=bool)
            for c in controls:
                active &= ((idx >> c) & 1) == 1
            sel = np.where(active, perm, idx)
            if np.unique(sel).size != sel.size:
                raise DenseError("controlled oracle is not a permutation")
            out = np.empty_like(run.state)
            out[idx] = run.state[sel]
            run.state = out
        else:
            run.state = run.state[perm]
        return
    if isinstance(instr, RyGate):
        q = ref_single(instr.q, run.sizes)
        turns = float(const_eval(instr.angle))
        p = run.pos(q)
        if run.kinds[q] == "rot":
            run.state = _apply_controlled_1q(run.state, _ry_matrix(turns),
                                             p, controls)
        elif run.kinds[q] == "bit":
            if controls:
                raise DenseError("controlled rotation on a bit-definite qubit")
            # |0> -> rot(r), |1> -> rot(3/4 - r); columns of the basis map
            th = 2.0 * math.pi * turns
            m = np.array([[math.cos(th), -math.sin(th)],
                          [math.sin(th), -math.cos(th)]], dtype=np.complex128)
            run.state = _apply_1q(run.state, m, p)
            run.kinds[q] = "rot"
        else:
            raise DenseError(f"ry on {q} whose qubit is in superposition")
        return
    if isinstance(instr, Ctrl):
        c = ref_single(instr.ctrl, run.sizes)
        if run.kinds[c] == "rot":
            raise DenseError(f"control {c} is not bit-definite")
        _dense_instr(run, instr.body, controls + [run.pos(c)])
        return
    if isinstance(instr, ISeq):
        for it in instr.items:
            _dense_instr(run, it, controls)
        return
    raise DenseError(f"cannot simulate instruction {instr!r}")


def _dense_exec(run: _DenseRun, conts: list[Program], cap: int,
                out: list[DenseBranch]) -> None:
    """Run the continuation list, forking the run at measurements."""
    while conts:
        p, conts = conts[0], conts[1:]
        if isinstance(p, Ins):
            unitary = not _has_bit_ry(run, p.instr)
            _dense_instr(run, p.instr, [])
            if unitary:
                run.check_norm()
        elif isinstance(p, New):
            run.alloc(p.name, const_int(p.size), cap)
        elif isinstance(p, Had):
            if p.ref.index is None:
                qs = register(p.ref.name, run.sizes[p.ref.name])
            else:
                qs = (ref_single(p.ref, run.sizes),)
            for q in qs:
                run.state = _apply_1q(run.state, H_MATRIX, run.pos(q))
                run.kinds[q] = "had"
            run.check_norm()
        elif isinstance(p, MeasureLet):
            if p.reg not in run.sizes or not run.live[p.reg]:
                raise DenseError(f"cannot measure register {p.reg!r}")
            positions = [run.pos(q) for q in register(p.reg, run.sizes[p.reg])]
            keep = [k for k in range(len(run.qubits)) if k not in positions]
            idx = np.arange(run.state.size)
            for value in range(1 << len(positions)):
                sel = np.ones(run.state.size, dtype=bool)
                for k, pos in enumerate(positions):
                    sel &= ((idx >> pos) & 1) == ((value >> k) & 1)
                prob = float(np.sum(np.abs(run.state[sel]) ** 2))
                if prob <= 1e-15:
                    continue
                sub = run.clone()
                sub.probability *= prob
                sub.state = run.state[sel] / math.sqrt(prob)
                sub.qubits = [run.qubits[k] for k in keep]
                for q in register(p.reg, run.sizes[p.reg]):
                    sub.kinds.pop(q, None)
                sub.live[p.reg] = False
                sub.sigma[p.var] = value
                _dense_exec(sub, [p.body] + conts, cap, out)
            return
        elif isinstance(p, If):
            var, want = p.guard.var, const_int(p.guard.value)
            if var not in run.sigma:
                raise DenseError(f"guard variable {var!r} is unbound")
            conts = [p.then if run.sigma[var] == want else p.els] + conts
        elif isinstance(p, PSeq):
            conts = list(p.items) + conts
        elif isinstance(p, CallRec):
            run.hit_rec = True
            break
        else:
            raise DenseError(f"cannot simulate program node {p!r}")
    out.append(DenseBranch(sigma=dict(run.sigma), probability=run.probability,
                           qubits=tuple(run.qubits), state=run.state,
                           hit_rec=run.hit_rec))


def _has_bit_ry(run: _DenseRun, instr: Instruction) -> bool:
    if isinstance(instr, RyGate):
        q = ref_single(instr.q, run.sizes)
        return run.kinds.get(q) == "bit"
    if isinstance(instr, Ctrl):
        return _has_bit_ry(run, instr.body)
    if isinstance(instr, ISeq):
        return any(_has_bit_ry(run, it) for it in instr.items)
    return False


def simulate_pqasm_dense(p: Program, cap: int = WIDTH_CAP) -> list[DenseBranch]:
    """Reference semantics: exact branch enumeration over measurements.

    Recursion markers terminate their branch with hit_rec set, matching the
    truncating mode of the symbolic interpreter.
    """
    run = _DenseRun()
    out: list[DenseBranch] = []
    _dense_exec(run, [p], cap, out)
    return out


# ---------------------------------------------------------------------------
# Comparison helpers
# ---------------------------------------------------------------------------


def states_close(u: np.ndarray, v: np.ndarray, tol: float = NORM_TOL) -> bool:
    """Equality up to global phase."""
    if u.shape != v.shape:
        return False
    k = int(np.argmax(np.abs(u)))
    if abs(u[k]) < tol and abs(v[k]) < tol:
        return bool(np.allclose(u, v, atol=tol))
    if abs(v[k]) < 1e-300:
        return False
    phase = u[k] / v[k]
    if abs(abs(phase) - 1.0) > tol:
        return False
    return bool(np.max(np.abs(u - phase * v)) <= tol)


def compare_distributions(a: dict, b: dict, tol: float = NORM_TOL) -> bool:
    keys = set(a) | set(b)
    return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= tol for k in keys)


def ket_to_vector(ket: BasisKet, qubits: tuple[QubitId, ...]) -> np.ndarray:
    """Embed one symbolic basis ket into the dense index convention."""
    idx = 0
    for k, q in enumerate(qubits):
        idx |= ket.read_bit(q) << k
    vec = np.zeros(1 << len(qubits), dtype=np.complex128)
    vec[idx] = amplitude_eval(ket.amplitude)
    return vec
