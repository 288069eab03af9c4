"""Command-line front end. `qsv <subcommand> [file.pq] [flags]`.

check      parse, desugar, and type a program; diagnostics name the rule
run        execute once under the symbolic interpreter, restarting on rec
validate   property-based validation against the file's #spec pragma
estimate   success-rate estimation, exact enumeration or sampled
compile    lower one retry round to OpenQASM 2.0
simulate   dense reference semantics, source level or compiled circuit
stats      qubit and gate counts for compiled programs
examples   list, show, or extract the packaged case studies

Every subcommand takes --json; the payloads are documented in
docs/report.md and carry a `schema` tag so consumers can pin versions.
Exit codes: 0 success, 1 validation found failing trials, 2 usage,
parse, type, shape, or compile errors. Subcommands that take --seed
fall back to the QSV_SEED environment variable, then to 0.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional

from .compiler import emit_openqasm, gate_stats, translate
from .core import Ket, QsvError, Rot, SymbolicState, amplitude_eval, register
from .dense import (WIDTH_CAP, outcome_distribution, simulate_circuit,
                    simulate_pqasm_dense)
from .interp import Rng, run
from .lang import SourceFile, desugar
from .parse import PqSyntaxError, parse
from .specs import parse_spec
from .typecheck import type_program
from .validate import (EXACT_DRAW_LIMIT, estimate_success_rate,
                       guard_from_program, split_program, validate)


class CliError(QsvError):
    """Bad invocation: missing files, missing pragmas, bad flag values."""


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _load(path: str) -> SourceFile:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror or e}") from None
    return parse(text, filename=path)


def _seed(args: argparse.Namespace) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("QSV_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"QSV_SEED must be an integer, got {env!r}") from None
    return 0


def _spec_of(sf: SourceFile, path: str):
    text = sf.meta.get("spec")
    if not text:
        raise CliError(f"{path} has no #spec pragma to validate against")
    return parse_spec(text)


def _emit(args: argparse.Namespace, payload: dict, text: str) -> None:
    if args.json:
        json.dump(payload, sys.stdout, indent=2, default=str)
        sys.stdout.write("\n")
    else:
        print(text)


def _render_registers(state: SymbolicState) -> dict:
    """Live registers as msb-first bit strings; rotation qubits marked `r`."""
    out: dict = {}
    for name in sorted(state.kinds.sizes):
        if not state.kinds.live(name):
            continue
        qs = register(name, state.kinds.sizes[name])
        chars, rots, all_ket = [], {}, True
        for q in qs:
            st = state.ket.qubits.get(q)
            if isinstance(st, Ket):
                chars.append(str(st.bit))
            elif isinstance(st, Rot):
                chars.append("r")
                rots[repr(q)] = str(st.angle.turns)
                all_ket = False
            else:
                chars.append("?")
                all_ket = False
        entry: dict = {"bits": "".join(reversed(chars))}
        if all_ket:
            entry["value"] = state.ket.read_value(qs)
        if rots:
            entry["rot_turns"] = rots
        out[name] = entry
    return out


def _render_amplitude(state: SymbolicState) -> dict:
    amp = state.ket.amplitude
    z = amplitude_eval(amp)
    out = {"re": z.real, "im": z.imag, "mag2": abs(z) ** 2}
    if amp.mag2_rational is not None:
        out["mag2_exact"] = str(amp.mag2_rational)
    if state.pending_norm:
        out["pending_norm"] = [list(p) for p in state.pending_norm]
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_check(args: argparse.Namespace) -> int:
    sf = _load(args.file)
    program = desugar(sf.program)
    ctx = type_program(program)
    regs = {name: ctx.kinds.sizes[name] for name in sorted(ctx.kinds.sizes)}
    total = sum(regs.values())
    payload = {"schema": "qsv/check/1", "file": args.file, "ok": True,
               "registers": regs, "qubits": total,
               "measured": sorted(ctx.kinds.measured)}
    _emit(args, payload,
          f"ok {args.file}: {len(regs)} registers, {total} qubits")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    sf = _load(args.file)
    program = desugar(sf.program)
    type_program(program)
    trace = run(program, Rng(_seed(args)), fuel=args.fuel, follow_rec=True)
    state = trace.final
    rounds = 1 + sum(1 for name, _ in trace.steps if name == "S-Rec")
    payload = {"schema": "qsv/run/1", "file": args.file, "seed": _seed(args),
               "rounds": rounds, "sigma": dict(state.sigma),
               "registers": _render_registers(state),
               "amplitude": _render_amplitude(state)}
    lines = [f"run {args.file}: {rounds} round(s), seed {_seed(args)}"]
    for var, val in state.sigma.items():
        lines.append(f"  measured {var} = {val}")
    for name, entry in payload["registers"].items():
        desc = f"|{entry['bits']}>"
        if "value" in entry:
            desc += f" = {entry['value']}"
        if "rot_turns" in entry:
            rots = ", ".join(f"{q}: {t} turns"
                             for q, t in entry["rot_turns"].items())
            desc += f" ({rots})"
        lines.append(f"  {name} {desc}")
    _emit(args, payload, "\n".join(lines))
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    sf = _load(args.file)
    program = desugar(sf.program)
    type_program(program)
    spec = _spec_of(sf, args.file)
    seed = _seed(args)
    report = validate(program, spec, n_tests=args.tests, seed=seed,
                      jobs=args.jobs, fuel=args.fuel)
    name = sf.meta.get("name", Path(args.file).stem)
    exact: Optional[Fraction] = None
    split = split_program(program)
    if len(split.had_qubits) <= min(args.exact_limit, EXACT_DRAW_LIMIT):
        exact = estimate_success_rate(program, guard_from_program(program),
                                      mode="exact")
    written: list[str] = []
    if args.report_dir:
        from .report import write_validation_report
        written = [str(p) for p in write_validation_report(
            report, name, args.report_dir,
            exact_rate=None if exact is None else float(exact))]
    lo, hi = report.wilson
    payload = {"schema": "qsv/validate/1", "file": args.file, "name": name,
               "seed": seed, "tests_run": report.tests_run,
               "failures": [{"index": f.index, "draws": f.draws,
                             "sigma": f.sigma, "message": f.message}
                            for f in report.failures[:args.max_failures]],
               "failure_count": len(report.failures),
               "success_count": report.success_count,
               "hit_rec_count": report.hit_rec_count,
               "success_rate": report.estimated_success_rate,
               "wilson95": [lo, hi],
               "exact_rate": None if exact is None else str(exact),
               "elapsed_s": report.elapsed, "passed": report.passed,
               "reports": written}
    lines = [(f"validate {args.file}: {report.tests_run} tests, "
              f"{len(report.failures)} failures, "
              f"rate {report.estimated_success_rate:.4f} "
              f"(95% CI [{lo:.4f}, {hi:.4f}]), "
              f"{report.hit_rec_count} rec, {report.elapsed:.2f}s, seed {seed}")]
    if exact is not None:
        lines.append(f"  exact success rate {exact} = {float(exact):.6f}")
    for f in report.failures[:args.max_failures]:
        lines.append(f"  FAIL trial {f.index} draws={f.draws or '-'} "
                     f"sigma={f.sigma}: {f.message}")
    if len(report.failures) > args.max_failures:
        lines.append(f"  ... {len(report.failures) - args.max_failures} more")
    for p in written:
        lines.append(f"  wrote {p}")
    lines.append("PASS" if report.passed else "FAIL")
    _emit(args, payload, "\n".join(lines))
    return 0 if report.passed else 1


def _cmd_estimate(args: argparse.Namespace) -> int:
    sf = _load(args.file)
    program = desugar(sf.program)
    type_program(program)
    guard = guard_from_program(program)
    payload: dict = {"schema": "qsv/estimate/1", "file": args.file,
                     "mode": args.mode,
                     "guard": None if guard is None else list(guard)}
    if args.mode == "exact":
        rate = estimate_success_rate(program, guard, mode="exact")
        payload.update(rate=str(rate), rate_float=float(rate))
        text = f"estimate {args.file}: exact rate {rate} = {float(rate):.6f}"
    else:
        seed = _seed(args)
        rate, (lo, hi) = estimate_success_rate(
            program, guard, mode="sampled", n_samples=args.samples, seed=seed)
        payload.update(rate_float=rate, wilson95=[lo, hi],
                       samples=args.samples, seed=seed)
        text = (f"estimate {args.file}: sampled rate {rate:.4f} "
                f"(95% CI [{lo:.4f}, {hi:.4f}], {args.samples} samples, "
                f"seed {seed})")
    _emit(args, payload, text)
    return 0


def _cmd_compile(args: argparse.Namespace) -> int:
    sf = _load(args.file)
    program = desugar(sf.program)
    type_program(program)
    circ, _ = translate(program)
    qasm = emit_openqasm(circ)
    stats = gate_stats(circ)
    if args.output:
        Path(args.output).write_text(qasm)
    payload = {"schema": "qsv/compile/1", "file": args.file,
               "output": args.output, **stats}
    if args.json:
        payload["openqasm"] = qasm
        _emit(args, payload, "")
    elif args.output:
        print(f"compile {args.file}: {stats['qubit_count']} qubits, "
              f"{stats['gate_count']} gates -> {args.output}")
    else:
        sys.stdout.write(qasm)
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    sf = _load(args.file)
    program = desugar(sf.program)
    type_program(program)
    if args.circuit:
        circ, _ = translate(program)
        branches = simulate_circuit(circ, cap=args.cap)
        dist = outcome_distribution(branches)
        rows = [{"outcomes": dict(key), "probability": p}
                for key, p in sorted(dist.items())]
        payload = {"schema": "qsv/simulate/1", "file": args.file,
                   "level": "circuit", "width": circ.width, "branches": rows}
        lines = [f"simulate {args.file} (compiled circuit, {circ.width} qubits)"]
        for row in rows:
            lines.append(f"  p={row['probability']:.6f}  {row['outcomes']}")
    else:
        branches = simulate_pqasm_dense(program, cap=args.cap)
        rows = []
        for br in sorted(branches, key=lambda b: sorted(b.sigma.items())):
            row = {"sigma": dict(br.sigma), "probability": br.probability,
                   "hit_rec": br.hit_rec, "qubits": [repr(q) for q in br.qubits]}
            if args.state:
                row["state"] = [[z.real, z.imag] for z in br.state]
            rows.append(row)
        payload = {"schema": "qsv/simulate/1", "file": args.file,
                   "level": "source", "branches": rows}
        lines = [f"simulate {args.file} (source semantics)"]
        for row in rows:
            tag = " rec" if row["hit_rec"] else ""
            lines.append(f"  p={row['probability']:.6f}  sigma={row['sigma']}"
                         f"{tag}  ({len(row['qubits'])} live qubits)")
    _emit(args, payload, "\n".join(lines))
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    rows = []
    for path in args.files:
        sf = _load(path)
        program = desugar(sf.program)
        type_program(program)
        circ, _ = translate(program)
        row = {"name": sf.meta.get("name", Path(path).stem), "file": path,
               **gate_stats(circ)}
        rows.append(row)
    written: list[str] = []
    if args.report_dir:
        from .report import write_stats_report
        written = [str(p) for p in write_stats_report(rows, args.report_dir)]
    payload = {"schema": "qsv/stats/1", "programs": rows, "reports": written}
    kinds = sorted({k for r in rows for k in r["by_kind"]})
    header = f"{'name':<16}{'qubits':>8}{'gates':>10}" + "".join(
        f"{k:>8}" for k in kinds)
    lines = [header]
    for r in rows:
        lines.append(f"{r['name']:<16}{r['qubit_count']:>8}"
                     f"{r['gate_count']:>10}" + "".join(
                         f"{r['by_kind'].get(k, 0):>8}" for k in kinds))
    for p in written:
        lines.append(f"wrote {p}")
    _emit(args, payload, "\n".join(lines))
    return 0


def _example_names() -> list[str]:
    root = resources.files("qsv") / "data"
    return sorted(p.name[:-3] for p in root.iterdir() if p.name.endswith(".pq"))


def _cmd_examples(args: argparse.Namespace) -> int:
    root = resources.files("qsv") / "data"
    names = _example_names()
    if args.show:
        if args.show not in names:
            raise CliError(f"no packaged example {args.show!r}; "
                           f"have {', '.join(names)}")
        source = (root / f"{args.show}.pq").read_text()
        _emit(args, {"schema": "qsv/examples/1", "name": args.show,
                     "source": source}, source.rstrip("\n"))
        return 0
    if args.write:
        out = Path(args.write)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for name in names:
            dest = out / f"{name}.pq"
            dest.write_text((root / f"{name}.pq").read_text())
            paths.append(str(dest))
        _emit(args, {"schema": "qsv/examples/1", "written": paths},
              "\n".join(f"wrote {p}" for p in paths))
        return 0
    _emit(args, {"schema": "qsv/examples/1", "examples": names},
          "\n".join(names))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="qsv", description="state-preparation programs: type, run, "
        "validate, estimate, compile, simulate")
    sub = top.add_subparsers(dest="command", required=True)

    def add(name: str, fn, help_: str, file_arg: bool = True):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        p.add_argument("--json", action="store_true",
                       help="machine-readable output")
        if file_arg:
            p.add_argument("file", help="a .pq program")
        return p

    add("check", _cmd_check, "parse and type a program")

    p = add("run", _cmd_run, "execute once, restarting on rec")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fuel", type=int, default=10 ** 6,
                   help="total step budget across restarts")

    p = add("validate", _cmd_validate, "property-based validation")
    p.add_argument("--tests", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--fuel", type=int, default=10 ** 6)
    p.add_argument("--report-dir", default=None,
                   help="write CSV and convergence figure here")
    p.add_argument("--max-failures", type=int, default=10,
                   help="failures to print/embed")
    p.add_argument("--exact-limit", type=int, default=12,
                   help="compute the exact rate when Had qubits <= this")

    p = add("estimate", _cmd_estimate, "success-rate estimation")
    p.add_argument("--mode", choices=("exact", "sampled"), default="exact")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=None)

    p = add("compile", _cmd_compile, "emit OpenQASM 2.0")
    p.add_argument("-o", "--output", default=None)

    p = add("simulate", _cmd_simulate, "dense reference semantics")
    p.add_argument("--circuit", action="store_true",
                   help="simulate the compiled circuit instead of the source")
    p.add_argument("--cap", type=int, default=WIDTH_CAP,
                   help="refuse above this many live qubits")
    p.add_argument("--state", action="store_true",
                   help="include branch state vectors in --json output")

    p = add("stats", _cmd_stats, "qubit/gate counts", file_arg=False)
    p.add_argument("files", nargs="+", help=".pq programs")
    p.add_argument("--report-dir", default=None,
                   help="write stats.csv and a chart here")

    p = add("examples", _cmd_examples, "packaged case studies",
            file_arg=False)
    p.add_argument("--show", default=None, metavar="NAME")
    p.add_argument("--write", default=None, metavar="DIR")

    return top


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except PqSyntaxError as e:
        print(f"qsv: syntax error: {e}", file=sys.stderr)
        return 2
    except QsvError as e:
        print(f"qsv: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
