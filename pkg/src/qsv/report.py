"""Report rendering: CSV summaries plus matplotlib figures.

Every render function writes the delimited file and the figure side by side
in the requested directory and returns the paths it wrote. Figures use the
Agg backend so reports work headless.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional

from .validate import ValidationReport, wilson_interval


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def write_validation_report(report: ValidationReport, name: str, out_dir,
                            exact_rate: Optional[float] = None) -> list[Path]:
    """CSV summary + failure list, and a success-rate convergence figure
    with the 95% Wilson band (and the exact rate, when known)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    csv_path = out / f"{name}_validation.csv"
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "tests_run", "failures", "success_count",
                    "hit_rec_count", "success_rate", "wilson_low",
                    "wilson_high", "exact_rate", "seed", "elapsed_s"])
        w.writerow([name, report.tests_run, len(report.failures),
                    report.success_count, report.hit_rec_count,
                    f"{report.estimated_success_rate:.9f}",
                    f"{report.wilson[0]:.9f}", f"{report.wilson[1]:.9f}",
                    "" if exact_rate is None else f"{float(exact_rate):.9f}",
                    report.seed, f"{report.elapsed:.3f}"])
        if report.failures:
            w.writerow([])
            w.writerow(["failure_index", "draws", "sigma", "message"])
            for f in report.failures:
                w.writerow([f.index, f.draws, repr(f.sigma), f.message])
    written.append(csv_path)

    if report.success_bits:
        plt = _plt()
        xs, rates, lo, hi = [], [], [], []
        running = 0
        n = len(report.success_bits)
        stride = max(1, n // 400)
        for i, b in enumerate(report.success_bits, start=1):
            running += b
            if i % stride == 0 or i == n:
                xs.append(i)
                rates.append(running / i)
                lw, hw = wilson_interval(running, i)
                lo.append(lw)
                hi.append(hw)
        fig, ax = plt.subplots(figsize=(7, 4.2))
        ax.fill_between(xs, lo, hi, alpha=0.25, label="95% Wilson band")
        ax.plot(xs, rates, lw=1.2, label="observed rate")
        if exact_rate is not None:
            ax.axhline(float(exact_rate), ls="--", lw=1.0, color="k",
                       label=f"exact {float(exact_rate):.4f}")
        ax.set_xlabel("trials")
        ax.set_ylabel("success rate")
        ax.set_title(f"{name}: success-rate convergence")
        ax.legend(loc="best")
        fig.tight_layout()
        fig_path = out / f"{name}_convergence.png"
        fig.savefig(fig_path, dpi=120)
        plt.close(fig)
        written.append(fig_path)
    return written


def write_stats_report(rows: list[dict], out_dir,
                       name: str = "stats") -> list[Path]:
    """rows: per-program dicts with keys name, qubit_count, gate_count and
    optional per-kind counts. Writes the CSV table and a log-scale chart."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    kinds = sorted({k for r in rows for k in r.get("by_kind", {})})
    csv_path = out / f"{name}.csv"
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "qubit_count", "gate_count"] + kinds)
        for r in rows:
            w.writerow([r["name"], r["qubit_count"], r["gate_count"]]
                       + [r.get("by_kind", {}).get(k, 0) for k in kinds])
    written.append(csv_path)

    if rows:
        plt = _plt()
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 4.2))
        names = [r["name"] for r in rows]
        ax1.bar(names, [r["qubit_count"] for r in rows], color="#4878d0")
        ax1.set_ylabel("qubits")
        ax1.set_title("qubit count")
        ax1.tick_params(axis="x", rotation=30)
        gates = [max(r["gate_count"], 1) for r in rows]
        ax2.bar(names, gates, color="#ee854a")
        ax2.set_yscale("log")
        ax2.set_ylabel("gates (log)")
        ax2.set_title("gate count")
        ax2.tick_params(axis="x", rotation=30)
        fig.tight_layout()
        fig_path = out / f"{name}.png"
        fig.savefig(fig_path, dpi=120)
        plt.close(fig)
        written.append(fig_path)
    return written
