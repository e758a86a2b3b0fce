"""Quick-look matplotlib figures for bench tables and step logs.

Each renderer is a pure file-to-file transform: deterministic layout, with
the input's CRC32C embedded in the PNG metadata for provenance audits.
"""

from __future__ import annotations

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .crc import crc32c
from .ledger import StepRecord, PHASES

plt.rcParams["figure.figsize"] = (6.4, 4.8)
plt.rcParams["font.size"] = 9
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3


def _save(fig, out_path: str, input_text: str, extra_meta: dict | None = None):
    meta = {"input-crc32c": f"{crc32c(input_text.encode()):08x}"}
    for key, value in (extra_meta or {}).items():
        meta[key] = str(value)
    fig.savefig(out_path, dpi=110, metadata=meta)
    plt.close(fig)


def plot_scaling(rows: list[dict], out_path: str, input_text: str = "") -> None:
    """Workers vs particles/s and solver time, with an efficiency subpanel."""
    workers = [r["workers"] for r in rows]
    pps = [r["particles_per_s"] for r in rows]
    tsol = [r["mean_solver_s"] for r in rows]
    eff = [r["efficiency"] for r in rows]
    mode = rows[0]["mode"] if rows else "?"

    fig, (ax, ax2) = plt.subplots(2, 1, sharex=True, height_ratios=[3, 1])
    ax.plot(workers, pps, "o-", color="tab:blue", label="particles/s")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_ylabel("particles / s")
    axr = ax.twinx()
    axr.plot(workers, tsol, "s--", color="tab:red", label="solver time")
    axr.set_yscale("log")
    axr.set_ylabel("mean solver s / step")
    ax.set_title(f"{mode} scaling")
    ax2.plot(workers, eff, "o-", color="tab:green")
    ax2.axhline(1.0, color="gray", lw=0.8)
    ax2.set_ylim(0, 1.15)
    ax2.set_xlabel("workers")
    ax2.set_ylabel("efficiency")
    _save(fig, out_path, input_text,
          {"rows": len(rows), "mode": mode})


def plot_timeline(records: list[StepRecord], out_path: str,
                  input_text: str = "") -> None:
    """Stacked cumulative phase times plus an I/O bandwidth / volume panel."""
    steps = [r.step for r in records]
    cum = {}
    for ph in PHASES + ("other",):
        series = [r.phases.get(ph, 0.0) if ph != "other" else r.t_other
                  for r in records]
        cum[ph] = np.cumsum(series)
    fig, (ax, ax2) = plt.subplots(2, 1, sharex=True, height_ratios=[2, 1])
    bottom = np.zeros(len(records))
    for ph in PHASES + ("other",):
        ax.fill_between(steps, bottom, bottom + cum[ph], label=ph, alpha=0.8)
        bottom = bottom + cum[ph]
    ax.set_ylabel("cumulative seconds")
    ax.legend(fontsize=7, ncol=3)

    bw1 = [r.bw_tier1 for r in records]
    bw2 = [r.bw_tier2 for r in records]
    total_bytes = np.cumsum([r.bytes_tier1 + r.bytes_tier2 for r in records])
    if any(b > 0 for b in bw1 + bw2):
        ax2.plot(steps, bw1, label="tier-1 B/s", color="tab:blue")
        ax2.plot(steps, bw2, label="tier-2 B/s", color="tab:orange")
        ax2.set_yscale("log")
    ax2b = ax2.twinx()
    ax2b.plot(steps, total_bytes, color="tab:red", alpha=0.6, label="total bytes")
    ax2.set_xlabel("PM step")
    ax2.set_ylabel("bandwidth")
    ax2b.set_ylabel("bytes written")
    ax2.legend(fontsize=7)
    totals = {f"sum_t_{ph}": float(cum[ph][-1]) for ph in PHASES} if records else {}
    totals["sum_bytes"] = int(total_bytes[-1]) if records else 0
    _save(fig, out_path, input_text, totals)


def plot_utilization(report: dict, out_path: str, input_text: str = "") -> None:
    """Overlaid per-worker operation-rate histograms for each workload regime."""
    fig, ax = plt.subplots()
    colors = {"homogeneous": "tab:blue", "clustered": "tab:red",
              "clustered_flat": "tab:green"}
    medians = {}
    for case, data in report.items():
        rates = np.array(sorted(data["worker_rates"].values()), dtype=np.float64)
        if rates.size == 0:
            continue
        ax.hist(rates, bins=max(4, rates.size), alpha=0.45,
                label=case, color=colors.get(case))
        med = float(np.median(rates))
        medians[f"median_{case}"] = med
        ax.axvline(med, color=colors.get(case), ls="--", lw=1)
    ax.set_xlabel("per-worker operation rate (ops/s)")
    ax.set_ylabel("workers")
    ax.legend(fontsize=8)
    _save(fig, out_path, input_text, medians)
