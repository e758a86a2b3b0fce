"""Per-step wall-clock and operation accounting, and the structured step log.

One self-describing ``STEP key=value ...`` text line per PM step is the
interface every reporting tool parses: required keys first, then per-kernel
operation counters (``ops_<kernel>_<class>``) which readers must tolerate
not knowing.  Phase times cover long-range solve, tree build, short-range
solve, in-situ analysis, and synchronous I/O; ``t_other`` absorbs whatever
the phases missed so the line always sums to the step time.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

PHASES = ("long_range", "tree_build", "short_range", "analysis", "io")

REQUIRED_KEYS = (
    "step", "t_long_range", "t_tree_build", "t_short_range", "t_analysis",
    "t_io", "t_other", "t_total", "bytes_tier1", "bw_tier1", "bytes_tier2",
    "bw_tier2", "particles_per_s",
)


@dataclass
class StepRecord:
    """One parsed step-log line."""

    step: int
    phases: dict
    t_other: float
    t_total: float
    bytes_tier1: int
    bw_tier1: float
    bytes_tier2: int
    bw_tier2: float
    particles_per_s: float
    extras: dict = field(default_factory=dict)


class LogParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


def format_step_line(rec: StepRecord) -> str:
    parts = [f"STEP step={rec.step}"]
    for ph in PHASES:
        parts.append(f"t_{ph}={rec.phases.get(ph, 0.0):.6f}")
    parts.append(f"t_other={rec.t_other:.6f}")
    parts.append(f"t_total={rec.t_total:.6f}")
    parts.append(f"bytes_tier1={rec.bytes_tier1}")
    parts.append(f"bw_tier1={rec.bw_tier1:.6g}")
    parts.append(f"bytes_tier2={rec.bytes_tier2}")
    parts.append(f"bw_tier2={rec.bw_tier2:.6g}")
    parts.append(f"particles_per_s={rec.particles_per_s:.6g}")
    for key in sorted(rec.extras):
        parts.append(f"{key}={rec.extras[key]:.6g}" if isinstance(rec.extras[key], float)
                     else f"{key}={rec.extras[key]}")
    return " ".join(parts)


def parse_step_line(line: str, lineno: int = 0) -> StepRecord:
    """Parse one STEP record; missing required keys are an error, unknown
    extra keys are retained."""
    tokens = line.strip().split()
    if not tokens or tokens[0] != "STEP":
        raise LogParseError(lineno, "not a STEP record")
    kv = {}
    for tok in tokens[1:]:
        if "=" not in tok:
            raise LogParseError(lineno, f"malformed token {tok!r}")
        key, _, value = tok.partition("=")
        kv[key] = value
    missing = [k for k in REQUIRED_KEYS if k not in kv]
    if missing:
        raise LogParseError(lineno, f"missing required keys: {', '.join(missing)}")
    try:
        phases = {ph: float(kv[f"t_{ph}"]) for ph in PHASES}
        rec = StepRecord(
            step=int(kv["step"]), phases=phases,
            t_other=float(kv["t_other"]), t_total=float(kv["t_total"]),
            bytes_tier1=int(kv["bytes_tier1"]), bw_tier1=float(kv["bw_tier1"]),
            bytes_tier2=int(kv["bytes_tier2"]), bw_tier2=float(kv["bw_tier2"]),
            particles_per_s=float(kv["particles_per_s"]))
    except ValueError as exc:
        raise LogParseError(lineno, f"bad value: {exc}") from exc
    known = {f"t_{ph}" for ph in PHASES} | set(REQUIRED_KEYS)
    for key, value in kv.items():
        if key not in known:
            try:
                rec.extras[key] = float(value)
            except ValueError:
                rec.extras[key] = value
    return rec


def parse_step_log(text: str) -> list[StepRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("STEP"):
            records.append(parse_step_line(line, lineno))
    return records


class TimingLedger:
    """Collects phase times, I/O volumes, and kernel operation counters."""

    def __init__(self):
        self.records: list[StepRecord] = []
        self._current: dict | None = None
        self._step_t0 = 0.0

    def begin_step(self, step: int) -> None:
        self._current = {"step": step, "phases": {ph: 0.0 for ph in PHASES},
                         "bytes_tier1": 0, "bw_tier1": 0.0,
                         "bytes_tier2": 0, "bw_tier2": 0.0,
                         "extras": {}}
        self._step_t0 = time.perf_counter()

    @contextmanager
    def phase(self, name: str):
        assert self._current is not None and name in PHASES
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self._current["phases"][name] += time.perf_counter() - t0

    def add_io(self, bytes_tier1: int = 0, seconds_tier1: float = 0.0,
               bytes_tier2: int = 0, seconds_tier2: float = 0.0) -> None:
        cur = self._current
        cur["bytes_tier1"] += bytes_tier1
        if seconds_tier1 > 0:
            cur["bw_tier1"] = cur["bytes_tier1"] / max(seconds_tier1, 1e-12)
        cur["bytes_tier2"] += bytes_tier2
        if seconds_tier2 > 0:
            cur["bw_tier2"] = bytes_tier2 / max(seconds_tier2, 1e-12)

    def add_extras(self, **kw) -> None:
        self._current["extras"].update(kw)

    def add_kernel_stats(self, stats: dict) -> None:
        for name, entry in stats.items():
            for klass in ("adds", "muls", "fused", "special"):
                self._current["extras"][f"ops_{name}_{klass}"] = entry[klass]

    def end_step(self, n_particles: int) -> StepRecord:
        cur = self._current
        total = time.perf_counter() - self._step_t0
        named = sum(cur["phases"].values())
        other = max(total - named, 0.0)
        solver = cur["phases"]["long_range"] + cur["phases"]["short_range"]
        pps = n_particles / solver if solver > 0 else 0.0
        rec = StepRecord(step=cur["step"], phases=cur["phases"], t_other=other,
                         t_total=total, bytes_tier1=cur["bytes_tier1"],
                         bw_tier1=cur["bw_tier1"], bytes_tier2=cur["bytes_tier2"],
                         bw_tier2=cur["bw_tier2"], particles_per_s=pps,
                         extras=cur["extras"])
        self.records.append(rec)
        self._current = None
        return rec

    # -- aggregate metrics ---------------------------------------------------------

    def effective_tier2_bandwidth(self) -> float:
        """Total bytes moved divided by cumulative *synchronous* I/O time."""
        total_bytes = sum(r.bytes_tier1 + r.bytes_tier2 for r in self.records)
        sync_io = sum(r.phases["io"] for r in self.records)
        return total_bytes / sync_io if sync_io > 0 else 0.0

    def phase_totals(self) -> dict:
        out = {ph: sum(r.phases[ph] for r in self.records) for ph in PHASES}
        out["other"] = sum(r.t_other for r in self.records)
        out["total"] = sum(r.t_total for r in self.records)
        return out
