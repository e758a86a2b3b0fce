"""Run loop and operator surface.

One PM step is: overload refresh -> mesh/leaf build (once) -> smoothing
adaptation and timestep-level assignment -> long-range half-kick -> subcycled
short-range interval -> long-range solve at the drifted positions and second
half-kick -> in-situ analysis -> synchronous tier-1 checkpoint with
asynchronous tier-2 bleed and retirement.  Every step is a pure function of
the incoming particle state in deterministic mode, which makes kill/resume
equivalence a bitwise property.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass

import numpy as np

from . import lane
from .box import BoxGeometry
from .cmtree import build_mesh_and_leaves
from .config import SimConfig, config_hash
from .domain import build_overload, decompose, gather_owned, refresh_overload
from .errors import ConfigError, HydroboxError
from .gravity import (ForceSplit, deposit_cic, interpolate_force,
                      long_range_potential_energy, short_range_gravity_kernel,
                      solve_long_range)
from .hydro import adapt_smoothing_length, assign_timestep_levels
from .ic import make_clustered_ic, make_lattice_ic, make_sod_ic
from .insitu import (encode_halo_catalog, fof_find, halo_catalog_text,
                     power_spectrum)
from .ledger import TimingLedger, format_step_line
from .lane import EvalMode
from .particles import ParticleSet
from .stepper import ShortRangeContext, subcycle_pm_step
from .tiered_io import TieredStore

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    ledger: TimingLedger
    steps_completed: int
    final_step: int
    log_path: str
    store: TieredStore
    rank_sets: list


def make_initial_conditions(cfg: SimConfig, box: BoxGeometry) -> ParticleSet:
    if cfg.ic == "lattice":
        return make_lattice_ic(cfg.n_per_dim, box, cfg.perturbation_amplitude,
                               cfg.seed)
    if cfg.ic == "sod":
        return make_sod_ic(cfg.n_per_dim, box)
    if cfg.ic == "clustered":
        return make_clustered_ic(cfg.n_per_dim, box, cfg.seed)
    raise ConfigError(f"unknown ic '{cfg.ic}'")


class Simulation:
    """Owns the barrier schedule and wires the modules together."""

    def __init__(self, cfg: SimConfig, auto_recover: bool = False, fs=None):
        cfg.validate()
        self.cfg = cfg
        self.box = BoxGeometry(cfg.side_length)
        self.mode = EvalMode.DETERMINISTIC if cfg.deterministic else EvalMode.RELAXED
        os.makedirs(cfg.output_root, exist_ok=True)
        if not cfg.io.tier1_root:
            cfg.io.tier1_root = os.path.join(cfg.output_root, "tier1")
        if not cfg.io.tier2_root:
            cfg.io.tier2_root = os.path.join(cfg.output_root, "tier2")
        self.store = TieredStore(cfg.io, config_hash(cfg), fs=fs)
        self.ledger = TimingLedger()
        self.log_path = os.path.join(cfg.output_root, "steps.log")

        self.split = ForceSplit(r_s=cfg.split_scale, r_cut=cfg.r_cut)
        self.mesh_builds = 0
        self.flat_levels = False  # forced-deepest mode for regime studies

        min_extent = cfg.side_length / max(cfg.rank_grid)
        if self.cfg.enable_gravity and self.split.r_cut >= 0.4 * min_extent:
            raise ConfigError(
                f"short-range cutoff {self.split.r_cut:.4g} is too large for the "
                f"domain extent {min_extent:.4g}; raise pm_grid_n (finer PM cells "
                "shrink the force-split handover) or shrink force_split_scale")

        recovered = self.store.recover_latest() if auto_recover else None
        if recovered is not None:
            self.rank_sets, self.completed_step, _ = recovered
            log.info("recovered checkpoint at step %d", self.completed_step)
            self.n_global = sum(rs.n_owned for rs in self.rank_sets)
            h0 = self._h_max()
            self.domains = decompose(self.box, cfg.rank_grid,
                                     self._overload_width(h0))
        else:
            particles = make_initial_conditions(cfg, self.box)
            self.n_global = particles.n
            gas = particles.gas_mask()
            h0 = float(particles.smoothing[gas].max()) if np.any(gas) else 0.0
            self.domains = decompose(self.box, cfg.rank_grid,
                                     self._overload_width(h0))
            self.rank_sets, _ = build_overload(particles, self.domains, self.box,
                                               cfg.rank_grid)
            self.completed_step = -1
        self.softening = cfg.softening_for(self.n_global)
        log.info("rank layout %s, %d particles, overload width %.4g",
                 cfg.rank_grid, self.n_global, self.domains[0].overload_width)

    # -- geometry helpers -----------------------------------------------------------

    def _h_max(self) -> float:
        hs = [rs.smoothing[rs.gas_mask()] for rs in getattr(self, "rank_sets", [])
              if np.any(rs.gas_mask())]
        return max((float(h.max()) for h in hs if h.size), default=0.0)

    def _interaction_reach(self, h_max: float | None = None) -> float:
        reach = 0.0
        if self.cfg.enable_gravity:
            reach = max(reach, self.split.r_cut)
        if self.cfg.enable_hydro:
            reach = max(reach, 2.0 * (self._h_max() if h_max is None else h_max))
        if self.cfg.analysis_cadence > 0:
            reach = max(reach, self._linking_length())
        return reach

    def _linking_length(self) -> float:
        dbar = self.box.side_length / self.n_global ** (1.0 / 3.0)
        return self.cfg.fof_linking_factor * dbar

    def _overload_width(self, h_max: float) -> float:
        if self.cfg.overload_width > 0:
            return self.cfg.overload_width
        # derived from the interaction reach, with headroom for h growth
        base = self.split.r_cut if self.cfg.enable_gravity else 0.0
        if self.cfg.enable_hydro:
            base = max(base, 2.0 * h_max)
        base = max(base, self._linking_length() if self.cfg.analysis_cadence > 0 else 0.0)
        if base <= 0:
            raise ConfigError("cannot derive overload_width: no interactions enabled")
        return 1.25 * base

    def _bin_width(self, reach: float) -> float:
        # chaining-mesh bins must cover the reach; widen beyond the
        # configured PM-cell multiple when the force cutoff demands it
        return max(self.cfg.cm_bin_width, reach * (1 + 1e-9))

    # -- one PM step ------------------------------------------------------------------

    def advance_step(self, step: int) -> None:
        cfg = self.cfg
        ledger = self.ledger
        ledger.begin_step(step)
        lane.reset_kernel_stats()

        with ledger.phase("tree_build"):
            self.rank_sets, _ = refresh_overload(self.rank_sets, self.domains,
                                                 self.box, cfg.rank_grid)
            reach0 = self._interaction_reach()
            bin_width = self._bin_width(reach0)
            meshes = []
            for rs, dom in zip(self.rank_sets, self.domains):
                w = dom.overload_width
                mesh = build_mesh_and_leaves(rs, self.box, bin_width,
                                             cfg.max_leaf_size,
                                             dom.lo - w, dom.hi + w)
                meshes.append(mesh)
                self.mesh_builds += 1

        with ledger.phase("short_range"):
            if cfg.enable_hydro:
                w_min = min(dom.overload_width for dom in self.domains)
                cap_width = min(bin_width, w_min)
                for rs, mesh in zip(self.rank_sets, meshes):
                    adapt_smoothing_length(
                        rs, mesh, lambda rs=rs: rs.state_matrix(cfg.eos_gamma),
                        cfg.target_neighbors, cap_width, mode=self.mode,
                        lane_width=cfg.lane_width, workers=cfg.workers)
            reach = self._interaction_reach()
            width = min(dom.overload_width for dom in self.domains)
            if reach > width * (1 + 1e-9):
                raise HydroboxError(
                    f"interaction reach {reach:.4g} exceeds overload width "
                    f"{width:.4g}; widen overload_width or reduce smoothing")
            hierarchies = []
            for rs, mesh in zip(self.rank_sets, meshes):
                hierarchies.append(assign_timestep_levels(
                    rs, mesh, cfg.dt_pm, cfg.cfl_number, cfg.n_levels,
                    self.softening, cfg.eos_gamma, flat=self.flat_levels))

        pot_energy = 0.0
        if cfg.enable_gravity:
            with ledger.phase("long_range"):
                pot_energy = self._long_range_kick(0.5 * cfg.dt_pm)

        max_quanta = 0
        n_fine = 1
        with ledger.phase("short_range"):
            grav_kernel = (short_range_gravity_kernel(self.split, self.softening)
                           if cfg.enable_gravity else None)
            for rs, mesh, hierarchy in zip(self.rank_sets, meshes, hierarchies):
                ctx = ShortRangeContext(
                    particles=rs, mesh=mesh, box=self.box,
                    eos_gamma=cfg.eos_gamma, reach=reach, mode=self.mode,
                    lane_width=cfg.lane_width, workers=cfg.workers,
                    gravity_kernel=grav_kernel, hydro_enabled=cfg.enable_hydro)
                audit = subcycle_pm_step(ctx, hierarchy)
                max_quanta = max(max_quanta, audit.max_momentum_quanta)
                n_fine = max(n_fine, audit.n_fine)
                if self.mode == EvalMode.DETERMINISTIC and audit.max_momentum_quanta != 0:
                    raise HydroboxError("short-range momentum quanta did not cancel")
        ledger.add_extras(mom_quanta=max_quanta, n_fine=n_fine)

        if cfg.enable_gravity:
            with ledger.phase("long_range"):
                pot_energy = self._long_range_kick(0.5 * cfg.dt_pm)

        with ledger.phase("analysis"):
            if cfg.analysis_cadence > 0 and step % cfg.analysis_cadence == 0:
                self._run_analysis(step)

        with ledger.phase("io"):
            manifest = self.store.write_checkpoint(self.rank_sets, step)
            self.store.bleed_to_tier2(manifest)
            self.store.retire_old()
        t1 = [e for e in self.store.events if e["kind"] == "tier1_write"
              and e["step"] == step]
        t2 = [e for e in self.store.events if e["kind"] == "tier2_transfer"]
        ledger.add_io(bytes_tier1=sum(e["bytes"] for e in t1),
                      seconds_tier1=sum(e["seconds"] for e in t1),
                      bytes_tier2=sum(e["bytes"] for e in t2[-1:]),
                      seconds_tier2=sum(e["seconds"] for e in t2[-1:]))

        self._record_energies(pot_energy)
        ledger.add_kernel_stats(lane.kernel_stats())
        rec = ledger.end_step(self.n_global)
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(format_step_line(rec) + "\n")
        self.completed_step = step

    def _long_range_kick(self, dt: float) -> float:
        cfg = self.cfg
        owned = gather_owned(self.rank_sets)
        rho = deposit_cic(owned, cfg.pm_grid_n, self.box)
        fields, pot = solve_long_range(rho, self.split, self.box,
                                       want_potential=True)
        energy = 0.0
        for rs in self.rank_sets:
            acc = interpolate_force(fields, rs)
            rs.vel += acc * dt
            rs.accel += acc
            energy += long_range_potential_energy(pot, rs)
        self._last_density = rho
        return energy

    def _run_analysis(self, step: int) -> None:
        cfg = self.cfg
        groups = fof_find(self.rank_sets, self.box, self._linking_length(),
                          min_members=cfg.min_members,
                          overload_width=min(d.overload_width for d in self.domains))
        blob = encode_halo_catalog(groups, step)
        self.store.write_analysis(f"halos_step{step:06d}.hcat", blob)
        self.store.write_analysis(f"halos_step{step:06d}.tsv",
                                  halo_catalog_text(groups, step).encode())
        rho = getattr(self, "_last_density", None)
        if rho is None:
            rho = deposit_cic(gather_owned(self.rank_sets), cfg.pm_grid_n, self.box)
        k, pk, counts = power_spectrum(rho.values, self.box)
        lines = ["k\tpk\tmodes"]
        lines += [f"{k[i]:.9g}\t{pk[i]:.9g}\t{int(counts[i])}" for i in range(len(k))]
        self.store.write_analysis(f"pk_step{step:06d}.tsv",
                                  ("\n".join(lines) + "\n").encode())
        self.ledger.add_extras(n_halos=len(groups))

    def _record_energies(self, pot_energy: float) -> None:
        e_kin = e_int = 0.0
        for rs in self.rank_sets:
            own = rs.owned_mask()
            e_kin += 0.5 * float(np.sum(rs.mass[own] * np.sum(rs.vel[own]**2, axis=1)))
            e_int += float(np.sum(rs.mass[own] * rs.internal_energy[own]))
        self.ledger.add_extras(e_kin=e_kin, e_int=e_int, e_pot_long=pot_energy)

    # -- whole runs ---------------------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        if self.completed_step < 0:
            # initial checkpoint of the untouched IC state
            manifest = self.store.write_checkpoint(self.rank_sets, 0)
            self.store.bleed_to_tier2(manifest)
            self.completed_step = 0
        first = self.completed_step + 1
        for step in range(first, cfg.n_pm_steps + 1):
            self.advance_step(step)
        self.store.wait_transfers()
        self.store.retire_old()
        return RunResult(ledger=self.ledger, steps_completed=cfg.n_pm_steps,
                         final_step=self.completed_step, log_path=self.log_path,
                         store=self.store, rank_sets=self.rank_sets)


def run_simulation(cfg: SimConfig, auto_recover: bool = False, fs=None) -> RunResult:
    return Simulation(cfg, auto_recover=auto_recover, fs=fs).run()


# -- benchmark harnesses ----------------------------------------------------------------


def bench_scaling(cfg: SimConfig, mode: str, worker_counts: list[int],
                  steps: int = 5) -> list[dict]:
    """Strong/weak scaling over in-process workers on the homogeneous benchmark.

    Strong mode holds the total particle count fixed; weak mode holds the
    count per worker fixed.  Reports mean solver seconds per PM step (the
    first step is warm-up and excluded, so the default measures four steps,
    matching the run-measurement convention) and particles/s, with
    efficiency relative to the smallest worker count.
    """
    if mode not in ("strong", "weak"):
        raise ConfigError("scaling mode must be 'strong' or 'weak'")
    avail = os.cpu_count() or 1
    rows = []
    for w in worker_counts:
        if w > avail:
            log.warning("worker count %d exceeds machine parallelism %d", w, avail)
        c = SimConfig(**{**cfg.__dict__})
        c.io = type(cfg.io)(**cfg.io.__dict__)
        c.workers = w
        c.n_pm_steps = steps
        c.ic = "lattice"
        c.analysis_cadence = 0
        if mode == "weak":
            c.n_per_dim = max(2, round(cfg.n_per_dim * w ** (1.0 / 3.0)))
        c.output_root = os.path.join(cfg.output_root, f"bench_{mode}_w{w}")
        c.io.tier1_root = os.path.join(c.output_root, "tier1")
        c.io.tier2_root = os.path.join(c.output_root, "tier2")
        sim = Simulation(c)
        result = sim.run()
        recs = result.ledger.records[1:]  # skip the warm-up/compile step
        solver = [r.phases["long_range"] + r.phases["short_range"] for r in recs]
        mean_solver = float(np.mean(solver)) if solver else 0.0
        pps = sim.n_global / mean_solver if mean_solver > 0 else 0.0
        rows.append({"mode": mode, "workers": w, "particles": sim.n_global,
                     "pm_steps": steps, "mean_solver_s": mean_solver,
                     "particles_per_s": pps})
    base = rows[0]
    for row in rows:
        if mode == "strong":
            row["efficiency"] = (base["mean_solver_s"] * base["workers"]) / \
                (row["mean_solver_s"] * row["workers"]) if row["mean_solver_s"] > 0 else 0.0
        else:
            row["efficiency"] = row["particles_per_s"] / \
                (base["particles_per_s"] * row["workers"] / base["workers"]) \
                if base["particles_per_s"] > 0 else 0.0
    return rows


def scaling_table_text(rows: list[dict]) -> str:
    cols = ["mode", "workers", "particles", "pm_steps", "mean_solver_s",
            "particles_per_s", "efficiency"]
    lines = ["\t".join(cols)]
    for row in rows:
        lines.append("\t".join(f"{row[c]:.6g}" if isinstance(row[c], float)
                               else str(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


def parse_scaling_table(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split("\t")
    rows = []
    for ln in lines[1:]:
        vals = ln.split("\t")
        row = dict(zip(header, vals))
        for key in ("workers", "particles", "pm_steps"):
            row[key] = int(float(row[key]))
        for key in ("mean_solver_s", "particles_per_s", "efficiency"):
            row[key] = float(row[key])
        rows.append(row)
    return rows


def bench_regimes(cfg: SimConfig, steps: int = 2) -> dict:
    """Per-worker operation-rate distributions for three workload regimes.

    Runs fixed work on a homogeneous (early-time analog) state, a clustered
    (late-time analog) state, and the clustered state with every leaf forced
    to the deepest timestep level ('flat').  The utilization proxy per worker
    is counted kernel operations divided by the case's wall-clock time.
    """
    cases = [("homogeneous", "lattice", False), ("clustered", "clustered", False),
             ("clustered_flat", "clustered", True)]
    report = {}
    for name, ic, flat in cases:
        c = SimConfig(**{**cfg.__dict__})
        c.io = type(cfg.io)(**cfg.io.__dict__)
        c.ic = ic
        c.n_pm_steps = steps
        c.analysis_cadence = 0
        c.output_root = os.path.join(cfg.output_root, f"regime_{name}")
        c.io.tier1_root = os.path.join(c.output_root, "tier1")
        c.io.tier2_root = os.path.join(c.output_root, "tier2")
        sim = Simulation(c)
        sim.flat_levels = flat
        lane.reset_worker_ops()
        t0 = time.perf_counter()
        sim.run()
        wall = time.perf_counter() - t0
        ops = lane.worker_ops()
        rates = {w: ops.get(w, 0) / wall for w in range(c.workers)}
        report[name] = {"wall_s": wall, "worker_ops": ops, "worker_rates": rates}
    return report


def regime_report_text(report: dict) -> str:
    lines = ["case\tworker\tops\twall_s\trate"]
    for case, data in report.items():
        for w in sorted(data["worker_rates"]):
            lines.append(f"{case}\t{w}\t{data['worker_ops'].get(w, 0)}\t"
                         f"{data['wall_s']:.6g}\t{data['worker_rates'][w]:.6g}")
    return "\n".join(lines) + "\n"


def parse_regime_report(text: str) -> dict:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    out: dict = {}
    for ln in lines[1:]:
        case, worker, ops, wall, rate = ln.split("\t")
        entry = out.setdefault(case, {"wall_s": float(wall), "worker_ops": {},
                                      "worker_rates": {}})
        entry["worker_ops"][int(worker)] = int(float(ops))
        entry["worker_rates"][int(worker)] = float(rate)
    return out
