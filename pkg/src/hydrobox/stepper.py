"""Subcycled short-range integration of one PM interval.

Hierarchical kick-drift-kick: every particle drifts at the finest cadence,
while pair interactions are evaluated and applied as impulses at the cadence
of the deeper (finer) of the two leaves.  Each unordered leaf pair is
evaluated once per due boundary and the quantized impulse is scattered to
both sides with opposite signs, so the short-range sector transfers momentum
in exactly cancelling integer units: the per-boundary sum of impulse quanta
is zero bitwise, for the whole run.

Kick schedule (K = deepest level, n_fine = 2^K fine steps of dt_pm / 2^K):
boundary s = 0 and s = n_fine apply half kicks at every level; an interior
boundary s applies full kicks for every level >= K - trailing_zeros(s).
Positions are left unwrapped until the PM-barrier overload refresh so ghost
shells and chaining-mesh bins stay valid while particles cross box faces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .box import BoxGeometry
from .cmtree import (ChainingMesh, InteractionList, assemble_interaction_lists,
                     grow_bounding_boxes)
from .errors import EnergyError, HydroboxError
from .hydro import (TimestepHierarchy, compute_density, compute_hydro_accel,
                    refresh_eos_columns)
from .kernels import PairKernel
from .lane import EvalMode, eval_interaction_list
from .particles import ParticleSet


@dataclass
class ShortRangeContext:
    """Everything the subcycle needs besides the hierarchy itself."""

    particles: ParticleSet
    mesh: ChainingMesh
    box: BoxGeometry
    eos_gamma: float
    reach: float
    mode: str = EvalMode.DETERMINISTIC
    lane_width: int = 8
    workers: int = 1
    gravity_kernel: PairKernel | None = None
    hydro_enabled: bool = True
    visc_alpha: float = 1.0
    visc_beta: float = 2.0


@dataclass
class BoundaryRecord:
    s: int
    depth: int
    kick_scale: float
    pairs_per_level: dict


@dataclass
class SubcycleAudit:
    n_fine: int = 0
    n_boundaries: int = 0
    # exact per-axis maximum |sum of impulse quanta| over all boundaries
    max_momentum_quanta: int = 0
    boundary_log: list = field(default_factory=list)


def exact_column_sums(acc: np.ndarray) -> list[int]:
    """Exact int64-column sums (falls back to python ints near overflow)."""
    if acc.size == 0:
        return [0] * acc.shape[1]
    if np.abs(acc).max(initial=0) < (2**62) // max(acc.shape[0], 1):
        return [int(v) for v in acc.sum(axis=0, dtype=np.int64)]
    return [int(sum(int(v) for v in acc[:, c])) for c in range(acc.shape[1])]


def unordered_due_pairs(ilist: InteractionList, mesh: ChainingMesh):
    """Deduplicate the ordered active list into unordered pairs by pair level.

    An unordered pair is (leaf, leaf, image shift) with the shift negated
    when the leaf order flips, so both ordered directions collapse onto one
    entry; same-leaf image pairs canonicalize to a positive shift.
    """
    swap = ilist.leaf_a > ilist.leaf_b
    a = np.where(swap, ilist.leaf_b, ilist.leaf_a)
    b = np.where(swap, ilist.leaf_a, ilist.leaf_b)
    sh = np.where(swap[:, None], -ilist.shift, ilist.shift).astype(np.int64)
    # same-leaf image entries come in +/- mirror pairs: keep the + one
    same = a == b
    code = (sh[:, 0] * 3 + sh[:, 1]) * 3 + sh[:, 2]
    flip = same & (code < 0)
    sh[flip] *= -1
    key = ((a * mesh.n_leaves + b) * 27
           + (sh[:, 0] + 1) * 9 + (sh[:, 1] + 1) * 3 + (sh[:, 2] + 1))
    _, first = np.unique(key, return_index=True)
    a, b, sh = a[first], b[first], sh[first].astype(np.int8)
    level = np.maximum(mesh.leaf_level[a], mesh.leaf_level[b])
    return a, b, sh, level


def subcycle_pm_step(ctx: ShortRangeContext, hierarchy: TimestepHierarchy) -> SubcycleAudit:
    """Advance the rank's particles through one PM interval of short-range work."""
    p = ctx.particles
    mesh = ctx.mesh
    nf = hierarchy.n_fine
    delta = hierarchy.dt_pm / nf
    audit = SubcycleAudit(n_fine=nf)
    deterministic = ctx.mode == EvalMode.DETERMINISTIC
    have_gas = bool(np.any(p.gas_mask()))

    for s in range(nf + 1):
        if s > 0:
            grow_bounding_boxes(mesh, p)
        depth = 0 if (s == 0 or s == nf) else hierarchy.depth_at(s)
        kick_scale = 0.5 if (s == 0 or s == nf) else 1.0
        ilist = assemble_interaction_lists(mesh, ctx.reach, depth)

        state = p.state_matrix(ctx.eos_gamma)
        if ctx.hydro_enabled and have_gas and len(ilist):
            compute_density(p, mesh, state, ilist, mode=ctx.mode,
                            lane_width=ctx.lane_width, workers=ctx.workers)
            refresh_eos_columns(state, p, ctx.eos_gamma)

        pa, pb, psh, plevel = unordered_due_pairs(ilist, mesh)
        rec = BoundaryRecord(s=s, depth=depth, kick_scale=kick_scale, pairs_per_level={})
        kicks = []  # (dtk, force values, edot values or None)
        for m in np.unique(plevel):
            sel = plevel == m
            rec.pairs_per_level[int(m)] = int(sel.sum())
            sub = InteractionList(pa[sel], pb[sel], ilist.reach, depth, psh[sel])
            dtk = kick_scale * hierarchy.dt_level(int(m))
            boundary_quanta = [0, 0, 0]
            if ctx.gravity_kernel is not None:
                res = eval_interaction_list(ctx.gravity_kernel, sub, state, mesh,
                                            mode=ctx.mode, lane_width=ctx.lane_width,
                                            workers=ctx.workers, mirror=True,
                                            pshift=p.image_shift)
                acc = res.int_acc if deterministic else res.values
                p.fold_alias_rows(acc)
                if deterministic:
                    sums = exact_column_sums(acc)
                    boundary_quanta = [q + s2 for q, s2 in zip(boundary_quanta, sums)]
                    force = acc.astype(np.float64) / res.scales
                else:
                    force = acc
                kicks.append((dtk, force, None))
            if ctx.hydro_enabled and have_gas:
                force, edot, res = compute_hydro_accel(
                    p, mesh, state, sub, mode=ctx.mode, lane_width=ctx.lane_width,
                    workers=ctx.workers, mirror=True,
                    visc_alpha=ctx.visc_alpha, visc_beta=ctx.visc_beta)
                if deterministic:
                    acc = res.int_acc
                    p.fold_alias_rows(acc)
                    sums = exact_column_sums(acc[:, 0:3])
                    boundary_quanta = [q + s2 for q, s2 in zip(boundary_quanta, sums)]
                    vals = acc.astype(np.float64) / res.scales
                    force, edot = vals[:, 0:3], vals[:, 3]
                else:
                    both = np.column_stack([force, edot])
                    p.fold_alias_rows(both)
                    force, edot = both[:, 0:3], both[:, 3]
                kicks.append((dtk, force, edot))
            q = max(abs(v) for v in boundary_quanta)
            audit.max_momentum_quanta = max(audit.max_momentum_quanta, q)

        inv_m = 1.0 / p.mass
        total_force = np.zeros((p.n, 3))
        for dtk, force, edot in kicks:
            p.vel += force * (dtk * inv_m)[:, None]
            total_force += force
            if edot is not None:
                p.internal_energy += edot * (dtk * inv_m)
        if kicks and depth == 0:
            # full pair set evaluated: record the short-range acceleration
            # (driver adds the long-range part for the next level assignment)
            p.accel = total_force * inv_m[:, None]
        if ctx.hydro_enabled and have_gas:
            gas_u = p.internal_energy[p.gas_mask()]
            if np.any(gas_u < 0):
                raise EnergyError("negative internal energy after kick "
                                  f"(min u = {gas_u.min():.3e}); timestep too large")
        p.sync_alias_ghosts()
        audit.boundary_log.append(rec)
        audit.n_boundaries += 1

        if s < nf:
            p.pos += p.vel * delta
            p.sync_alias_ghosts()
    return audit
