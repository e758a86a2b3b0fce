"""Chaining mesh of fixed bins holding shallow k-d leaves.

Built once per PM step: particles are reordered so every leaf owns a
contiguous index range, and per-leaf bounding boxes are only ever grown
between builds (never rebuilt mid-step).  Interaction lists pair each active
leaf with every leaf whose dilated bounding box comes within the kernel reach,
looking only at the leaf's bin and its 26 neighbors.

Bins live in the rank's (possibly overloaded) extended frame.  An axis whose
extent equals the full box wraps periodically; overloaded extents do not wrap
because ghost images already realize periodicity there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .box import BoxGeometry
from .errors import HydroboxError
from .particles import ParticleSet


@dataclass
class Leaf:
    """View of one leaf's metadata (storage is columnar in the mesh)."""

    index: int
    start: int
    end: int
    aabb_lo: np.ndarray
    aabb_hi: np.ndarray
    timestep_level: int
    ghost_only: bool

    @property
    def size(self) -> int:
        return self.end - self.start


@dataclass
class InteractionList:
    """Ordered (receiver, partner) leaf pairs; receiver is always active.

    ``shift`` names the periodic image of the partner leaf each entry
    represents, in whole boxes per axis (always zero on overloaded meshes,
    where ghost copies realize the images instead).
    """

    leaf_a: np.ndarray
    leaf_b: np.ndarray
    reach: float
    active_depth: int
    shift: np.ndarray = None

    def __post_init__(self):
        if self.shift is None:
            self.shift = np.zeros((self.leaf_a.shape[0], 3), dtype=np.int8)

    def __len__(self) -> int:
        return self.leaf_a.shape[0]


@dataclass
class ChainingMesh:
    box: BoxGeometry
    bounds_lo: np.ndarray
    bounds_hi: np.ndarray
    bin_count: np.ndarray          # (3,) int
    bin_width: np.ndarray          # (3,) actual widths
    periodic_axis: np.ndarray      # (3,) bool
    n_particles: int
    # columnar leaf storage
    leaf_start: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    leaf_end: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    leaf_lo: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    leaf_hi: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    leaf_level: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    leaf_ghost_only: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    leaf_bin: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    bin_leaves: list = field(default_factory=list)
    # CSR view of bin_leaves for the compiled stencil sweep
    _bin_ptr: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))
    _bin_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    _max_bin_leaves: int = 0

    @property
    def n_leaves(self) -> int:
        return self.leaf_start.shape[0]

    def leaf(self, i: int) -> Leaf:
        return Leaf(i, int(self.leaf_start[i]), int(self.leaf_end[i]),
                    self.leaf_lo[i], self.leaf_hi[i],
                    int(self.leaf_level[i]), bool(self.leaf_ghost_only[i]))

    def leaf_of_particle(self) -> np.ndarray:
        """Per-particle leaf id (tests and level assignment)."""
        out = np.empty(self.n_particles, dtype=np.int64)
        for i in range(self.n_leaves):
            out[self.leaf_start[i]:self.leaf_end[i]] = i
        return out

    def max_active_level(self) -> int:
        live = ~self.leaf_ghost_only
        return int(self.leaf_level[live].max()) if np.any(live) else 0


def _kd_split(binpos: np.ndarray, idx: np.ndarray, max_leaf_size: int,
              out_blocks: list) -> None:
    """Recursive median split along the longest AABB axis; stable tie-break."""
    if idx.shape[0] <= max_leaf_size:
        out_blocks.append(idx)
        return
    pts = binpos[idx]
    extent = pts.max(axis=0) - pts.min(axis=0)
    axis = int(np.argmax(extent))
    order = np.argsort(pts[:, axis], kind="stable")
    mid = (idx.shape[0] + 1) // 2
    _kd_split(binpos, idx[order[:mid]], max_leaf_size, out_blocks)
    _kd_split(binpos, idx[order[mid:]], max_leaf_size, out_blocks)


def build_mesh_and_leaves(particles: ParticleSet, box: BoxGeometry,
                          bin_width: float, max_leaf_size: int,
                          bounds_lo=None, bounds_hi=None) -> ChainingMesh:
    """Build bins and leaves, reordering ``particles`` in place.

    ``bounds_lo/hi`` describe the rank's extended frame (defaults to the bare
    box).  Bounding boxes are tight at build time.
    """
    L = box.side_length
    lo = np.zeros(3) if bounds_lo is None else np.asarray(bounds_lo, dtype=np.float64)
    hi = np.full(3, L) if bounds_hi is None else np.asarray(bounds_hi, dtype=np.float64)
    extent = hi - lo
    if np.any(extent <= 0):
        raise HydroboxError("mesh bounds must have positive extent")
    periodic = np.abs(extent - L) < 1e-12 * L

    n_bins = np.maximum(1, np.floor(extent / bin_width).astype(np.int64))
    width = extent / n_bins

    mesh = ChainingMesh(box=box, bounds_lo=lo, bounds_hi=hi, bin_count=n_bins,
                        bin_width=width, periodic_axis=periodic,
                        n_particles=particles.n)
    n = particles.n
    mesh.bin_leaves = [[] for _ in range(int(np.prod(n_bins)))]
    if n == 0:
        return mesh

    binpos = particles.binning_pos(L)
    cell = np.clip(((binpos - lo) / width).astype(np.int64), 0, n_bins - 1)
    flat = (cell[:, 0] * n_bins[1] + cell[:, 1]) * n_bins[2] + cell[:, 2]

    order = np.argsort(flat, kind="stable")
    sorted_flat = flat[order]
    starts = np.searchsorted(sorted_flat, np.arange(np.prod(n_bins)))
    ends = np.append(starts[1:], n)

    blocks: list[np.ndarray] = []
    block_bin: list[int] = []
    for b in range(int(np.prod(n_bins))):
        members = order[starts[b]:ends[b]]
        if members.shape[0] == 0:
            continue
        before = len(blocks)
        _kd_split(binpos, members, max_leaf_size, blocks)
        block_bin.extend([b] * (len(blocks) - before))

    perm = np.concatenate(blocks)
    particles.apply_permutation(perm)
    binpos = particles.binning_pos(L)

    sizes = np.array([blk.shape[0] for blk in blocks], dtype=np.int64)
    mesh.leaf_end = np.cumsum(sizes)
    mesh.leaf_start = mesh.leaf_end - sizes
    nl = len(blocks)
    mesh.leaf_lo = np.empty((nl, 3))
    mesh.leaf_hi = np.empty((nl, 3))
    mesh.leaf_level = np.zeros(nl, dtype=np.int64)
    mesh.leaf_ghost_only = np.zeros(nl, dtype=bool)
    mesh.leaf_bin = np.asarray(block_bin, dtype=np.int64)
    np.minimum.reduceat(binpos, mesh.leaf_start, axis=0, out=mesh.leaf_lo)
    np.maximum.reduceat(binpos, mesh.leaf_start, axis=0, out=mesh.leaf_hi)
    ghost_sum = np.add.reduceat(particles.ghost.astype(np.int64), mesh.leaf_start)
    mesh.leaf_ghost_only = ghost_sum == sizes
    for li, b in enumerate(mesh.leaf_bin):
        mesh.bin_leaves[b].append(li)
    mesh.bin_leaves = [np.asarray(v, dtype=np.int64) for v in mesh.bin_leaves]
    counts = np.array([v.shape[0] for v in mesh.bin_leaves], dtype=np.int64)
    mesh._bin_ptr = np.concatenate([[0], np.cumsum(counts)])
    mesh._bin_ids = (np.concatenate(mesh.bin_leaves)
                     if nl else np.zeros(0, dtype=np.int64)).astype(np.int64)
    mesh._max_bin_leaves = int(counts.max()) if counts.size else 0
    return mesh


def grow_bounding_boxes(mesh: ChainingMesh, particles: ParticleSet) -> None:
    """Expand each leaf AABB to include current member positions (never shrinks)."""
    if mesh.n_leaves == 0:
        return
    binpos = particles.binning_pos(mesh.box.side_length)
    cur_lo = np.minimum.reduceat(binpos, mesh.leaf_start, axis=0)
    cur_hi = np.maximum.reduceat(binpos, mesh.leaf_start, axis=0)
    np.minimum(mesh.leaf_lo, cur_lo, out=mesh.leaf_lo)
    np.maximum(mesh.leaf_hi, cur_hi, out=mesh.leaf_hi)


@njit(cache=True)
def _assemble_core(active_ids, leaf_bin, leaf_lo, leaf_hi, bin_ptr, bin_ids,
                   nb, periodic, L, reach, out_a, out_b, out_s):
    """Stencil sweep emitting (active leaf, partner, image shift) triples."""
    count = 0
    key_bin = np.empty(27, dtype=np.int64)
    key_shift = np.empty(27, dtype=np.int64)
    for ai in range(active_ids.shape[0]):
        a = active_ids[ai]
        b_flat = leaf_bin[a]
        bz = b_flat % nb[2]
        by = (b_flat // nb[2]) % nb[1]
        bx = b_flat // (nb[1] * nb[2])
        n_seen = 0
        for ox in range(-1, 2):
            for oy in range(-1, 2):
                for oz in range(-1, 2):
                    ix = bx + ox
                    iy = by + oy
                    iz = bz + oz
                    sx = 0
                    sy = 0
                    sz = 0
                    ok = True
                    if periodic[0]:
                        if ix < 0:
                            ix += nb[0]
                            sx = -1
                        elif ix >= nb[0]:
                            ix -= nb[0]
                            sx = 1
                    elif ix < 0 or ix >= nb[0]:
                        ok = False
                    if ok:
                        if periodic[1]:
                            if iy < 0:
                                iy += nb[1]
                                sy = -1
                            elif iy >= nb[1]:
                                iy -= nb[1]
                                sy = 1
                        elif iy < 0 or iy >= nb[1]:
                            ok = False
                    if ok:
                        if periodic[2]:
                            if iz < 0:
                                iz += nb[2]
                                sz = -1
                            elif iz >= nb[2]:
                                iz -= nb[2]
                                sz = 1
                        elif iz < 0 or iz >= nb[2]:
                            ok = False
                    if not ok:
                        continue
                    flat = (ix * nb[1] + iy) * nb[2] + iz
                    scode = (sx + 1) * 9 + (sy + 1) * 3 + (sz + 1)
                    dup = False
                    for k in range(n_seen):
                        if key_bin[k] == flat and key_shift[k] == scode:
                            dup = True
                            break
                    if dup:
                        continue
                    key_bin[n_seen] = flat
                    key_shift[n_seen] = scode
                    n_seen += 1
                    shx = sx * L
                    shy = sy * L
                    shz = sz * L
                    for p in range(bin_ptr[flat], bin_ptr[flat + 1]):
                        b = bin_ids[p]
                        gx = max(leaf_lo[a, 0] - (leaf_hi[b, 0] + shx),
                                 (leaf_lo[b, 0] + shx) - leaf_hi[a, 0])
                        if gx > reach:
                            continue
                        gy = max(leaf_lo[a, 1] - (leaf_hi[b, 1] + shy),
                                 (leaf_lo[b, 1] + shy) - leaf_hi[a, 1])
                        if gy > reach:
                            continue
                        gz = max(leaf_lo[a, 2] - (leaf_hi[b, 2] + shz),
                                 (leaf_lo[b, 2] + shz) - leaf_hi[a, 2])
                        if gz > reach:
                            continue
                        out_a[count] = a
                        out_b[count] = b
                        out_s[count, 0] = sx
                        out_s[count, 1] = sy
                        out_s[count, 2] = sz
                        count += 1
    return count


def assemble_interaction_lists(mesh: ChainingMesh, reach: float,
                               active_depth: int = 0) -> InteractionList:
    """All (active leaf, partner leaf) pairs within ``reach``.

    A leaf is active when its timestep level >= ``active_depth`` and it owns
    at least one non-ghost particle.  Pair membership tests dilated AABB
    overlap (per-axis gap <= reach) in the extended frame, with periodic
    wrapping on full-box axes; each entry records the periodic image it
    stands for.
    """
    for d in range(3):
        if reach > mesh.bin_width[d] and mesh.bin_count[d] > 3:
            raise HydroboxError(
                f"reach {reach:.4g} exceeds bin width {mesh.bin_width[d]:.4g} on axis {d}")

    active = (mesh.leaf_level >= active_depth) & ~mesh.leaf_ghost_only
    active_ids = np.nonzero(active)[0]
    if active_ids.shape[0] == 0 or mesh.n_leaves == 0:
        z = np.zeros(0, dtype=np.int64)
        return InteractionList(z, z.copy(), reach, active_depth)

    cap = int(active_ids.shape[0]) * 27 * max(1, mesh._max_bin_leaves)
    out_a = np.empty(cap, dtype=np.int64)
    out_b = np.empty(cap, dtype=np.int64)
    out_s = np.empty((cap, 3), dtype=np.int8)
    count = _assemble_core(active_ids, mesh.leaf_bin, mesh.leaf_lo, mesh.leaf_hi,
                           mesh._bin_ptr, mesh._bin_ids, mesh.bin_count,
                           mesh.periodic_axis, mesh.box.side_length, reach,
                           out_a, out_b, out_s)
    la, lb, ls = out_a[:count], out_b[:count], out_s[:count]
    order = np.lexsort((ls[:, 2], ls[:, 1], ls[:, 0], lb, la))
    return InteractionList(np.ascontiguousarray(la[order]),
                           np.ascontiguousarray(lb[order]),
                           reach, active_depth,
                           np.ascontiguousarray(ls[order]))
