"""Cuboid rank decomposition with overloaded (ghost) boundary shells.

Ranks are in-process workers exchanging immutable arrays at PM-step barriers.
Each rank's working set holds its owned particles followed by ghost copies of
every particle whose periodic image falls strictly within ``overload_width``
of the rank's bounds.  Ghosts of particles owned by the same rank (periodic
self-images) carry the owner's local row in ``ghost_src`` so impulse exchange
can fold their contributions back onto the owner exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .box import BoxGeometry, wrap_position
from .errors import DriftError, HydroboxError
from .particles import ParticleSet


@dataclass(frozen=True)
class RankDomain:
    rank_id: int
    lo: np.ndarray
    hi: np.ndarray
    overload_width: float

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo


@dataclass
class ExchangePlan:
    """(src_rank, dst_rank) -> indices (into the global owned set) ghosted to dst."""

    entries: dict = field(default_factory=dict)

    def add(self, src: int, dst: int, idx: np.ndarray) -> None:
        if idx.shape[0]:
            key = (src, dst)
            prev = self.entries.get(key)
            self.entries[key] = idx if prev is None else \
                np.unique(np.concatenate([prev, idx]))

    def ghosts_for(self, dst: int) -> np.ndarray:
        parts = [v for (s, d), v in self.entries.items() if d == dst]
        return np.unique(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)


def decompose(box: BoxGeometry, rank_grid: tuple[int, int, int],
              overload_width: float = 0.0) -> list[RankDomain]:
    """Exact half-open tiling of the box into product(rank_grid) cuboids."""
    g = np.asarray(rank_grid, dtype=np.int64)
    if np.any(g < 1):
        raise HydroboxError("rank_grid components must be >= 1")
    L = box.side_length
    edges = [L * np.arange(g[d] + 1) / g[d] for d in range(3)]
    domains = []
    rid = 0
    for ix, iy, iz in itertools.product(range(g[0]), range(g[1]), range(g[2])):
        lo = np.array([edges[0][ix], edges[1][iy], edges[2][iz]])
        hi = np.array([edges[0][ix + 1], edges[1][iy + 1], edges[2][iz + 1]])
        domains.append(RankDomain(rank_id=rid, lo=lo, hi=hi,
                                  overload_width=overload_width))
        rid += 1
    return domains


def owner_ranks(pos: np.ndarray, box: BoxGeometry,
                rank_grid: tuple[int, int, int]) -> np.ndarray:
    """Rank id owning each wrapped position (half-open bounds per axis)."""
    g = np.asarray(rank_grid, dtype=np.int64)
    L = box.side_length
    cell = np.empty((pos.shape[0], 3), dtype=np.int64)
    for d in range(3):
        edges = L * np.arange(g[d] + 1) / g[d]
        cell[:, d] = np.clip(np.searchsorted(edges, pos[:, d], side="right") - 1,
                             0, g[d] - 1)
    return (cell[:, 0] * g[1] + cell[:, 1]) * g[2] + cell[:, 2]


_SHIFTS = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.int64)


def build_overload(particles: ParticleSet, domains: list[RankDomain],
                   box: BoxGeometry, rank_grid: tuple[int, int, int]):
    """Split a global wrapped set into per-rank owned + ghost working sets.

    Returns (rank_sets, plan).  A copy joins rank r's shell for shift s when
    pos + s*L lies strictly inside the bounds expanded by overload_width
    (and is not r's owned copy itself).
    """
    L = box.side_length
    w = domains[0].overload_width
    min_extent = min(float(d.extent.min()) for d in domains)
    if w >= 0.5 * min_extent:
        raise HydroboxError(
            f"overload_width {w:.4g} >= half the smallest domain extent "
            f"{min_extent:.4g}: a particle would be duplicated twice within one rank")
    particles.validate()
    owner = owner_ranks(particles.pos, box, rank_grid)

    rank_sets: list[ParticleSet] = []
    plan = ExchangePlan()
    for dom in domains:
        own_idx = np.nonzero(owner == dom.rank_id)[0]
        local_of_global = np.full(particles.n, -1, dtype=np.int64)
        local_of_global[own_idx] = np.arange(own_idx.shape[0])

        ghost_global: list[np.ndarray] = []
        ghost_shift: list[np.ndarray] = []
        for s in _SHIFTS:
            shifted = particles.pos + s.astype(np.float64) * L
            inside = np.all((shifted > dom.lo - w) & (shifted < dom.hi + w), axis=1)
            if np.all(s == 0):
                inside &= owner != dom.rank_id
            idx = np.nonzero(inside)[0]
            if idx.shape[0]:
                ghost_global.append(idx)
                ghost_shift.append(np.broadcast_to(s, (idx.shape[0], 3)).copy())
                for src in np.unique(owner[idx]):
                    plan.add(int(src), dom.rank_id, idx[owner[idx] == src])

        owned = particles.select(own_idx)
        owned.ghost[:] = 0
        owned.image_shift[:] = 0
        owned.ghost_src[:] = -1

        if ghost_global:
            gidx = np.concatenate(ghost_global)
            gshift = np.concatenate(ghost_shift, axis=0)
            # deterministic ghost ordering
            order = np.lexsort((gshift[:, 2], gshift[:, 1], gshift[:, 0],
                                particles.global_id[gidx]))
            gidx, gshift = gidx[order], gshift[order]
            ghosts = particles.select(gidx)
            ghosts.ghost[:] = 1
            ghosts.image_shift = gshift.astype(np.int8)
            # same-rank owners allow exact impulse fold-back
            src_local = local_of_global[gidx]
            src_local[owner[gidx] != dom.rank_id] = -1
            ghosts.ghost_src = src_local
            rank_sets.append(ParticleSet.concat([owned, ghosts]))
        else:
            rank_sets.append(owned)
    return rank_sets, plan


def gather_owned(rank_sets: list[ParticleSet]) -> ParticleSet:
    """All non-ghost particles in canonical (global_id) order."""
    merged = ParticleSet.concat([rs.select(rs.owned_mask()) for rs in rank_sets])
    merged.apply_permutation(np.argsort(merged.global_id, kind="stable"))
    return merged


def refresh_overload(rank_sets: list[ParticleSet], domains: list[RankDomain],
                     box: BoxGeometry, rank_grid: tuple[int, int, int]):
    """PM-barrier collective: discard ghosts, migrate drifted owners, re-ghost.

    Raises DriftError when a particle moved more than one domain in one PM
    interval (the overload model's validity bound).  The global id census is
    preserved exactly.
    """
    g = np.asarray(rank_grid, dtype=np.int64)
    total_before = sum(rs.n_owned for rs in rank_sets)

    owned_parts = []
    for rank_id, rs in enumerate(rank_sets):
        mine = rs.select(rs.owned_mask())
        if mine.n == 0:
            continue
        mine.pos = wrap_position(mine.pos, box)
        new_owner = owner_ranks(mine.pos, box, rank_grid)
        old_c = _grid_coords(np.full(mine.n, rank_id), g)
        new_c = _grid_coords(new_owner, g)
        hop = np.abs(new_c - old_c)
        hop = np.minimum(hop, g - hop)  # periodic rank-grid distance
        if np.any(hop > 1):
            raise DriftError("particle crossed more than one domain in one PM step")
        owned_parts.append(mine)

    merged = ParticleSet.concat(owned_parts)
    merged.apply_permutation(np.argsort(merged.global_id, kind="stable"))
    if merged.n != total_before:
        raise HydroboxError("census violation during refresh")
    return build_overload(merged, domains, box, rank_grid)


def _grid_coords(rank_ids, g: np.ndarray) -> np.ndarray:
    rank_ids = np.asarray(rank_ids, dtype=np.int64)
    z = rank_ids % g[2]
    y = (rank_ids // g[2]) % g[1]
    x = rank_ids // (g[1] * g[2])
    return np.column_stack([x, y, z])
