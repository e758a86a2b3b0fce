"""In-situ cluster finding and grid diagnostics on the overloaded rank data.

Friends-of-friends and DBSCAN run rank-locally over owned + ghost particles
(image positions make every cross-boundary edge visible inside some rank),
then rank components are stitched exactly by merging on shared global ids.
The result is independent of the rank grid, which the tests check against
all-pairs oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .box import BoxGeometry, minimum_image, wrap_position
from .errors import HydroboxError
from .particles import ParticleSet


# -- grid-accelerated neighbor machinery (compiled) ----------------------------


@njit(cache=True)
def _build_cells(binpos, lo, inv_w, ncell):
    n = binpos.shape[0]
    flat = np.empty(n, dtype=np.int64)
    for i in range(n):
        cx = np.int64((binpos[i, 0] - lo[0]) * inv_w[0])
        cy = np.int64((binpos[i, 1] - lo[1]) * inv_w[1])
        cz = np.int64((binpos[i, 2] - lo[2]) * inv_w[2])
        cx = min(max(cx, 0), ncell[0] - 1)
        cy = min(max(cy, 0), ncell[1] - 1)
        cz = min(max(cz, 0), ncell[2] - 1)
        flat[i] = (cx * ncell[1] + cy) * ncell[2] + cz
    order = np.argsort(flat, kind="mergesort")
    sorted_flat = flat[order]
    nbins = ncell[0] * ncell[1] * ncell[2]
    start = np.searchsorted(sorted_flat, np.arange(nbins))
    end = np.empty(nbins, dtype=np.int64)
    end[:-1] = start[1:]
    end[-1] = n
    return order, start, end


@njit(cache=True, inline="always")
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True, inline="always")
def _union(parent, x, y):
    rx = _find(parent, x)
    ry = _find(parent, y)
    if rx == ry:
        return
    if rx < ry:
        parent[ry] = rx
    else:
        parent[rx] = ry


@njit(cache=True)
def _pair_scan(binpos, lo, inv_w, ncell, L, periodic, r2max, mode,
               parent, core, counts, border_key, core_label):
    """27-stencil sweep; mode 0: FOF union, 1: count, 2: core-core union,
    3: border attachment (min core label among neighbors)."""
    order, start, end = _build_cells(binpos, lo, inv_w, ncell)
    n = binpos.shape[0]
    for i in range(n):
        xi = binpos[i, 0]
        yi = binpos[i, 1]
        zi = binpos[i, 2]
        cx = min(max(np.int64((xi - lo[0]) * inv_w[0]), 0), ncell[0] - 1)
        cy = min(max(np.int64((yi - lo[1]) * inv_w[1]), 0), ncell[1] - 1)
        cz = min(max(np.int64((zi - lo[2]) * inv_w[2]), 0), ncell[2] - 1)
        for ox in range(-1, 2):
            gx = cx + ox
            sx = 0.0
            if periodic == 1:
                if gx < 0:
                    gx += ncell[0]
                    sx = -L
                elif gx >= ncell[0]:
                    gx -= ncell[0]
                    sx = L
            elif gx < 0 or gx >= ncell[0]:
                continue
            for oy in range(-1, 2):
                gy = cy + oy
                sy = 0.0
                if periodic == 1:
                    if gy < 0:
                        gy += ncell[1]
                        sy = -L
                    elif gy >= ncell[1]:
                        gy -= ncell[1]
                        sy = L
                elif gy < 0 or gy >= ncell[1]:
                    continue
                for oz in range(-1, 2):
                    gz = cz + oz
                    sz = 0.0
                    if periodic == 1:
                        if gz < 0:
                            gz += ncell[2]
                            sz = -L
                        elif gz >= ncell[2]:
                            gz -= ncell[2]
                            sz = L
                    elif gz < 0 or gz >= ncell[2]:
                        continue
                    flat = (gx * ncell[1] + gy) * ncell[2] + gz
                    for k in range(start[flat], end[flat]):
                        j = order[k]
                        dx = xi - (binpos[j, 0] + sx)
                        dy = yi - (binpos[j, 1] + sy)
                        dz = zi - (binpos[j, 2] + sz)
                        r2 = dx * dx + dy * dy + dz * dz
                        if r2 > r2max:
                            continue
                        if mode == 0:
                            if j > i:
                                _union(parent, i, j)
                        elif mode == 1:
                            counts[i] += 1  # includes self when j == i
                        elif mode == 2:
                            if j > i and core[i] == 1 and core[j] == 1:
                                _union(parent, i, j)
                        elif mode == 3:
                            if core[i] == 0 and core[j] == 1:
                                lab = core_label[j]
                                if lab < border_key[i]:
                                    border_key[i] = lab
    return 0


def _grid_geometry(binpos: np.ndarray, radius: float, box: BoxGeometry,
                   periodic: bool):
    """Cell grid with per-axis width >= radius so the 27-stencil is complete."""
    if periodic:
        lo = np.zeros(3)
        extent = np.full(3, box.side_length)
    else:
        lo = binpos.min(axis=0) - 1e-9
        extent = binpos.max(axis=0) - lo + 2e-9
    ncell = np.maximum(1, np.floor(extent / radius).astype(np.int64))
    inv_w = ncell / extent
    return lo, inv_w, ncell


@dataclass
class HaloGroup:
    halo_id: int
    member_ids: np.ndarray
    center: np.ndarray
    total_mass: float
    count: int
    radius: float


def _component_groups(roots_by_gid: dict, min_members: int,
                      pos_by_gid: dict, mass_by_gid: dict,
                      box: BoxGeometry) -> list[HaloGroup]:
    comps: dict[int, list[int]] = {}
    for gid, root in roots_by_gid.items():
        comps.setdefault(root, []).append(gid)
    groups = []
    for members in comps.values():
        if len(members) < min_members:
            continue
        members = np.array(sorted(members), dtype=np.int64)
        halo_id = int(members[0])
        ref = pos_by_gid[halo_id]
        offs = np.array([minimum_image(pos_by_gid[g] - ref, box) for g in members])
        masses = np.array([mass_by_gid[g] for g in members])
        total = float(masses.sum())
        center = wrap_position(ref + (masses[:, None] * offs).sum(axis=0) / total, box)
        radius = float(np.linalg.norm(
            np.array([minimum_image(pos_by_gid[g] - center, box) for g in members]),
            axis=1).max())
        groups.append(HaloGroup(halo_id=halo_id, member_ids=members, center=center,
                                total_mass=total, count=len(members), radius=radius))
    groups.sort(key=lambda g: g.halo_id)
    return groups


class _GlobalUF:
    """Union-find over global ids (python dict based; stitching volumes are small)."""

    def __init__(self):
        self.parent: dict[int, int] = {}

    def find(self, x: int) -> int:
        p = self.parent.setdefault(x, x)
        while p != x:
            self.parent[x] = self.parent.setdefault(p, p)
            x = self.parent[x]
            p = self.parent.setdefault(x, x)
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if ra < rb:
            self.parent[rb] = ra
        else:
            self.parent[ra] = rb


def _as_rank_list(particles) -> list[ParticleSet]:
    return particles if isinstance(particles, list) else [particles]


def _flatten(parent, i):
    r = i
    while parent[r] != r:
        r = parent[r]
    while parent[i] != r:
        parent[i], i = r, parent[i]
    return r


def _rank_local_roots(rs: ParticleSet, box: BoxGeometry, radius: float):
    """Row-level FOF components of one rank's owned+ghost set."""
    bare = not np.any(rs.ghost == 1)
    binpos = rs.pos if bare else rs.binning_pos(box.side_length)
    lo, inv_w, ncell = _grid_geometry(binpos, radius, box, periodic=bare)
    parent = np.arange(rs.n, dtype=np.int64)
    dummy = np.zeros(0, dtype=np.int64)
    _pair_scan(binpos, lo, inv_w, ncell, box.side_length, 1 if bare else 0,
               radius * radius, 0, parent, dummy.astype(np.uint8),
               dummy, dummy, dummy)
    for i in range(rs.n):
        _flatten(parent, i)
    return parent


def fof_find(particles, box: BoxGeometry, linking_length: float,
             min_members: int = 10, overload_width: float | None = None) -> list[HaloGroup]:
    """Friends-of-friends groups: connected components of the <= ll pair graph.

    ``particles`` is a single wrapped set (periodic search) or a list of
    overloaded rank sets (plain search + exact ghost stitching).
    """
    rank_sets = _as_rank_list(particles)
    if overload_width is not None and linking_length > overload_width:
        raise HydroboxError("linking length exceeds overload width: cross-rank "
                            "components are not guaranteed")
    uf = _GlobalUF()
    pos_by_gid: dict[int, np.ndarray] = {}
    mass_by_gid: dict[int, float] = {}
    for rs in rank_sets:
        roots = _rank_local_roots(rs, box, linking_length)
        gids = rs.global_id
        own = rs.ghost == 0
        for i in np.nonzero(own)[0]:
            pos_by_gid[int(gids[i])] = rs.pos[i]
            mass_by_gid[int(gids[i])] = float(rs.mass[i])
        # chain every row of a component to its root's gid
        for i in range(rs.n):
            uf.union(int(gids[i]), int(gids[_flatten(roots, i)]))
    roots_by_gid = {g: uf.find(g) for g in pos_by_gid}
    return _component_groups(roots_by_gid, min_members, pos_by_gid, mass_by_gid, box)


def dbscan_find(particles, box: BoxGeometry, eps: float, min_pts: int,
                overload_width: float | None = None):
    """Deterministic DBSCAN over the periodic box.

    Core points have >= min_pts neighbors within eps (self included);
    clusters are connected components of core points; border points attach
    to the adjacent core cluster with the lowest halo id (min core gid);
    everything else is noise.  Returns (groups, noise_gids).
    """
    rank_sets = _as_rank_list(particles)
    if overload_width is not None and eps > overload_width:
        raise HydroboxError("eps exceeds overload width")
    L = box.side_length

    # pass 1: neighbor counts -> core flags for owned rows, shared by gid
    core_gids: set[int] = set()
    pos_by_gid: dict[int, np.ndarray] = {}
    mass_by_gid: dict[int, float] = {}
    for rs in rank_sets:
        bare = not np.any(rs.ghost == 1)
        binpos = rs.pos if bare else rs.binning_pos(L)
        lo, inv_w, ncell = _grid_geometry(binpos, eps, box, periodic=bare)
        counts = np.zeros(rs.n, dtype=np.int64)
        dummy = np.zeros(0, dtype=np.int64)
        _pair_scan(binpos, lo, inv_w, ncell, L, 1 if bare else 0, eps * eps, 1,
                   dummy, dummy.astype(np.uint8), counts, dummy, dummy)
        own = rs.ghost == 0
        for i in np.nonzero(own)[0]:
            gid = int(rs.global_id[i])
            pos_by_gid[gid] = rs.pos[i]
            mass_by_gid[gid] = float(rs.mass[i])
            if counts[i] >= min_pts:
                core_gids.add(gid)

    # pass 2: core-core unions through every rank's local view
    uf = _GlobalUF()
    for rs in rank_sets:
        bare = not np.any(rs.ghost == 1)
        binpos = rs.pos if bare else rs.binning_pos(L)
        lo, inv_w, ncell = _grid_geometry(binpos, eps, box, periodic=bare)
        core = np.array([1 if int(g) in core_gids else 0 for g in rs.global_id],
                        dtype=np.uint8)
        parent = np.arange(rs.n, dtype=np.int64)
        dummy = np.zeros(0, dtype=np.int64)
        _pair_scan(binpos, lo, inv_w, ncell, L, 1 if bare else 0, eps * eps, 2,
                   parent, core, dummy, dummy, dummy)
        for i in np.nonzero(core)[0]:
            uf.union(int(rs.global_id[i]), int(rs.global_id[_flatten(parent, i)]))

    # cluster label = min core gid of the component
    root_label: dict[int, int] = {}
    for g in sorted(core_gids):
        root_label.setdefault(uf.find(g), g)
    cluster_of_core = {g: root_label[uf.find(g)] for g in core_gids}

    # pass 3: border attachment by lowest cluster label
    border_of: dict[int, int] = {}
    huge = np.int64(2**62)
    for rs in rank_sets:
        bare = not np.any(rs.ghost == 1)
        binpos = rs.pos if bare else rs.binning_pos(L)
        lo, inv_w, ncell = _grid_geometry(binpos, eps, box, periodic=bare)
        core = np.array([1 if int(g) in core_gids else 0 for g in rs.global_id],
                        dtype=np.uint8)
        core_label = np.array(
            [cluster_of_core.get(int(g), 2**62) for g in rs.global_id], dtype=np.int64)
        border_key = np.full(rs.n, huge, dtype=np.int64)
        dummy = np.zeros(0, dtype=np.int64)
        _pair_scan(binpos, lo, inv_w, ncell, L, 1 if bare else 0, eps * eps, 3,
                   dummy, core, dummy, border_key, core_label)
        own = rs.ghost == 0
        for i in np.nonzero(own & (core == 0) & (border_key < huge))[0]:
            gid = int(rs.global_id[i])
            border_of[gid] = min(border_of.get(gid, 2**62), int(border_key[i]))

    roots_by_gid: dict[int, int] = {}
    for g in core_gids:
        roots_by_gid[g] = cluster_of_core[g]
    for g, lab in border_of.items():
        roots_by_gid[g] = lab
    # after border attachment, halo_id reverts to min member gid (the
    # attachment tie-break itself used min *core* gid as the cluster key)
    groups = _component_groups(roots_by_gid, 1, pos_by_gid, mass_by_gid, box)
    noise = np.array(sorted(set(pos_by_gid) - set(roots_by_gid)), dtype=np.int64)
    return groups, noise


# -- catalogs -------------------------------------------------------------------

HCAT_MAGIC = b"HCAT"
HCAT_VERSION = 1
HCAT_SENTINEL = 0x01020304
_HCAT_DTYPE = np.dtype([
    ("halo_id", "<u8"), ("count", "<u8"), ("mass", "<f8"),
    ("cx", "<f8"), ("cy", "<f8"), ("cz", "<f8"),
    ("radius", "<f8"), ("step", "<u8"),
])


def encode_halo_catalog(groups: list[HaloGroup], step: int) -> bytes:
    """Binary record stream with versioned header and CRC32C footer."""
    from .crc import crc32c
    import struct
    rec = np.zeros(len(groups), dtype=_HCAT_DTYPE)
    for i, g in enumerate(sorted(groups, key=lambda g: g.halo_id)):
        rec[i] = (g.halo_id, g.count, g.total_mass,
                  g.center[0], g.center[1], g.center[2], g.radius, step)
    schema = ",".join(_HCAT_DTYPE.names).encode()
    header = HCAT_MAGIC + struct.pack("<IIQH", HCAT_VERSION, HCAT_SENTINEL,
                                      len(groups), len(schema)) + schema
    payload = header + rec.tobytes()
    return payload + struct.pack("<I", crc32c(payload))


def decode_halo_catalog(blob: bytes):
    """Inverse of :func:`encode_halo_catalog`; validates CRC and header."""
    from .crc import crc32c
    import struct
    if blob[:4] != HCAT_MAGIC:
        raise HydroboxError("bad halo catalog magic")
    version, sentinel, count, schema_len = struct.unpack_from("<IIQH", blob, 4)
    if version != HCAT_VERSION or sentinel != HCAT_SENTINEL:
        raise HydroboxError("unsupported halo catalog version or endianness")
    off = 4 + 18
    schema = blob[off:off + schema_len].decode()
    off += schema_len
    body, footer = blob[:-4], blob[-4:]
    if struct.unpack("<I", footer)[0] != crc32c(body):
        raise HydroboxError("halo catalog CRC mismatch")
    rec = np.frombuffer(body[off:], dtype=_HCAT_DTYPE, count=count)
    if schema != ",".join(_HCAT_DTYPE.names):
        raise HydroboxError("halo catalog schema mismatch")
    return rec


def halo_catalog_text(groups: list[HaloGroup], step: int) -> str:
    lines = ["halo_id\tcount\tmass\tcx\tcy\tcz\tradius\tstep"]
    for g in sorted(groups, key=lambda g: g.halo_id):
        lines.append(f"{g.halo_id}\t{g.count}\t{g.total_mass:.17g}\t"
                     f"{g.center[0]:.17g}\t{g.center[1]:.17g}\t{g.center[2]:.17g}\t"
                     f"{g.radius:.17g}\t{step}")
    return "\n".join(lines) + "\n"


# -- power spectrum ---------------------------------------------------------------


def power_spectrum(density_values: np.ndarray, box: BoxGeometry):
    """Binned P(k) of the density contrast on the PM grid.

    P(k) = <|delta_k|^2> V over spherical bins of width 2 pi / L, forward
    transform normalized by N^3, DC bin excluded.
    """
    n = density_values.shape[0]
    rho_bar = density_values.mean()
    if rho_bar <= 0:
        raise HydroboxError("empty density grid")
    delta = density_values / rho_bar - 1.0
    dk = np.fft.fftn(delta) / n**3
    power = np.abs(dk) ** 2
    m = np.fft.fftfreq(n) * n
    mx, my, mz = np.meshgrid(m, m, m, indexing="ij")
    kmag = np.sqrt(mx**2 + my**2 + mz**2)
    bins = np.rint(kmag).astype(np.int64)
    nbins = int(bins.max()) + 1
    sums = np.bincount(bins.ravel(), weights=power.ravel(), minlength=nbins)
    counts = np.bincount(bins.ravel(), minlength=nbins)
    L = box.side_length
    with np.errstate(invalid="ignore", divide="ignore"):
        pk = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0) * box.volume
    k_centers = 2.0 * np.pi / L * np.arange(nbins)
    return k_centers[1:], pk[1:], counts[1:]
