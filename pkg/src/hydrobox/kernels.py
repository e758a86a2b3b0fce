"""Compiled pairwise-interaction kernels and the lane-split evaluation core.

Every short-range interaction is expressed as a separable pair kernel

    phi_ij = f(i-state) * g(j-state) * h(|r_i - r_j|, coupled state)

and evaluated by one compiled routine, ``eval_pairs_core``, that walks
leaf-pair lists in lane groups of width W: half the lanes carry leaf-i
particles, half carry leaf-j particles, and W/2 partner rotations exchange
the j-side partials so f and g are computed once per tile instead of once
per pair.  The same scalar kernel pieces back ``reference_pair_sum``, a
plain all-pairs double loop used as the independent oracle.

Determinism: in deterministic mode every pair contribution is quantized to
a per-channel power-of-two scale and accumulated in int64.  Integer sums
are order-independent, so results are bitwise identical for any worker
count, tile schedule, or domain decomposition, and antisymmetric kernels
cancel to exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .particles import (COL_CS, COL_H, COL_MASS, COL_P, COL_RHO, COL_SPECIES,
                        COL_VX, COL_VY, COL_VZ, COL_X, COL_Y, COL_Z)

# kernel ids understood by the compiled dispatcher
KID_COUNTING = 0
KID_GRAVITY = 1
KID_GRAV_POT = 2
KID_DENSITY = 3
KID_CRK_MOMENTS = 4
KID_HYDRO_FORCE = 5
KID_NEIGHBOR_COUNT = 6
KID_STUB_ZERO = 7
KID_CRK_INTERP = 8

GAS = 1.0  # species column value for gas

# counter slots reported by the core
CNT_F_EVALS = 0
CNT_G_EVALS = 1
CNT_ROT_ITERS = 2
CNT_PAIRS_SCHED = 3
CNT_PAIRS_IN = 4
CNT_ERR_KIND = 5
CNT_ERR_A = 6
CNT_ERR_B = 7
N_COUNTERS = 8

ERR_NONE = 0
ERR_NONFINITE = 1
ERR_OVERFLOW = 2

_QGUARD = 2.0**56  # per-contribution quantized magnitude limit
_ACC_GUARD = np.int64(2) ** 62

_SPLINE_SIGMA = 1.0 / math.pi  # 3D cubic B-spline normalization


@njit(cache=True, inline="always")
def _minimg(d, L):
    return d - L * math.floor(d / L + 0.5)


@njit(cache=True, inline="always")
def _w_spline(r, h):
    """Cubic B-spline kernel, support 2h, integral 1."""
    q = r / h
    if q >= 2.0:
        return 0.0
    c = _SPLINE_SIGMA / (h * h * h)
    if q < 1.0:
        return c * (1.0 - 1.5 * q * q + 0.75 * q * q * q)
    t = 2.0 - q
    return c * 0.25 * t * t * t

@njit(cache=True, inline="always")
def _gradw_over_r(r, h):
    """(dW/dr)/r for the cubic spline; finite at r=0."""
    q = r / h
    if q >= 2.0:
        return 0.0
    c = _SPLINE_SIGMA / (h * h * h * h * h)
    if q < 1.0:
        return c * (-3.0 + 2.25 * q)
    t = 2.0 - q
    return -c * 0.75 * t * t / q


@njit(cache=True, inline="always")
def _grav_s(x):
    """Short-range fraction of the Gaussian force split: erfc(x) + 2x/sqrt(pi) e^{-x^2}."""
    return math.erfc(x) + 1.1283791670955126 * x * math.exp(-x * x)


@njit(cache=True, error_model="numpy")
def _fill_partials(kid, state, aux, idx, fbuf, which_f):
    """Per-lane i-only (which_f=1) or j-only (which_f=0) partial terms."""
    if kid == KID_GRAVITY or kid == KID_GRAV_POT:
        fbuf[0] = state[idx, COL_MASS]
    elif kid == KID_DENSITY or kid == KID_NEIGHBOR_COUNT:
        if which_f == 1:
            h = state[idx, COL_H]
            fbuf[0] = h
            fbuf[1] = _SPLINE_SIGMA / (h * h * h) if h > 0 else 0.0
        else:
            fbuf[0] = state[idx, COL_MASS]
    elif kid == KID_CRK_MOMENTS:
        if which_f == 1:
            h = state[idx, COL_H]
            fbuf[0] = h
            fbuf[1] = _SPLINE_SIGMA / (h * h * h) if h > 0 else 0.0
        else:
            rho = state[idx, COL_RHO]
            fbuf[0] = state[idx, COL_MASS] / rho if rho > 0 else 0.0
    elif kid == KID_HYDRO_FORCE:
        rho = state[idx, COL_RHO]
        pres = state[idx, COL_P]
        fbuf[0] = state[idx, COL_MASS]
        fbuf[1] = pres / (rho * rho) if rho > 0 else 0.0
    elif kid == KID_CRK_INTERP:
        if which_f == 1:
            h = state[idx, COL_H]
            fbuf[0] = h
            fbuf[1] = _SPLINE_SIGMA / (h * h * h) if h > 0 else 0.0
            fbuf[2] = aux[idx, 1]  # A_i
            fbuf[3] = aux[idx, 2]  # B_i
            fbuf[4] = aux[idx, 3]
            fbuf[5] = aux[idx, 4]
        else:
            rho = state[idx, COL_RHO]
            v = state[idx, COL_MASS] / rho if rho > 0 else 0.0
            fbuf[0] = v
            fbuf[1] = aux[idx, 0]  # sampled field F_j


@njit(cache=True, error_model="numpy")
def _pair_phi(kid, state, aux, i, j, fi, gj, dx, dy, dz, r2, params, phi):
    """h_ij evaluation and combine step; returns channel count actually written."""
    if kid == KID_COUNTING:
        phi[0] = 1.0
        return 1
    if kid == KID_STUB_ZERO:
        phi[0] = 0.0
        return 1
    if kid == KID_GRAVITY:
        r = math.sqrt(r2)
        rs = params[0]
        eps2 = params[1]
        soft = r2 + eps2
        s = _grav_s(r / rs) / (soft * math.sqrt(soft))
        mm = fi[0] * gj[0]
        w = mm * s
        phi[0] = -(w * dx)
        phi[1] = -(w * dy)
        phi[2] = -(w * dz)
        return 3
    if kid == KID_GRAV_POT:
        r = math.sqrt(r2)
        rs = params[0]
        eps2 = params[1]
        phi[0] = -(fi[0] * gj[0]) * math.erfc(r / rs) / math.sqrt(r2 + eps2)
        return 1
    if kid == KID_DENSITY:
        if state[i, COL_SPECIES] != GAS or state[j, COL_SPECIES] != GAS:
            phi[0] = 0.0
            return 1
        r = math.sqrt(r2)
        h = fi[0]
        q = r / h
        if q >= 2.0:
            phi[0] = 0.0
            return 1
        if q < 1.0:
            wk = fi[1] * (1.0 - 1.5 * q * q + 0.75 * q * q * q)
        else:
            t = 2.0 - q
            wk = fi[1] * 0.25 * t * t * t
        phi[0] = gj[0] * wk
        return 1
    if kid == KID_NEIGHBOR_COUNT:
        if state[i, COL_SPECIES] != GAS or state[j, COL_SPECIES] != GAS:
            phi[0] = 0.0
            return 1
        phi[0] = 1.0 if r2 <= 4.0 * fi[0] * fi[0] else 0.0
        return 1
    if kid == KID_CRK_MOMENTS:
        if state[i, COL_SPECIES] != GAS or state[j, COL_SPECIES] != GAS:
            for c in range(10):
                phi[c] = 0.0
            return 10
        r = math.sqrt(r2)
        h = fi[0]
        q = r / h
        if q >= 2.0:
            for c in range(10):
                phi[c] = 0.0
            return 10
        if q < 1.0:
            wk = fi[1] * (1.0 - 1.5 * q * q + 0.75 * q * q * q)
        else:
            t = 2.0 - q
            wk = fi[1] * 0.25 * t * t * t
        w = gj[0] * wk
        phi[0] = w
        phi[1] = -(w * dx)  # r_j - r_i
        phi[2] = -(w * dy)
        phi[3] = -(w * dz)
        phi[4] = w * dx * dx
        phi[5] = w * dx * dy
        phi[6] = w * dx * dz
        phi[7] = w * dy * dy
        phi[8] = w * dy * dz
        phi[9] = w * dz * dz
        return 10
    if kid == KID_HYDRO_FORCE:
        if state[i, COL_SPECIES] != GAS or state[j, COL_SPECIES] != GAS:
            for c in range(5):
                phi[c] = 0.0
            return 5
        r = math.sqrt(r2)
        hi = state[i, COL_H]
        hj = state[j, COL_H]
        gw = 0.5 * (_gradw_over_r(r, hi) + _gradw_over_r(r, hj))
        if gw == 0.0:
            for c in range(5):
                phi[c] = 0.0
            return 5
        vijx = state[i, COL_VX] - state[j, COL_VX]
        vijy = state[i, COL_VY] - state[j, COL_VY]
        vijz = state[i, COL_VZ] - state[j, COL_VZ]
        vdotr = vijx * dx + vijy * dy + vijz * dz
        visc = 0.0
        if vdotr < 0.0:
            hbar = 0.5 * (hi + hj)
            cbar = 0.5 * (state[i, COL_CS] + state[j, COL_CS])
            rhobar = 0.5 * (state[i, COL_RHO] + state[j, COL_RHO])
            mu = hbar * vdotr / (r2 + 0.01 * hbar * hbar)
            visc = (-(params[0] * cbar * mu) + params[1] * mu * mu) / rhobar
        qij = fi[1] + gj[1] + visc
        mm = fi[0] * gj[0]
        w = mm * qij * gw
        phi[0] = -(w * dx)
        phi[1] = -(w * dy)
        phi[2] = -(w * dz)
        # PdV pairing: each side's heating carries its own pressure term plus
        # half the viscous dissipation, so m_i du_i + m_j du_j exactly
        # matches the pairwise work and u_i stays non-negative near contacts
        work = mm * vdotr * gw
        phi[3] = (fi[1] + 0.5 * visc) * work
        phi[4] = (gj[1] + 0.5 * visc) * work
        return 5
    if kid == KID_CRK_INTERP:
        if state[i, COL_SPECIES] != GAS or state[j, COL_SPECIES] != GAS:
            phi[0] = 0.0
            return 1
        r = math.sqrt(r2)
        h = fi[0]
        q = r / h
        if q >= 2.0:
            phi[0] = 0.0
            return 1
        if q < 1.0:
            wk = fi[1] * (1.0 - 1.5 * q * q + 0.75 * q * q * q)
        else:
            t = 2.0 - q
            wk = fi[1] * 0.25 * t * t * t
        corr = fi[2] * (1.0 + fi[3] * dx + fi[4] * dy + fi[5] * dz)
        phi[0] = gj[0] * gj[1] * corr * wk
        return 1
    phi[0] = 0.0
    return 1


@njit(cache=True, nogil=True, error_model="numpy")
def eval_pairs_core(kid, state, pshift, aux, pair_a, pair_b, pair_shift,
                    leaf_start, leaf_end, params, L, W2, reach, include_self,
                    mirror, chan_sign, mirror_map, scales, deterministic,
                    out_int, out_flt, counters):
    """Lane-split evaluation of a leaf-pair list.

    Loads each half of a lane group in one contiguous pass, computes f/g
    partials once per tile, then performs W2 partner rotations.  Each list
    entry names the periodic image it represents: the separation is
    dr = (x_i - x_j) + tau * L with the integer shift difference
    tau = pshift_i - pshift_j - pair_shift, so a ghost copy only ever stands
    in for its own image (never folded to the nearest one), and dr negates
    bitwise under i <-> j exchange.  With ``mirror`` nonzero each unordered
    pair is evaluated once and the channel-signed contribution is scattered
    to both leaves.
    """
    n_chan = scales.shape[0]
    reach2 = reach * reach
    ival = np.empty(W2, dtype=np.int64)
    jval = np.empty(W2, dtype=np.int64)
    fbuf = np.zeros((W2, 8))
    gbuf = np.zeros((W2, 4))
    phi = np.zeros(10)
    qbuf = np.zeros(10, dtype=np.int64)

    for pi in range(pair_a.shape[0]):
        a = pair_a[pi]
        b = pair_b[pi]
        shx = np.int64(pair_shift[pi, 0])
        shy = np.int64(pair_shift[pi, 1])
        shz = np.int64(pair_shift[pi, 2])
        entry_shifted = shx != 0 or shy != 0 or shz != 0
        sa = leaf_start[a]
        ea = leaf_end[a]
        sb = leaf_start[b]
        eb = leaf_end[b]
        do_mirror = mirror == 1 and (a != b or entry_shifted)
        n_it = (ea - sa + W2 - 1) // W2
        n_jt = (eb - sb + W2 - 1) // W2
        for it in range(n_it):
            base_i = sa + it * W2
            for l in range(W2):
                idx = base_i + l
                ival[l] = idx if idx < ea else -1
                if ival[l] >= 0:
                    _fill_partials(kid, state, aux, ival[l], fbuf[l], 1)
            counters[CNT_F_EVALS] += 1
            for jt in range(n_jt):
                base_j = sb + jt * W2
                for l in range(W2):
                    jdx = base_j + l
                    jval[l] = jdx if jdx < eb else -1
                    if jval[l] >= 0:
                        _fill_partials(kid, state, aux, jval[l], gbuf[l], 0)
                counters[CNT_G_EVALS] += 1
                for t in range(W2):
                    counters[CNT_ROT_ITERS] += 1
                    for l in range(W2):
                        jl = (l + t) % W2  # partner after t single-step rotations
                        i = ival[l]
                        j = jval[jl]
                        counters[CNT_PAIRS_SCHED] += 1
                        if i < 0 or j < 0:
                            continue
                        tx = np.int64(pshift[i, 0]) - np.int64(pshift[j, 0]) - shx
                        ty = np.int64(pshift[i, 1]) - np.int64(pshift[j, 1]) - shy
                        tz = np.int64(pshift[i, 2]) - np.int64(pshift[j, 2]) - shz
                        if i == j and tx == 0 and ty == 0 and tz == 0 and include_self == 0:
                            continue
                        # |tau| <= 2 keeps tau * L exact, so dr negates bitwise
                        # under i <-> j (both roundings are sign-symmetric)
                        dx = (state[i, COL_X] - state[j, COL_X]) + tx * L
                        dy = (state[i, COL_Y] - state[j, COL_Y]) + ty * L
                        dz = (state[i, COL_Z] - state[j, COL_Z]) + tz * L
                        r2 = dx * dx + dy * dy + dz * dz
                        if r2 > reach2:
                            continue
                        counters[CNT_PAIRS_IN] += 1
                        nc = _pair_phi(kid, state, aux, i, j, fbuf[l], gbuf[jl],
                                       dx, dy, dz, r2, params, phi)
                        nce = n_chan if n_chan < nc else nc
                        if deterministic == 1:
                            for c in range(nce):
                                v = phi[c]
                                if not (v == v) or v == np.inf or v == -np.inf:
                                    counters[CNT_ERR_KIND] = ERR_NONFINITE
                                    counters[CNT_ERR_A] = a
                                    counters[CNT_ERR_B] = b
                                    return
                                vs = v * scales[c]
                                if vs > _QGUARD or vs < -_QGUARD:
                                    counters[CNT_ERR_KIND] = ERR_OVERFLOW
                                    counters[CNT_ERR_A] = a
                                    counters[CNT_ERR_B] = b
                                    return
                                qbuf[c] = np.int64(np.rint(vs))
                            for c in range(nce):
                                out_int[i, c] += qbuf[c]
                                if do_mirror:
                                    out_int[j, c] += chan_sign[c] * qbuf[mirror_map[c]]
                        else:
                            for c in range(nce):
                                v = phi[c]
                                if not (v == v) or v == np.inf or v == -np.inf:
                                    counters[CNT_ERR_KIND] = ERR_NONFINITE
                                    counters[CNT_ERR_A] = a
                                    counters[CNT_ERR_B] = b
                                    return
                                out_flt[i, c] += v
                                if do_mirror:
                                    out_flt[j, c] += chan_sign[c] * phi[mirror_map[c]]


@njit(cache=True, nogil=True, error_model="numpy")
def reference_pairs_core(kid, state, aux, targets, params, L, reach,
                         include_self, scales, deterministic, out_int, out_flt,
                         out_abs):
    """Independent oracle: plain double loop over targets x all particles.

    ``out_abs`` accumulates |phi| per channel, which bounds the admissible
    rounding spread of relaxed-mode accumulation.
    """
    n = state.shape[0]
    n_chan = scales.shape[0]
    reach2 = reach * reach
    fbuf = np.zeros(8)
    gbuf = np.zeros(4)
    phi = np.zeros(10)
    for ti in range(targets.shape[0]):
        i = targets[ti]
        _fill_partials(kid, state, aux, i, fbuf, 1)
        for j in range(n):
            if i == j and include_self == 0:
                continue
            dx = _minimg(state[i, COL_X] - state[j, COL_X], L)
            dy = _minimg(state[i, COL_Y] - state[j, COL_Y], L)
            dz = _minimg(state[i, COL_Z] - state[j, COL_Z], L)
            r2 = dx * dx + dy * dy + dz * dz
            if r2 > reach2:
                continue
            _fill_partials(kid, state, aux, j, gbuf, 0)
            nc = _pair_phi(kid, state, aux, i, j, fbuf, gbuf, dx, dy, dz, r2,
                           params, phi)
            for c in range(n_chan if n_chan < nc else nc):
                if deterministic == 1:
                    out_int[i, c] += np.int64(np.rint(phi[c] * scales[c]))
                else:
                    out_flt[i, c] += phi[c]
                out_abs[i, c] += abs(phi[c])


# -- kernel descriptions -------------------------------------------------------


@dataclass(frozen=True)
class OpCost:
    """FLOP-proxy cost of one pair evaluation (FMAs count as two ops)."""

    adds: int = 0
    muls: int = 0
    fmas: int = 0
    special: int = 0

    def total(self) -> int:
        return self.adds + self.muls + 2 * self.fmas + self.special


class Symmetry:
    SYMMETRIC = "symmetric"
    ANTISYMMETRIC = "antisymmetric"
    NONE = "none"


@dataclass(frozen=True)
class PairKernel:
    """Separable pairwise interaction consumed by the lane engine.

    ``load_i``/``load_j`` document which particle fields feed the f and g
    partials; ``channel_signs`` gives the factor applied to the j-side
    contribution when an unordered pair is evaluated once (mirror mode):
    -1 for antisymmetric channels, +1 for symmetric ones.
    """

    name: str
    kid: int
    n_channels: int
    channel_names: tuple
    load_i: tuple
    load_j: tuple
    symmetry: str
    include_self: bool
    reach: float
    params: np.ndarray
    channel_signs: np.ndarray
    scale_bits: tuple
    op_cost: OpCost
    mirrorable: bool = True
    n_aux: int = 0
    # channel read for the partner-side scatter in mirror mode (identity
    # for (anti)symmetric channels; swapped pairs for per-side quantities)
    mirror_swap: np.ndarray | None = None

    @property
    def scales(self) -> np.ndarray:
        return np.array([2.0**b for b in self.scale_bits])

    @property
    def mirror_map(self) -> np.ndarray:
        if self.mirror_swap is not None:
            return self.mirror_swap
        return np.arange(self.n_channels, dtype=np.int64)


def counting_kernel(reach: float) -> PairKernel:
    return PairKernel(
        name="counting", kid=KID_COUNTING, n_channels=1,
        channel_names=("count",), load_i=(), load_j=(),
        symmetry=Symmetry.SYMMETRIC, include_self=False, reach=reach,
        params=np.zeros(1), channel_signs=np.array([1], dtype=np.int64),
        scale_bits=(40,), op_cost=OpCost(adds=1))


def stub_zero_kernel(reach: float) -> PairKernel:
    return PairKernel(
        name="stub_zero", kid=KID_STUB_ZERO, n_channels=1,
        channel_names=("zero",), load_i=(), load_j=(),
        symmetry=Symmetry.SYMMETRIC, include_self=False, reach=reach,
        params=np.zeros(1), channel_signs=np.array([1], dtype=np.int64),
        scale_bits=(40,), op_cost=OpCost(adds=1))


def gravity_kernel(split_scale: float, r_cut: float, softening: float) -> PairKernel:
    """Short-range complement of the Gaussian force split (momentum channels)."""
    return PairKernel(
        name="gravity_short", kid=KID_GRAVITY, n_channels=3,
        channel_names=("fx", "fy", "fz"),
        load_i=("mass",), load_j=("mass",),
        symmetry=Symmetry.ANTISYMMETRIC, include_self=False, reach=r_cut,
        params=np.array([split_scale, softening * softening]),
        channel_signs=np.array([-1, -1, -1], dtype=np.int64),
        scale_bits=(44, 44, 44),
        op_cost=OpCost(adds=8, muls=12, fmas=3, special=3))


def gravity_potential_kernel(split_scale: float, r_cut: float,
                             softening: float) -> PairKernel:
    return PairKernel(
        name="gravity_pot", kid=KID_GRAV_POT, n_channels=1,
        channel_names=("pe",), load_i=("mass",), load_j=("mass",),
        symmetry=Symmetry.SYMMETRIC, include_self=False, reach=r_cut,
        params=np.array([split_scale, softening * softening]),
        channel_signs=np.array([1], dtype=np.int64),
        scale_bits=(44,), op_cost=OpCost(adds=5, muls=6, special=2))


def density_kernel(reach: float) -> PairKernel:
    return PairKernel(
        name="density", kid=KID_DENSITY, n_channels=1,
        channel_names=("rho",),
        load_i=("smoothing",), load_j=("mass",),
        symmetry=Symmetry.NONE, include_self=True, reach=reach,
        params=np.zeros(1), channel_signs=np.array([1], dtype=np.int64),
        scale_bits=(50,), op_cost=OpCost(adds=6, muls=9, special=1),
        mirrorable=False)


def neighbor_count_kernel(reach: float) -> PairKernel:
    return PairKernel(
        name="neighbor_count", kid=KID_NEIGHBOR_COUNT, n_channels=1,
        channel_names=("count",),
        load_i=("smoothing",), load_j=(),
        symmetry=Symmetry.NONE, include_self=True, reach=reach,
        params=np.zeros(1), channel_signs=np.array([1], dtype=np.int64),
        scale_bits=(40,), op_cost=OpCost(adds=4, muls=3),
        mirrorable=False)


def crk_moments_kernel(reach: float) -> PairKernel:
    return PairKernel(
        name="crk_moments", kid=KID_CRK_MOMENTS, n_channels=10,
        channel_names=("m0", "m1x", "m1y", "m1z",
                       "m2xx", "m2xy", "m2xz", "m2yy", "m2yz", "m2zz"),
        load_i=("smoothing",), load_j=("mass", "density"),
        symmetry=Symmetry.NONE, include_self=True, reach=reach,
        params=np.zeros(1), channel_signs=np.ones(10, dtype=np.int64),
        scale_bits=(52,) * 10, op_cost=OpCost(adds=10, muls=18, special=1),
        mirrorable=False)


def crk_interp_kernel(reach: float) -> PairKernel:
    """Corrected interpolation; aux columns = [F_j, A, Bx, By, Bz]."""
    return PairKernel(
        name="crk_interp", kid=KID_CRK_INTERP, n_channels=1,
        channel_names=("fhat",),
        load_i=("smoothing",), load_j=("mass", "density"),
        symmetry=Symmetry.NONE, include_self=True, reach=reach,
        params=np.zeros(1), channel_signs=np.array([1], dtype=np.int64),
        scale_bits=(48,), op_cost=OpCost(adds=8, muls=12, special=1),
        mirrorable=False, n_aux=5)


def hydro_force_kernel(reach: float, visc_alpha: float = 1.0,
                       visc_beta: float = 2.0) -> PairKernel:
    """SPH momentum and energy-rate update with Monaghan viscosity.

    Channels fx, fy, fz are pairwise antisymmetric forces; edot_i carries
    m_i du_i/dt for the receiving side and edot_j the partner's rate, so a
    mirror evaluation scatters each side its own heating (the two channels
    swap roles under i <-> j).
    """
    return PairKernel(
        name="hydro_force", kid=KID_HYDRO_FORCE, n_channels=5,
        channel_names=("fx", "fy", "fz", "edot_i", "edot_j"),
        load_i=("mass", "pressure", "density"),
        load_j=("mass", "pressure", "density"),
        symmetry=Symmetry.NONE, include_self=False, reach=reach,
        params=np.array([visc_alpha, visc_beta]),
        channel_signs=np.array([-1, -1, -1, 1, 1], dtype=np.int64),
        scale_bits=(44, 44, 44, 44, 44),
        op_cost=OpCost(adds=18, muls=26, fmas=6, special=1),
        mirror_swap=np.array([0, 1, 2, 4, 3], dtype=np.int64))
