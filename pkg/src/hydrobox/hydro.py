"""Reproducing-kernel SPH: density, linear correction coefficients, forces.

Density and forces use the standard symmetric SPH forms (which conserve
momentum pairwise); the linear-order reproducing-kernel coefficients (A, B)
correct the interpolation operator so constant and linear fields are
reproduced exactly at interior particles, and serve as diagnostics and
smoothing operators rather than entering the force loop.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .cmtree import ChainingMesh, InteractionList
from .errors import HydroboxError, StiffStateError
from .kernels import (crk_interp_kernel, crk_moments_kernel, density_kernel,
                      hydro_force_kernel, neighbor_count_kernel)
from .lane import EvalMode, eval_interaction_list
from .particles import COL_CS, COL_P, COL_RHO, ParticleSet

log = logging.getLogger(__name__)

SPLINE_SUPPORT = 2.0  # kernel support radius in units of h


def spline_w(r, h):
    """Cubic B-spline kernel (vectorized reference; engine has its own copy)."""
    q = np.asarray(r, dtype=np.float64) / h
    c = 1.0 / (math.pi * h**3)
    out = np.where(q < 1.0, 1.0 - 1.5 * q**2 + 0.75 * q**3,
                   np.where(q < 2.0, 0.25 * (2.0 - q)**3, 0.0))
    return c * out


def active_row_mask(mesh: ChainingMesh, active_depth: int) -> np.ndarray:
    """Rows belonging to leaves active at the given substep depth."""
    mask = np.zeros(mesh.n_particles, dtype=bool)
    act = (mesh.leaf_level >= active_depth) & ~mesh.leaf_ghost_only
    for li in np.nonzero(act)[0]:
        mask[mesh.leaf_start[li]:mesh.leaf_end[li]] = True
    return mask


def refresh_eos_columns(state: np.ndarray, particles: ParticleSet,
                        eos_gamma: float, rows=None) -> None:
    """Recompute the P and c_s state columns after a density or energy update."""
    sel = slice(None) if rows is None else rows
    gm1 = eos_gamma - 1.0
    u = particles.internal_energy[sel]
    rho = particles.density[sel]
    state[sel, COL_RHO] = rho
    state[sel, COL_P] = gm1 * rho * u
    state[sel, COL_CS] = np.sqrt(np.maximum(eos_gamma * gm1 * u, 0.0))


def compute_density(particles: ParticleSet, mesh: ChainingMesh,
                    state: np.ndarray, ilist: InteractionList,
                    mode: str = EvalMode.DETERMINISTIC, lane_width: int = 8,
                    workers: int = 1, warn_isolated: bool = True) -> np.ndarray:
    """Summation density rho_i = sum_j m_j W(|r_ij|, h_i) including the self term.

    Only rows owned by the list's active leaves are written back.
    """
    h_max = float(particles.smoothing.max()) if particles.n else 0.0
    kernel = density_kernel(SPLINE_SUPPORT * h_max)
    res = eval_interaction_list(kernel, ilist, state, mesh, mode=mode,
                                lane_width=lane_width, workers=workers,
                                pshift=particles.image_shift)
    rho = res.values[:, 0]
    rows = active_row_mask(mesh, ilist.active_depth) & particles.gas_mask()
    if warn_isolated and np.any(rows):
        self_term = particles.mass[rows] / (math.pi * particles.smoothing[rows]**3)
        lonely = rho[rows] <= self_term * (1.0 + 1e-9)
        if np.any(lonely):
            log.warning("%d gas particles have no neighbors inside 2h", int(lonely.sum()))
    particles.density[rows] = rho[rows]
    # periodic self-images mirror their owners; remote ghosts keep the local
    # (shell-edge approximate) estimate, refreshed at the next PM barrier
    particles.sync_alias_ghosts(fields=("density",))
    return rho


@dataclass
class CRKCoefficients:
    """Linear-order reproducing-kernel correction per gas particle."""

    A: np.ndarray            # (n,)
    B: np.ndarray            # (n, 3)
    m0: np.ndarray           # (n,)
    m1: np.ndarray           # (n, 3)
    m2: np.ndarray           # (n, 3, 3)
    fallback: np.ndarray     # (n,) bool: degenerate neighborhood, A=1/m0, B=0


def compute_crk_coefficients(particles: ParticleSet, mesh: ChainingMesh,
                             state: np.ndarray, ilist: InteractionList,
                             mode: str = EvalMode.DETERMINISTIC,
                             lane_width: int = 8, workers: int = 1,
                             cond_limit: float = 1e8) -> CRKCoefficients:
    """Accumulate moments m0, m1, m2 and solve the 1+3 linear system.

    The 3x3 solve uses LAPACK's partially pivoted elimination; neighborhoods
    whose second-moment matrix is near-singular (planar or collinear) fall
    back to A = 1/m0, B = 0 with a per-particle flag.
    """
    h_max = float(particles.smoothing.max()) if particles.n else 0.0
    kernel = crk_moments_kernel(SPLINE_SUPPORT * h_max)
    res = eval_interaction_list(kernel, ilist, state, mesh, mode=mode,
                                lane_width=lane_width, workers=workers,
                                pshift=particles.image_shift)
    v = res.values
    n = particles.n
    m0 = v[:, 0]
    m1 = v[:, 1:4].copy()
    m2 = np.empty((n, 3, 3))
    m2[:, 0, 0] = v[:, 4]
    m2[:, 0, 1] = m2[:, 1, 0] = v[:, 5]
    m2[:, 0, 2] = m2[:, 2, 0] = v[:, 6]
    m2[:, 1, 1] = v[:, 7]
    m2[:, 1, 2] = m2[:, 2, 1] = v[:, 8]
    m2[:, 2, 2] = v[:, 9]

    gas = particles.gas_mask() & (m0 > 0)
    A = np.ones(n)
    B = np.zeros((n, 3))
    fallback = np.zeros(n, dtype=bool)

    idx = np.nonzero(gas)[0]
    if idx.size:
        m2g = m2[idx]
        with np.errstate(all="ignore"):
            cond = np.linalg.cond(m2g)
        good = np.isfinite(cond) & (cond < cond_limit)
        fallback[idx[~good]] = True
        gi = idx[good]
        if gi.size:
            B[gi] = np.linalg.solve(m2[gi], m1[gi][..., None])[..., 0]
        denom = m0[idx] - np.einsum("ij,ij->i", B[idx], m1[idx])
        bad_denom = ~(np.isfinite(denom) & (np.abs(denom) > 1e-300))
        fallback[idx[bad_denom]] = True
        denom[bad_denom] = m0[idx][bad_denom]
        A[idx] = 1.0 / denom
        fb = idx[fallback[idx]]
        A[fb] = 1.0 / m0[fb]
        B[fb] = 0.0
    return CRKCoefficients(A=A, B=B, m0=m0, m1=m1, m2=m2, fallback=fallback)


def uncorrected_coefficients(coeffs: CRKCoefficients) -> CRKCoefficients:
    """Negative control: zeroth-order normalization only (A = 1/m0, B = 0)."""
    n = coeffs.A.shape[0]
    safe = np.where(coeffs.m0 > 0, coeffs.m0, 1.0)
    return CRKCoefficients(A=1.0 / safe, B=np.zeros((n, 3)), m0=coeffs.m0,
                           m1=coeffs.m1, m2=coeffs.m2,
                           fallback=np.ones(n, dtype=bool))


def corrected_interpolate(particles: ParticleSet, mesh: ChainingMesh,
                          state: np.ndarray, ilist: InteractionList,
                          coeffs: CRKCoefficients, samples: np.ndarray,
                          mode: str = EvalMode.DETERMINISTIC,
                          lane_width: int = 8, workers: int = 1) -> np.ndarray:
    """F_hat_i = sum_j V_j F_j W^R_ij with W^R = A_i (1 + B_i . (r_i - r_j)) W_ij."""
    n = particles.n
    aux = np.zeros((n, 5))
    aux[:, 0] = samples
    aux[:, 1] = coeffs.A
    aux[:, 2:5] = coeffs.B
    h_max = float(particles.smoothing.max()) if particles.n else 0.0
    kernel = crk_interp_kernel(SPLINE_SUPPORT * h_max)
    res = eval_interaction_list(kernel, ilist, state, mesh, mode=mode,
                                lane_width=lane_width, workers=workers, aux=aux,
                                pshift=particles.image_shift)
    return res.values[:, 0]


def compute_hydro_accel(particles: ParticleSet, mesh: ChainingMesh,
                        state: np.ndarray, ilist: InteractionList,
                        mode: str = EvalMode.DETERMINISTIC, lane_width: int = 8,
                        workers: int = 1, mirror: bool = False,
                        visc_alpha: float = 1.0, visc_beta: float = 2.0):
    """Pairwise momentum and energy-rate evaluation.

    Returns (force, edot, result): per-particle force (m_i a_i), per-particle
    m_i du_i/dt, and the raw EvalResult for conservation audits.
    """
    h_max = float(particles.smoothing.max()) if particles.n else 0.0
    kernel = hydro_force_kernel(SPLINE_SUPPORT * h_max, visc_alpha, visc_beta)
    res = eval_interaction_list(kernel, ilist, state, mesh, mode=mode,
                                lane_width=lane_width, workers=workers,
                                mirror=mirror, pshift=particles.image_shift)
    return res.values[:, 0:3], res.values[:, 3], res


def adapt_smoothing_length(particles: ParticleSet, mesh: ChainingMesh,
                           state_builder, target_neighbors: int,
                           bin_width: float, mode: str = EvalMode.DETERMINISTIC,
                           lane_width: int = 8, workers: int = 1,
                           tol: float = 0.05, max_iter: int = 30) -> np.ndarray:
    """Drive each gas particle's neighbor count n(2h) to target +- tol.

    Newton-type update h <- h (target/n)^(1/3) using n(h) ~ h^3, capped so
    the kernel support 2h never exceeds the chaining-mesh bin width.
    """
    h_cap = 0.5 * bin_width
    gas = particles.gas_mask() & particles.owned_mask()
    if not np.any(gas):
        return particles.smoothing
    ilist = None
    for it in range(max_iter):
        np.clip(particles.smoothing, 0.0, h_cap, out=particles.smoothing)
        particles.sync_alias_ghosts(fields=("smoothing",))
        state = state_builder()
        h_max = float(particles.smoothing[gas].max())
        if ilist is None or SPLINE_SUPPORT * h_max > ilist.reach:
            # 2h never exceeds the cap, so one cap-width list usually serves
            # every iteration
            ilist = _full_ilist(mesh, min(SPLINE_SUPPORT * h_cap, bin_width))
        kernel = neighbor_count_kernel(SPLINE_SUPPORT * h_max)
        res = eval_interaction_list(kernel, ilist, state, mesh, mode=mode,
                                    lane_width=lane_width, workers=workers,
                                    pshift=particles.image_shift)
        counts = res.values[:, 0]
        n = np.maximum(counts[gas], 1.0)
        err = np.abs(n - target_neighbors) / target_neighbors
        at_cap = particles.smoothing[gas] >= h_cap * (1 - 1e-12)
        done = (err <= tol) | (at_cap & (n < target_neighbors))
        if np.all(done):
            break
        # n(h) ~ h^3 Newton step; damp late iterations so discrete neighbor
        # shells that straddle the tolerance band settle instead of cycling
        expo = (1.0 / 3.0) if it < 10 else (1.0 / 6.0)
        factor = np.clip((target_neighbors / n) ** expo, 0.6, 1.6)
        h = particles.smoothing[gas]
        new_h = np.where(done, h, h * factor)
        if np.max(np.abs(new_h - h) / h) < 1e-4:
            particles.smoothing[gas] = new_h
            break
        particles.smoothing[gas] = new_h
    np.clip(particles.smoothing, 0.0, h_cap, out=particles.smoothing)
    particles.sync_alias_ghosts(fields=("smoothing",))
    if np.any(particles.smoothing[gas] >= h_cap * (1 - 1e-12)):
        log.warning("smoothing lengths clamped at bin width / 2 = %g", h_cap)
    return particles.smoothing


def _full_ilist(mesh: ChainingMesh, reach: float) -> InteractionList:
    from .cmtree import assemble_interaction_lists
    return assemble_interaction_lists(mesh, reach, active_depth=0)


@dataclass
class TimestepHierarchy:
    """Power-of-two nested timestep levels inside one PM interval."""

    dt_pm: float
    max_level: int
    n_levels: int

    @property
    def n_fine(self) -> int:
        return 1 << self.max_level

    def dt_level(self, level: int) -> float:
        return self.dt_pm / (1 << level)

    def depth_at(self, s: int) -> int:
        """Shallowest level due at interior kick boundary s (1..n_fine-1)."""
        tz = (s & -s).bit_length() - 1
        return self.max_level - tz


def assign_timestep_levels(particles: ParticleSet, mesh: ChainingMesh,
                           dt_pm: float, cfl: float, n_levels: int,
                           softening: float, eos_gamma: float,
                           flat: bool = False) -> TimestepHierarchy:
    """Per-particle CFL/acceleration timesteps binned into power-of-two leaf levels.

    Gas uses cfl * h / (c_s + |v|); dark matter uses cfl * sqrt(eps / |a|).
    Leaf level is the maximum (deepest) over members; ``flat`` forces every
    leaf to the global deepest level.
    """
    n = particles.n
    dt = np.full(n, np.inf)
    gas = particles.gas_mask()
    if np.any(gas):
        gm1 = eos_gamma - 1.0
        cs = np.sqrt(np.maximum(eos_gamma * gm1 * particles.internal_energy[gas], 0.0))
        speed = cs + np.linalg.norm(particles.vel[gas], axis=1) + 1e-300
        dt[gas] = cfl * particles.smoothing[gas] / speed
    dm = ~gas
    if np.any(dm):
        amag = np.linalg.norm(particles.accel[dm], axis=1)
        with np.errstate(divide="ignore"):
            dt[dm] = cfl * np.sqrt(softening / np.maximum(amag, 1e-300))
    ratio = dt_pm / dt
    level = np.zeros(n, dtype=np.int64)
    needs = ratio > 1.0
    level[needs] = np.ceil(np.log2(ratio[needs]) - 1e-12).astype(np.int64)
    if int(level.max(initial=0)) > n_levels - 1:
        raise StiffStateError(
            f"required timestep level {int(level.max())} exceeds n_levels-1 = {n_levels - 1}")
    particles.timestep_level[:] = level.astype(np.uint8)

    if mesh.n_leaves:
        leaf_level = np.maximum.reduceat(level, mesh.leaf_start)
        if flat:
            leaf_level[:] = leaf_level.max()
        mesh.leaf_level[:] = leaf_level
        max_level = int(leaf_level[~mesh.leaf_ghost_only].max(initial=0))
    else:
        max_level = 0
    return TimestepHierarchy(dt_pm=dt_pm, max_level=max_level, n_levels=n_levels)
