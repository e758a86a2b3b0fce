"""Initial-condition generators.

All generators are pure functions of their arguments: the same seed gives a
bit-identical particle set.  Velocities start at zero, so total momentum is
exactly zero by construction.
"""

from __future__ import annotations

import numpy as np

from .box import BoxGeometry, wrap_position
from .errors import ConfigError
from .particles import ParticleSet, Species

SOD_GAMMA = 1.4
SOD_LEFT = (1.0, 1.0)    # density, pressure
SOD_RIGHT = (0.125, 0.1)


def _lattice(n: int, spacing: float, origin: float) -> np.ndarray:
    axis = origin + spacing * np.arange(n)
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])


def make_lattice_ic(n_per_dim: int, box: BoxGeometry,
                    perturbation_amplitude: float = 0.0,
                    seed: int = 0,
                    gas_internal_energy: float = 1e-4) -> ParticleSet:
    """Two interleaved cubic lattices: dark matter plus half-spacing-offset gas.

    2 * n_per_dim**3 particles total, equal masses summing to the box volume
    (mean density 1 in code units).
    """
    if n_per_dim < 2:
        raise ConfigError("n_per_dim must be >= 2")
    L = box.side_length
    spacing = L / n_per_dim
    if perturbation_amplitude >= 0.5 * spacing:
        raise ConfigError("perturbation amplitude must stay below half the lattice spacing")

    n_site = n_per_dim**3
    dm_pos = _lattice(n_per_dim, spacing, 0.25 * spacing)
    gas_pos = _lattice(n_per_dim, spacing, 0.75 * spacing)

    rng = np.random.default_rng(seed)
    if perturbation_amplitude > 0:
        dm_pos = dm_pos + rng.uniform(-perturbation_amplitude, perturbation_amplitude,
                                      dm_pos.shape)
        gas_pos = gas_pos + rng.uniform(-perturbation_amplitude, perturbation_amplitude,
                                        gas_pos.shape)

    p = ParticleSet(2 * n_site)
    p.pos = wrap_position(np.vstack([dm_pos, gas_pos]), box)
    p.mass[:] = box.volume / (2 * n_site)
    p.species[:n_site] = Species.DARK_MATTER
    p.species[n_site:] = Species.GAS
    p.smoothing[n_site:] = 1.3 * spacing
    p.internal_energy[n_site:] = gas_internal_energy
    p.global_id = np.arange(2 * n_site, dtype=np.int64)
    return p


def make_sod_ic(n_per_dim: int, box: BoxGeometry) -> ParticleSet:
    """Shock-tube initial state realized with equal-mass gas particles.

    The left half-box carries (rho, P) = (1, 1) on a lattice of spacing
    L/n_per_dim; the right half carries (0.125, 0.1) on a lattice twice as
    coarse in every dimension, so the 8:1 density contrast comes entirely
    from particle spacing.  gamma = 1.4.

    Internal energies are assigned against the kernel-summed density (not
    the analytic one), so the pressure the engine computes is exactly
    piecewise constant at t = 0; otherwise the smoothed density ramp at the
    two interfaces would seed spurious pressure blips.
    """
    if n_per_dim % 4:
        raise ConfigError("n_per_dim must be divisible by 4 (coarse right-half lattice)")
    L = box.side_length
    dx = L / n_per_dim
    m = SOD_LEFT[0] * dx**3

    # left: n/2 x n x n at spacing dx; right: n/4 x n/2 x n/2 at 2*dx
    nl, nr = n_per_dim, n_per_dim // 2
    ax_l = 0.5 * dx + dx * np.arange(nl // 2)
    ay_l = 0.5 * dx + dx * np.arange(nl)
    gx, gy, gz = np.meshgrid(ax_l, ay_l, ay_l, indexing="ij")
    left = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    ax_r = 0.5 * L + dx + 2 * dx * np.arange(nr // 2)
    ay_r = dx + 2 * dx * np.arange(nr)
    gx, gy, gz = np.meshgrid(ax_r, ay_r, ay_r, indexing="ij")
    right = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    n_left, n_right = left.shape[0], right.shape[0]
    p = ParticleSet(n_left + n_right)
    p.pos = wrap_position(np.vstack([left, right]), box)
    p.mass[:] = m
    p.species[:] = Species.GAS
    p.density[:n_left] = SOD_LEFT[0]
    p.density[n_left:] = SOD_RIGHT[0]
    p.smoothing[:n_left] = 1.3 * dx
    p.smoothing[n_left:] = 2.6 * dx
    p.global_id = np.arange(p.n, dtype=np.int64)

    rho_sum = _summation_density(p, box)
    p.density[:] = rho_sum
    gm1 = SOD_GAMMA - 1.0
    pressure = np.where(p.pos[:, 0] < 0.5 * L, SOD_LEFT[1], SOD_RIGHT[1])
    p.internal_energy[:] = pressure / (gm1 * rho_sum)
    return p


def _summation_density(p: ParticleSet, box: BoxGeometry) -> np.ndarray:
    """Kernel-summed density of a wrapped gas set, in the set's own order."""
    from .cmtree import assemble_interaction_lists, build_mesh_and_leaves
    from .domain import build_overload, decompose
    from .hydro import compute_density

    w = float(2.2 * p.smoothing.max())
    doms = decompose(box, (1, 1, 1), overload_width=w)
    rsets, _ = build_overload(p, doms, box, (1, 1, 1))
    rp = rsets[0]
    L = box.side_length
    mesh = build_mesh_and_leaves(rp, box, 2.0 * p.smoothing.max() * 1.001, 64,
                                 doms[0].lo - w, doms[0].hi + w)
    state = rp.state_matrix(SOD_GAMMA)
    ilist = assemble_interaction_lists(mesh, 2.0 * rp.smoothing.max(), 0)
    compute_density(rp, mesh, state, ilist, warn_isolated=False)
    own = rp.ghost == 0
    out = np.empty(p.n)
    out[rp.global_id[own]] = rp.density[own]
    return out


def make_clustered_ic(n_per_dim: int, box: BoxGeometry, seed: int = 0,
                      n_clumps: int = 8, clumped_fraction: float = 0.7,
                      gas_internal_energy: float = 1e-4) -> ParticleSet:
    """Late-time-like clustered state: Gaussian clumps over a uniform floor.

    Used by the workload-regime benchmarks and the cluster-finding tests;
    same particle count and masses as the lattice generator.
    """
    if n_per_dim < 2:
        raise ConfigError("n_per_dim must be >= 2")
    L = box.side_length
    n_total = 2 * n_per_dim**3
    rng = np.random.default_rng(seed)

    n_clumped = int(clumped_fraction * n_total)
    centers = rng.uniform(0, L, (n_clumps, 3))
    sigma = L / 40.0
    which = rng.integers(0, n_clumps, n_clumped)
    clumped = centers[which] + rng.normal(0.0, sigma, (n_clumped, 3))
    uniform = rng.uniform(0, L, (n_total - n_clumped, 3))

    p = ParticleSet(n_total)
    p.pos = wrap_position(np.vstack([clumped, uniform]), box)
    p.mass[:] = box.volume / n_total
    # alternate species so both appear throughout the volume
    p.species[:] = np.where(np.arange(n_total) % 2 == 0,
                            np.uint8(Species.DARK_MATTER), np.uint8(Species.GAS))
    gas = p.gas_mask()
    spacing = L / (n_total / 2) ** (1.0 / 3.0)
    p.smoothing[gas] = 1.3 * spacing
    p.internal_energy[gas] = gas_internal_energy
    p.global_id = np.arange(n_total, dtype=np.int64)
    return p
