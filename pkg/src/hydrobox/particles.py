"""Structure-of-arrays particle state for one rank's (possibly overloaded) subdomain.

All per-particle quantities live in parallel contiguous numpy arrays so the
pair engine can load a leaf's slice of any field in one pass.  Ghost copies
(overload duplicates) sit wherever the spatial reorder puts them and are
distinguished by the ``ghost`` flag; their ``pos`` stays the owner's canonical
wrapped position and ``image_shift`` records which periodic image of the box
they stand in for.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np

from .errors import HydroboxError


class Species(IntEnum):
    DARK_MATTER = 0
    GAS = 1


# (name, dtype, attribute, column) - the checkpoint codec and the engine
# state matrix are both generated from this table.
_VEC3 = ("x", "y", "z")

FIELD_SPECS = [
    ("pos", np.float64, 3),
    ("vel", np.float64, 3),
    ("mass", np.float64, 1),
    ("smoothing", np.float64, 1),
    ("internal_energy", np.float64, 1),
    ("density", np.float64, 1),
    ("accel", np.float64, 3),
    ("species", np.uint8, 1),
    ("timestep_level", np.uint8, 1),
    ("ghost", np.uint8, 1),
    ("image_shift", np.int8, 3),
    ("global_id", np.int64, 1),
    ("ghost_src", np.int64, 1),
]

# column layout of the float64 state matrix handed to compiled kernels
COL_X, COL_Y, COL_Z = 0, 1, 2
COL_VX, COL_VY, COL_VZ = 3, 4, 5
COL_MASS = 6
COL_H = 7
COL_RHO = 8
COL_P = 9
COL_CS = 10
COL_SPECIES = 11
N_STATE_COLS = 12


class ParticleSet:
    """One rank's particles in structure-of-arrays layout."""

    def __init__(self, n: int):
        self.pos = np.zeros((n, 3))
        self.vel = np.zeros((n, 3))
        self.mass = np.zeros(n)
        self.smoothing = np.zeros(n)
        self.internal_energy = np.zeros(n)
        self.density = np.zeros(n)
        self.accel = np.zeros((n, 3))
        self.species = np.zeros(n, dtype=np.uint8)
        self.timestep_level = np.zeros(n, dtype=np.uint8)
        self.ghost = np.zeros(n, dtype=np.uint8)
        self.image_shift = np.zeros((n, 3), dtype=np.int8)
        self.global_id = np.zeros(n, dtype=np.int64)
        # local row index of the owner for same-rank periodic images, else -1
        self.ghost_src = np.full(n, -1, dtype=np.int64)

    # -- basic introspection -------------------------------------------------

    @property
    def n(self) -> int:
        return self.pos.shape[0]

    @property
    def n_owned(self) -> int:
        return int(np.sum(self.ghost == 0))

    def owned_mask(self) -> np.ndarray:
        return self.ghost == 0

    def gas_mask(self) -> np.ndarray:
        return self.species == Species.GAS

    # -- construction helpers ------------------------------------------------

    def copy(self) -> "ParticleSet":
        out = ParticleSet(0)
        for name, _, _ in FIELD_SPECS:
            setattr(out, name, getattr(self, name).copy())
        return out

    def select(self, index) -> "ParticleSet":
        """New set holding rows chosen by a boolean mask or index array."""
        out = ParticleSet(0)
        for name, _, _ in FIELD_SPECS:
            setattr(out, name, np.ascontiguousarray(getattr(self, name)[index]))
        return out

    @staticmethod
    def concat(parts: list["ParticleSet"]) -> "ParticleSet":
        out = ParticleSet(0)
        for name, _, _ in FIELD_SPECS:
            setattr(out, name, np.ascontiguousarray(
                np.concatenate([getattr(p, name) for p in parts], axis=0)))
        return out

    def apply_permutation(self, perm: np.ndarray) -> None:
        """Reorder all fields in place (used by the tree build)."""
        if perm.shape[0] != self.n:
            raise HydroboxError("permutation length mismatch")
        for name, _, _ in FIELD_SPECS:
            arr = getattr(self, name)
            setattr(self, name, np.ascontiguousarray(arr[perm]))
        # ghost_src holds row indices; track them through the reorder
        if self.n:
            inv = np.empty(self.n, dtype=np.int64)
            inv[perm] = np.arange(self.n, dtype=np.int64)
            live = self.ghost_src >= 0
            self.ghost_src[live] = inv[self.ghost_src[live]]

    # -- engine interface ----------------------------------------------------

    def binning_pos(self, side_length: float) -> np.ndarray:
        """Positions shifted into the rank's extended frame (ghost images moved)."""
        return self.pos + self.image_shift.astype(np.float64) * side_length

    def state_matrix(self, eos_gamma: float) -> np.ndarray:
        """Dense (n, N_STATE_COLS) float64 snapshot consumed by pair kernels.

        Pressure and sound speed are derived from the ideal-gas EOS here so
        kernels never recompute them per pair.
        """
        n = self.n
        s = np.zeros((n, N_STATE_COLS))
        s[:, COL_X:COL_Z + 1] = self.pos
        s[:, COL_VX:COL_VZ + 1] = self.vel
        s[:, COL_MASS] = self.mass
        s[:, COL_H] = self.smoothing
        s[:, COL_RHO] = self.density
        gm1 = eos_gamma - 1.0
        u = self.internal_energy
        rho = self.density
        s[:, COL_P] = gm1 * rho * u
        s[:, COL_CS] = np.sqrt(np.maximum(eos_gamma * gm1 * u, 0.0))
        s[:, COL_SPECIES] = self.species
        return np.ascontiguousarray(s)

    def sync_alias_ghosts(self, fields=("pos", "vel", "internal_energy",
                                        "density", "smoothing", "accel")) -> None:
        """Copy owner rows into same-rank periodic-image ghosts (bitwise)."""
        alias = np.nonzero(self.ghost_src >= 0)[0]
        if alias.shape[0] == 0:
            return
        src = self.ghost_src[alias]
        for name in fields:
            arr = getattr(self, name)
            arr[alias] = arr[src]

    def fold_alias_rows(self, acc: np.ndarray) -> None:
        """Add alias-ghost rows of an accumulator onto their owners, zeroing them.

        Exact for integer accumulators: periodic self-images never absorb
        momentum, their impulses land on the owner.
        """
        alias = np.nonzero(self.ghost_src >= 0)[0]
        if alias.shape[0] == 0:
            return
        src = self.ghost_src[alias]
        np.add.at(acc, src, acc[alias])
        acc[alias] = 0

    def validate(self) -> None:
        gas = self.gas_mask()
        if np.any(self.mass <= 0):
            raise HydroboxError("non-positive particle mass")
        if np.any(self.smoothing[gas] <= 0):
            raise HydroboxError("gas particle with non-positive smoothing length")
        if np.any(self.internal_energy[gas] < 0):
            raise HydroboxError("negative internal energy")
        own = self.owned_mask()
        ids = self.global_id[own]
        if np.unique(ids).size != ids.size:
            raise HydroboxError("duplicate global_id among non-ghost particles")
