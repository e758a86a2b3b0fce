"""Periodic point-mass forces by direct image summation (the accuracy oracle).

The acceleration a unit mass at the origin exerts on a test particle at
displacement ``dr`` inside a periodic cube is computed as a damped sum over
real-space images plus a reciprocal-space sum, with the k = 0 mode dropped
(uniform neutralizing background, matching the PM solver's zero-mode
convention).  The result is independent of the damping parameter, which the
test suite exploits as a self-check.

A sampled 64^3 table of this field is stored as a small versioned binary
artifact with a CRC32C checksum; regenerate with ``hydrobox ewald-table``
(real-space images |n| <= 8 plus the reciprocal sum, the documented
brute-force contract).
"""

from __future__ import annotations

import json
import math
import os

import numpy as np
from numba import njit

from .crc import crc32c
from .errors import HydroboxError

TABLE_VERSION = 1
TABLE_N = 64


@njit(cache=True, nogil=True)
def _ewald_accel_core(dr, L, alpha, n_real, n_recip, out):
    """Acceleration at displacements ``dr`` from a unit point mass at origin."""
    m = dr.shape[0]
    two_over_sqrtpi = 1.1283791670955126
    four_pi_over_l3 = 4.0 * math.pi / (L * L * L)
    twopi_over_l = 2.0 * math.pi / L
    for i in range(m):
        ax = 0.0
        ay = 0.0
        az = 0.0
        # real-space damped images
        for nx in range(-n_real, n_real + 1):
            for ny in range(-n_real, n_real + 1):
                for nz in range(-n_real, n_real + 1):
                    sx = dr[i, 0] + nx * L
                    sy = dr[i, 1] + ny * L
                    sz = dr[i, 2] + nz * L
                    s2 = sx * sx + sy * sy + sz * sz
                    if s2 < 1e-24:
                        continue  # self image
                    s = math.sqrt(s2)
                    x = alpha * s
                    damp = math.erfc(x) + two_over_sqrtpi * x * math.exp(-x * x)
                    w = damp / (s2 * s)
                    ax -= sx * w
                    ay -= sy * w
                    az -= sz * w
        # reciprocal sum, k = 0 dropped
        for mx in range(-n_recip, n_recip + 1):
            for my in range(-n_recip, n_recip + 1):
                for mz in range(-n_recip, n_recip + 1):
                    if mx == 0 and my == 0 and mz == 0:
                        continue
                    kx = twopi_over_l * mx
                    ky = twopi_over_l * my
                    kz = twopi_over_l * mz
                    k2 = kx * kx + ky * ky + kz * kz
                    gauss = math.exp(-k2 / (4.0 * alpha * alpha)) / k2
                    ph = math.sin(kx * dr[i, 0] + ky * dr[i, 1] + kz * dr[i, 2])
                    w = four_pi_over_l3 * gauss * ph
                    ax -= kx * w
                    ay -= ky * w
                    az -= kz * w
        out[i, 0] = ax
        out[i, 1] = ay
        out[i, 2] = az


def ewald_accel(dr: np.ndarray, L: float, alpha: float | None = None,
                n_real: int = 4, n_recip: int = 5) -> np.ndarray:
    """Periodic acceleration field of a unit point mass, G = 1."""
    dr = np.atleast_2d(np.ascontiguousarray(dr, dtype=np.float64))
    if alpha is None:
        alpha = 2.0 / L
    out = np.empty_like(dr)
    _ewald_accel_core(dr, L, alpha, n_real, n_recip, out)
    return out


def direct_periodic_accel(pos: np.ndarray, mass: np.ndarray, L: float,
                          alpha: float | None = None, n_real: int = 4,
                          n_recip: int = 5, chunk: int = 65536) -> np.ndarray:
    """Exact periodic accelerations of a particle configuration (oracle).

    O(n^2) in pairs; intended for <= a few thousand particles.
    """
    pos = np.asarray(pos, dtype=np.float64)
    mass = np.asarray(mass, dtype=np.float64)
    n = pos.shape[0]
    acc = np.zeros((n, 3))
    pairs_i, pairs_j = np.nonzero(~np.eye(n, dtype=bool))
    for s in range(0, pairs_i.shape[0], chunk):
        i = pairs_i[s:s + chunk]
        j = pairs_j[s:s + chunk]
        dr = pos[i] - pos[j]
        a = ewald_accel(dr, L, alpha=alpha, n_real=n_real, n_recip=n_recip)
        np.add.at(acc, i, a * mass[j][:, None])
    return acc


# -- sampled table artifact ------------------------------------------------------


def build_table(n: int = TABLE_N, L: float = 1.0, n_real: int = 8,
                n_recip: int = 8) -> np.ndarray:
    """Unit-mass acceleration sampled at lattice offsets (i, j, k) * L / n."""
    axis = np.arange(n) * (L / n)
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    dr = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    acc = ewald_accel(dr, L, n_real=n_real, n_recip=n_recip)
    return acc.reshape(n, n, n, 3).astype(np.float32)


def save_table(table: np.ndarray, path: str, L: float = 1.0) -> dict:
    """Write the raw float32 payload plus a JSON sidecar with its CRC32C."""
    payload = np.ascontiguousarray(table, dtype=np.float32).tobytes()
    meta = {
        "version": TABLE_VERSION,
        "n": table.shape[0],
        "box_side": L,
        "dtype": "float32",
        "crc32c": f"{crc32c(payload):08x}",
    }
    with open(path, "wb") as fh:
        fh.write(payload)
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)
    return meta


def load_table(path: str) -> tuple[np.ndarray, dict]:
    """Load and checksum-validate a table written by :func:`save_table`."""
    with open(path + ".json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("version") != TABLE_VERSION:
        raise HydroboxError(f"unsupported table version {meta.get('version')}")
    with open(path, "rb") as fh:
        payload = fh.read()
    if f"{crc32c(payload):08x}" != meta["crc32c"]:
        raise HydroboxError(f"checksum mismatch for {os.path.basename(path)}")
    n = meta["n"]
    table = np.frombuffer(payload, dtype=np.float32).reshape(n, n, n, 3)
    return table, meta
