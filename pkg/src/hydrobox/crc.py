"""CRC32C (Castagnoli) over byte buffers; table-driven, numba-compiled."""

from __future__ import annotations

import numpy as np
from numba import njit


def _build_table() -> np.ndarray:
    poly = np.uint64(0x82F63B78)
    table = np.empty(256, dtype=np.uint64)
    for i in range(256):
        c = np.uint64(i)
        for _ in range(8):
            c = (c >> np.uint64(1)) ^ (poly if c & np.uint64(1) else np.uint64(0))
        table[i] = c
    return table


_TABLE = _build_table()
_MASK = np.uint64(0xFFFFFFFF)


@njit(cache=True)
def _crc32c_update(data, crc, table):
    c = crc
    for k in range(data.shape[0]):
        c = (c >> np.uint64(8)) ^ table[np.int64((c ^ np.uint64(data[k])) & np.uint64(0xFF))]
    return c


def crc32c(data: bytes | np.ndarray, value: int = 0) -> int:
    """CRC32C of ``data``; pass a previous value to continue a running CRC."""
    buf = np.frombuffer(data, dtype=np.uint8) if isinstance(data, (bytes, bytearray, memoryview)) \
        else np.ascontiguousarray(data).view(np.uint8).ravel()
    c = np.uint64(value ^ 0xFFFFFFFF) & _MASK
    c = _crc32c_update(buf, c, _TABLE)
    return int((c ^ _MASK) & _MASK)
