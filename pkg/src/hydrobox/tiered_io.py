"""Two-tier checkpoint store: synchronous tier-1 writes, asynchronous tier-2 bleed.

Every mutation goes through temp-write + rename with a zero-length COMPLETE
marker written last, so a process killed at any instant leaves either a
loadable checkpoint or recognizable garbage.  Background transfer threads
copy finished checkpoints to tier-2 (CRC-verified, optionally throttled)
without ever blocking the simulation, and retirement keeps the newest K
complete checkpoints per tier, never touching the only loadable one.

All filesystem mutations are routed through a small FS shim so the test
suite can inject crashes (including torn writes) at arbitrary operation
boundaries and then exercise recovery on the directory state left behind.
"""

from __future__ import annotations

import logging
import os
import re
import shutil
import struct
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .config import TierConfig
from .crc import crc32c
from .errors import CheckpointError
from .particles import ParticleSet

log = logging.getLogger(__name__)

HCKP_MAGIC = b"HCKP"
HCKP_VERSION = 1
HCKP_SENTINEL = 0x01020304
TAG_F32, TAG_F64, TAG_U64, TAG_U8 = 1, 2, 3, 4

MARKER = "COMPLETE"
MANIFEST = "manifest.txt"

# (field name, type tag, particle attribute, column or None, store/load view)
_CKPT_FIELDS = [
    ("pos_x", TAG_F64, "pos", 0), ("pos_y", TAG_F64, "pos", 1), ("pos_z", TAG_F64, "pos", 2),
    ("vel_x", TAG_F64, "vel", 0), ("vel_y", TAG_F64, "vel", 1), ("vel_z", TAG_F64, "vel", 2),
    ("mass", TAG_F64, "mass", None),
    ("smoothing", TAG_F64, "smoothing", None),
    ("internal_energy", TAG_F64, "internal_energy", None),
    ("density", TAG_F64, "density", None),
    ("accel_x", TAG_F64, "accel", 0), ("accel_y", TAG_F64, "accel", 1),
    ("accel_z", TAG_F64, "accel", 2),
    ("species", TAG_U8, "species", None),
    ("timestep_level", TAG_U8, "timestep_level", None),
    ("ghost", TAG_U8, "ghost", None),
    ("image_shift_x", TAG_U8, "image_shift", 0),
    ("image_shift_y", TAG_U8, "image_shift", 1),
    ("image_shift_z", TAG_U8, "image_shift", 2),
    ("global_id", TAG_U64, "global_id", None),
    ("ghost_src", TAG_U64, "ghost_src", None),
]

_TAG_DTYPE = {TAG_F32: np.float32, TAG_F64: np.float64,
              TAG_U64: np.uint64, TAG_U8: np.uint8}


def _field_payload(p: ParticleSet, name: str, tag: int, attr: str, col) -> bytes:
    arr = getattr(p, attr)
    if col is not None:
        arr = arr[:, col]
    if name.startswith("image_shift"):
        arr = (arr.astype(np.int16) + 1).astype(np.uint8)  # {-1,0,1} -> {0,1,2}
    elif tag == TAG_U64:
        arr = np.ascontiguousarray(arr, dtype=np.int64).view(np.uint64)
    else:
        arr = np.ascontiguousarray(arr, dtype=_TAG_DTYPE[tag])
    return np.ascontiguousarray(arr).tobytes()


def encode_rank_checkpoint(p: ParticleSet, step: int, rank: int) -> bytes:
    """Bit-exact rank state in the versioned block format."""
    n_ghost = int(np.sum(p.ghost == 1))
    n_own = p.n - n_ghost
    out = bytearray()
    out += HCKP_MAGIC
    out += struct.pack("<IIQIQQI", HCKP_VERSION, HCKP_SENTINEL, step, rank,
                       n_own, n_ghost, len(_CKPT_FIELDS))
    for name, tag, attr, col in _CKPT_FIELDS:
        nm = name.encode()
        payload = _field_payload(p, name, tag, attr, col)
        out += struct.pack("<H", len(nm)) + nm + struct.pack("<B", tag)
        out += payload
        out += struct.pack("<I", crc32c(payload))
    out += struct.pack("<I", crc32c(bytes(out)))
    return bytes(out)


def decode_rank_checkpoint(blob: bytes):
    """Inverse of :func:`encode_rank_checkpoint`; validates every CRC."""
    if blob[:4] != HCKP_MAGIC:
        raise CheckpointError("bad checkpoint magic")
    (version, sentinel, step, rank, n_own, n_ghost,
     n_fields) = struct.unpack_from("<IIQIQQI", blob, 4)
    if version != HCKP_VERSION or sentinel != HCKP_SENTINEL:
        raise CheckpointError("unsupported checkpoint version or byte order")
    if struct.unpack("<I", blob[-4:])[0] != crc32c(blob[:-4]):
        raise CheckpointError("checkpoint footer CRC mismatch")
    n = n_own + n_ghost
    p = ParticleSet(n)
    off = 4 + struct.calcsize("<IIQIQQI")
    for _ in range(n_fields):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + nlen].decode()
        off += nlen
        (tag,) = struct.unpack_from("<B", blob, off)
        off += 1
        nbytes = n * np.dtype(_TAG_DTYPE[tag]).itemsize
        payload = blob[off:off + nbytes]
        off += nbytes
        (crc,) = struct.unpack_from("<I", blob, off)
        off += 4
        if crc != crc32c(payload):
            raise CheckpointError(f"field '{name}' CRC mismatch")
        arr = np.frombuffer(payload, dtype=_TAG_DTYPE[tag]).copy()
        spec = next(((t, a, c) for nm, t, a, c in _CKPT_FIELDS if nm == name), None)
        if spec is None:
            continue  # tolerate unknown fields from newer writers
        tag_, attr, col = spec
        if name.startswith("image_shift"):
            arr = arr.astype(np.int16) - 1
        if tag == TAG_U64:
            arr = arr.view(np.int64)
        target = getattr(p, attr)
        if col is None:
            target[:] = arr
        else:
            target[:, col] = arr
    return p, int(step), int(rank)


# -- filesystem shim --------------------------------------------------------------


class KillSimulation(Exception):
    """Raised by fault-injecting FS shims to emulate a crash."""


class FsLayer:
    """All store mutations funnel through here (tests subclass to inject faults)."""

    def write_bytes(self, path: str, data: bytes) -> None:
        with open(path, "wb") as fh:
            fh.write(data)

    def rename(self, src: str, dst: str) -> None:
        os.replace(src, dst)

    def delete(self, path: str) -> None:
        if os.path.isdir(path):
            shutil.rmtree(path, ignore_errors=True)
        elif os.path.exists(path):
            os.remove(path)

    def mkdir(self, path: str) -> None:
        os.makedirs(path, exist_ok=True)


@dataclass
class CheckpointManifest:
    step: int
    epoch: int
    config_hash: str
    census: int
    n_ranks: int
    files: list  # (name, length, crc32c int)
    state: str = "Tier1Complete"  # Tier1Complete | Tier2Complete | Retired

    def text(self) -> str:
        lines = [f"step = {self.step}", f"epoch = {self.epoch}",
                 f"config_hash = {self.config_hash}", f"census = {self.census}",
                 f"n_ranks = {self.n_ranks}"]
        for name, length, crc in self.files:
            lines.append(f"file = {name} {length} {crc:08x}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def parse(text: str) -> "CheckpointManifest":
        kv = {}
        files = []
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "file":
                name, length, crc = value.split()
                files.append((name, int(length), int(crc, 16)))
            else:
                kv[key] = value
        return CheckpointManifest(step=int(kv["step"]), epoch=int(kv["epoch"]),
                                  config_hash=kv["config_hash"],
                                  census=int(kv["census"]),
                                  n_ranks=int(kv["n_ranks"]), files=files)


@dataclass
class TransferHandle:
    step: int
    epoch: int
    thread: threading.Thread | None = None
    started: float = 0.0
    finished: float = 0.0
    bytes_moved: int = 0
    failed: bool = False

    def wait(self, timeout=None) -> None:
        if self.thread is not None:
            self.thread.join(timeout)

    @property
    def done(self) -> bool:
        return self.thread is not None and not self.thread.is_alive()


_CKPT_RE = re.compile(r"^ckpt_step(\d+)_ep(\d+)$")


def _ckpt_dirname(step: int, epoch: int) -> str:
    return f"ckpt_step{step:06d}_ep{epoch:04d}"


class TieredStore:
    """Checkpoint and analysis-output manager over two storage tiers."""

    def __init__(self, cfg: TierConfig, config_hash: str = "",
                 fs: FsLayer | None = None, epoch: int | None = None):
        cfg.validate()
        if not cfg.tier1_root or not cfg.tier2_root:
            raise CheckpointError("both tier roots must be configured")
        self.cfg = cfg
        self.config_hash = config_hash
        self.fs = fs or FsLayer()
        for root in (cfg.tier1_root, cfg.tier2_root):
            self.fs.mkdir(root)
            probe = os.path.join(root, ".probe.tmp")
            self.fs.write_bytes(probe, b"")
            self.fs.delete(probe)
        self.fs.mkdir(os.path.join(cfg.tier1_root, "analysis"))
        self.fs.mkdir(os.path.join(cfg.tier2_root, "analysis"))
        self.epoch = self._next_epoch() if epoch is None else epoch
        self.transfers: list[TransferHandle] = []
        self.events: list[dict] = []
        self._lock = threading.Lock()

    # -- helpers ------------------------------------------------------------------

    def _next_epoch(self) -> int:
        newest = -1
        for root in (self.cfg.tier1_root, self.cfg.tier2_root):
            for name in os.listdir(root):
                m = _CKPT_RE.match(name)
                if m:
                    newest = max(newest, int(m.group(2)))
        return newest + 1

    def _event(self, kind: str, **kw) -> None:
        with self._lock:
            self.events.append({"kind": kind, "time": time.perf_counter(), **kw})

    def _atomic_write(self, path: str, data: bytes) -> None:
        tmp = path + ".tmp"
        self.fs.write_bytes(tmp, data)
        self.fs.rename(tmp, path)

    def list_checkpoints(self, root: str):
        """(step, epoch, dir) of every marker-complete checkpoint under root."""
        out = []
        if not os.path.isdir(root):
            return out
        for name in sorted(os.listdir(root)):
            m = _CKPT_RE.match(name)
            if m and os.path.exists(os.path.join(root, name, MARKER)):
                out.append((int(m.group(1)), int(m.group(2)),
                            os.path.join(root, name)))
        return out

    # -- write path ---------------------------------------------------------------

    def write_checkpoint(self, rank_sets: list[ParticleSet], step: int) -> CheckpointManifest:
        """Synchronous tier-1 checkpoint of every rank's owned + ghost state."""
        t0 = time.perf_counter()
        dirname = _ckpt_dirname(step, self.epoch)
        cdir = os.path.join(self.cfg.tier1_root, dirname)
        self.fs.mkdir(cdir)
        files = []
        total = 0
        for rank, rs in enumerate(rank_sets):
            blob = encode_rank_checkpoint(rs, step, rank)
            name = f"rank{rank:04d}.bin"
            self._atomic_write(os.path.join(cdir, name), blob)
            files.append((name, len(blob), crc32c(blob)))
            total += len(blob)
        census = sum(int(np.sum(rs.ghost == 0)) for rs in rank_sets)
        manifest = CheckpointManifest(step=step, epoch=self.epoch,
                                      config_hash=self.config_hash,
                                      census=census, n_ranks=len(rank_sets),
                                      files=files)
        self._atomic_write(os.path.join(cdir, MANIFEST), manifest.text().encode())
        self._atomic_write(os.path.join(cdir, MARKER), b"")
        dt = time.perf_counter() - t0
        self._event("tier1_write", step=step, bytes=total, seconds=dt,
                    start=t0, end=t0 + dt)
        return manifest

    # -- asynchronous bleed -------------------------------------------------------

    def bleed_to_tier2(self, manifest: CheckpointManifest) -> TransferHandle:
        """Launch the background copy to tier-2; returns immediately."""
        handle = TransferHandle(step=manifest.step, epoch=manifest.epoch)

        def run():
            handle.started = time.perf_counter()
            src = os.path.join(self.cfg.tier1_root,
                               _ckpt_dirname(manifest.step, manifest.epoch))
            dst = os.path.join(self.cfg.tier2_root,
                               _ckpt_dirname(manifest.step, manifest.epoch))
            for attempt in range(3):
                try:
                    self.fs.mkdir(dst)
                    moved = 0
                    for name, length, crc in manifest.files:
                        with open(os.path.join(src, name), "rb") as fh:
                            data = fh.read()
                        self._throttled_write(os.path.join(dst, name), data)
                        with open(os.path.join(dst, name), "rb") as fh:
                            copied = fh.read()
                        if len(copied) != length or crc32c(copied) != crc:
                            raise CheckpointError(f"tier-2 verification failed: {name}")
                        moved += length
                    self._atomic_write(os.path.join(dst, MANIFEST),
                                       manifest.text().encode())
                    self._atomic_write(os.path.join(dst, MARKER), b"")
                    manifest.state = "Tier2Complete"
                    handle.bytes_moved = moved
                    handle.finished = time.perf_counter()
                    self._event("tier2_transfer", step=manifest.step, bytes=moved,
                                seconds=handle.finished - handle.started,
                                start=handle.started, end=handle.finished)
                    return
                except KillSimulation:
                    # injected crash: this "node" dies mid-transfer
                    handle.failed = True
                    handle.finished = time.perf_counter()
                    return
                except Exception as exc:  # noqa: BLE001 - retried, then alarmed
                    log.warning("tier-2 transfer attempt %d failed: %s", attempt + 1, exc)
                    time.sleep(0.05 * 2**attempt)
            handle.failed = True
            handle.finished = time.perf_counter()
            self._event("tier2_failed", step=manifest.step)
            log.error("tier-2 transfer failed after retries; checkpoint kept on tier-1")

        handle.thread = threading.Thread(target=run, daemon=True,
                                         name=f"bleed-{manifest.step}")
        handle.thread.start()
        self.transfers.append(handle)
        return handle

    def _throttled_write(self, path: str, data: bytes) -> None:
        rate = self.cfg.throttle_bytes_per_s
        tmp = path + ".tmp"
        if rate <= 0:
            self.fs.write_bytes(tmp, data)
        else:
            chunk = max(1, int(rate * 0.02))
            with open(tmp, "wb") as fh:
                for off in range(0, len(data), chunk):
                    fh.write(data[off:off + chunk])
                    time.sleep(len(data[off:off + chunk]) / rate)
        self.fs.rename(tmp, path)

    def wait_transfers(self, timeout: float | None = None) -> None:
        for h in list(self.transfers):
            h.wait(timeout)

    # -- retirement ---------------------------------------------------------------

    def retire_old(self) -> list[tuple[int, int]]:
        """Delete stale checkpoints per tier; returns retired (step, epoch) pairs.

        Tier-2 keeps the newest ``retention_keep`` complete checkpoints (or a
        wall-clock window); tier-1 keeps ``tier1_keep`` and never deletes a
        checkpoint that has not reached tier-2.  The newest loadable
        checkpoint overall is never deleted.
        """
        retired = []
        t2 = self.list_checkpoints(self.cfg.tier2_root)
        t1 = self.list_checkpoints(self.cfg.tier1_root)
        all_complete = sorted(set((s, e) for s, e, _ in t1 + t2))
        if not all_complete:
            return retired
        newest = all_complete[-1]

        t2_sorted = sorted(t2, key=lambda se: (se[0], se[1]))
        if self.cfg.retention_mode == "count":
            drop2 = t2_sorted[:-self.cfg.retention_keep] if len(t2_sorted) > self.cfg.retention_keep else []
        else:
            now = time.time()
            drop2 = [c for c in t2_sorted[:-1]
                     if now - os.path.getmtime(c[2]) > self.cfg.retention_window_s]
        for step, epoch, path in drop2:
            if (step, epoch) == newest:
                continue
            self._retire_dir(path)
            retired.append((step, epoch))

        tier2_done = {(s, e) for s, e, _ in self.list_checkpoints(self.cfg.tier2_root)}
        t1_sorted = sorted(t1, key=lambda se: (se[0], se[1]))
        drop1 = t1_sorted[:-self.cfg.tier1_keep] if len(t1_sorted) > self.cfg.tier1_keep else []
        for step, epoch, path in drop1:
            if (step, epoch) == newest and (step, epoch) not in tier2_done:
                continue
            if (step, epoch) not in tier2_done:
                continue  # exempt until transferred
            self._retire_dir(path)
        return retired

    def _retire_dir(self, path: str) -> None:
        # marker first so a crash mid-delete leaves an ignorable partial dir
        try:
            self.fs.delete(os.path.join(path, MARKER))
            self.fs.delete(path)
        except KillSimulation:
            raise
        except OSError as exc:
            log.warning("retirement of %s failed (will retry next step): %s", path, exc)

    # -- recovery -----------------------------------------------------------------

    def validate_checkpoint(self, path: str) -> CheckpointManifest | None:
        try:
            with open(os.path.join(path, MANIFEST), "r", encoding="utf-8") as fh:
                manifest = CheckpointManifest.parse(fh.read())
        except (OSError, ValueError, KeyError):
            return None
        for name, length, crc in manifest.files:
            fp = os.path.join(path, name)
            try:
                with open(fp, "rb") as fh:
                    data = fh.read()
            except OSError:
                return None
            if len(data) != length or crc32c(data) != crc:
                return None
        return manifest

    def recover_latest(self):
        """Newest loadable checkpoint across both tiers, or None.

        Prefers tier-1 on (step, epoch) ties; falls back (with a warning)
        when the newest candidate fails validation.
        """
        candidates = []  # (step, epoch, tier_pref, path)
        for pref, root in ((1, self.cfg.tier1_root), (0, self.cfg.tier2_root)):
            for step, epoch, path in self.list_checkpoints(root):
                candidates.append((step, epoch, pref, path))
        candidates.sort(reverse=True)
        for step, epoch, _, path in candidates:
            manifest = self.validate_checkpoint(path)
            if manifest is None:
                log.warning("checkpoint %s is not loadable; trying an older one", path)
                continue
            rank_sets = []
            for rank in range(manifest.n_ranks):
                with open(os.path.join(path, f"rank{rank:04d}.bin"), "rb") as fh:
                    p, pstep, prank = decode_rank_checkpoint(fh.read())
                if pstep != step or prank != rank:
                    log.warning("checkpoint %s has inconsistent rank files", path)
                    rank_sets = None
                    break
                rank_sets.append(p)
            if rank_sets is None:
                continue
            census = sum(int(np.sum(rs.ghost == 0)) for rs in rank_sets)
            if census != manifest.census:
                log.warning("checkpoint %s census mismatch", path)
                continue
            return rank_sets, step, manifest
        return None

    # -- analysis outputs (bled, never retired) ------------------------------------

    def write_analysis(self, name: str, payload: bytes) -> None:
        t0 = time.perf_counter()
        path = os.path.join(self.cfg.tier1_root, "analysis", name)
        self._atomic_write(path, payload)
        dt = time.perf_counter() - t0
        self._event("analysis_write", name=name, bytes=len(payload), seconds=dt,
                    start=t0, end=t0 + dt)

        def run():
            dst = os.path.join(self.cfg.tier2_root, "analysis", name)
            for attempt in range(3):
                try:
                    self._throttled_write(dst, payload)
                    return
                except KillSimulation:
                    return
                except Exception as exc:  # noqa: BLE001
                    log.warning("analysis bleed attempt %d failed: %s", attempt + 1, exc)
                    time.sleep(0.05 * 2**attempt)

        th = threading.Thread(target=run, daemon=True, name=f"analysis-{name}")
        th.start()
        handle = TransferHandle(step=-1, epoch=self.epoch, thread=th)
        self.transfers.append(handle)
