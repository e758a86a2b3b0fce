"""Python surface of the lane-split pair engine.

Wraps the compiled core with worker dispatch, error translation, operation
accounting, and the reference (all-pairs) oracle.  In deterministic mode the
engine's integer accumulators make results bitwise independent of worker
count and evaluation schedule, and expose exact per-channel totals for
conservation audits.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .cmtree import ChainingMesh, InteractionList
from .errors import HydroboxError, KernelEvalError
from .kernels import PairKernel


class EvalMode:
    DETERMINISTIC = "deterministic"
    RELAXED = "relaxed"


@dataclass(frozen=True)
class LaneGroup:
    """Lane layout: lanes [0, W/2) carry leaf-i particles, [W/2, W) leaf-j."""

    width: int = 8

    def __post_init__(self):
        if self.width < 2 or self.width % 2:
            raise HydroboxError("lane width must be even and >= 2")

    @property
    def half(self) -> int:
        return self.width // 2


@dataclass
class EvalResult:
    """Per-particle accumulations plus exact bookkeeping."""

    values: np.ndarray            # (n, C) float64
    int_acc: np.ndarray | None    # (n, C) int64 accumulators (deterministic)
    scales: np.ndarray
    counters: dict

    def channel_int_totals(self) -> list[int]:
        """Exact per-channel sums of the integer accumulators (python ints)."""
        if self.int_acc is None:
            raise HydroboxError("integer totals only exist in deterministic mode")
        return [int(sum(int(v) for v in self.int_acc[:, c]))
                for c in range(self.int_acc.shape[1])]


# operation accounting per kernel name, read by the timing ledger
_STATS: dict[str, dict] = {}
# per-worker scheduled-operation totals for utilization-distribution studies
_WORKER_OPS: dict[int, int] = {}


def reset_kernel_stats() -> None:
    _STATS.clear()


def kernel_stats() -> dict[str, dict]:
    return {k: dict(v) for k, v in _STATS.items()}


def reset_worker_ops() -> None:
    _WORKER_OPS.clear()


def worker_ops() -> dict[int, int]:
    return dict(_WORKER_OPS)


def _record_stats(kernel: PairKernel, counters: np.ndarray) -> None:
    entry = _STATS.setdefault(kernel.name, {
        "adds": 0, "muls": 0, "fused": 0, "special": 0,
        "pairs_scheduled": 0, "pairs_in_reach": 0,
        "f_evals": 0, "g_evals": 0, "rotations": 0,
    })
    sched = int(counters[K.CNT_PAIRS_SCHED])
    cost = kernel.op_cost
    entry["adds"] += cost.adds * sched
    entry["muls"] += cost.muls * sched
    entry["fused"] += cost.fmas * sched
    entry["special"] += cost.special * sched
    entry["pairs_scheduled"] += sched
    entry["pairs_in_reach"] += int(counters[K.CNT_PAIRS_IN])
    entry["f_evals"] += int(counters[K.CNT_F_EVALS])
    entry["g_evals"] += int(counters[K.CNT_G_EVALS])
    entry["rotations"] += int(counters[K.CNT_ROT_ITERS])


def _check_errors(kernel: PairKernel, counters: np.ndarray) -> None:
    kind = int(counters[K.CNT_ERR_KIND])
    if kind == K.ERR_NONE:
        return
    a, b = int(counters[K.CNT_ERR_A]), int(counters[K.CNT_ERR_B])
    if kind == K.ERR_NONFINITE:
        raise KernelEvalError(kernel.name, f"non-finite partial in leaf pair ({a}, {b})")
    raise KernelEvalError(kernel.name, f"accumulator overflow in leaf pair ({a}, {b})")


def _aux_or_empty(aux, n: int, kernel: PairKernel) -> np.ndarray:
    if aux is None:
        if kernel.n_aux:
            raise HydroboxError(f"kernel '{kernel.name}' requires aux columns")
        return np.zeros((n, 1))
    aux = np.ascontiguousarray(aux, dtype=np.float64)
    if aux.shape[1] < kernel.n_aux:
        raise HydroboxError(f"kernel '{kernel.name}' needs {kernel.n_aux} aux columns")
    return aux


def eval_interaction_list(kernel: PairKernel, ilist: InteractionList,
                          state: np.ndarray, mesh: ChainingMesh,
                          mode: str = EvalMode.DETERMINISTIC,
                          lane_width: int = 8, workers: int = 1,
                          aux: np.ndarray | None = None,
                          mirror: bool = False,
                          pshift: np.ndarray | None = None) -> EvalResult:
    """Evaluate a kernel over every listed leaf pair.

    ``pshift`` is the per-particle periodic-image shift of ghost copies
    (zeros for a bare wrapped set).  ``mirror=True`` treats the list as
    unordered pairs and scatters the channel-signed contribution to the
    partner leaf as well (only valid for kernels whose channels are
    (anti)symmetric).
    """
    if mirror and not kernel.mirrorable:
        raise HydroboxError(f"kernel '{kernel.name}' cannot be mirror-evaluated")
    if kernel.reach > ilist.reach * (1 + 1e-12):
        raise HydroboxError("interaction list was assembled with a smaller reach "
                            f"({ilist.reach:.4g}) than the kernel needs ({kernel.reach:.4g})")
    mirror_map = np.ascontiguousarray(kernel.mirror_map, dtype=np.int64)
    if not np.array_equal(kernel.scales[mirror_map], kernel.scales):
        raise HydroboxError("mirror-swapped channels must share one scale")
    group = LaneGroup(lane_width)
    n = state.shape[0]
    nc = kernel.n_channels
    aux = _aux_or_empty(aux, n, kernel)
    state = np.ascontiguousarray(state, dtype=np.float64)
    deterministic = 1 if mode == EvalMode.DETERMINISTIC else 0
    scales = kernel.scales
    L = mesh.box.side_length
    if pshift is None:
        pshift = np.zeros((n, 3), dtype=np.int8)
    pshift = np.ascontiguousarray(pshift, dtype=np.int8)

    n_pairs = len(ilist)
    workers = max(1, min(workers, max(1, n_pairs)))
    bounds = np.linspace(0, n_pairs, workers + 1).astype(np.int64)

    def run_chunk(w: int):
        out_int = np.zeros((n, nc), dtype=np.int64)
        out_flt = np.zeros((n, nc))
        counters = np.zeros(K.N_COUNTERS, dtype=np.int64)
        K.eval_pairs_core(kernel.kid, state, pshift, aux,
                          ilist.leaf_a[bounds[w]:bounds[w + 1]],
                          ilist.leaf_b[bounds[w]:bounds[w + 1]],
                          ilist.shift[bounds[w]:bounds[w + 1]],
                          mesh.leaf_start, mesh.leaf_end,
                          kernel.params, L, group.half, kernel.reach,
                          1 if kernel.include_self else 0,
                          1 if mirror else 0,
                          kernel.channel_signs, mirror_map, scales,
                          deterministic, out_int, out_flt, counters)
        return out_int, out_flt, counters

    if workers == 1:
        results = [run_chunk(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chunk, range(workers)))

    counters = np.zeros(K.N_COUNTERS, dtype=np.int64)
    per_pair_ops = kernel.op_cost.total()
    for w, (_, _, c) in enumerate(results):
        if c[K.CNT_ERR_KIND] != K.ERR_NONE and counters[K.CNT_ERR_KIND] == K.ERR_NONE:
            counters[K.CNT_ERR_KIND:] = c[K.CNT_ERR_KIND:]
        counters[:K.CNT_ERR_KIND] += c[:K.CNT_ERR_KIND]
        _WORKER_OPS[w] = _WORKER_OPS.get(w, 0) + per_pair_ops * int(c[K.CNT_PAIRS_SCHED])
    _check_errors(kernel, counters)
    _record_stats(kernel, counters)

    if deterministic:
        out_int = results[0][0]
        for other, _, _ in results[1:]:
            out_int += other
        if out_int.size and np.abs(out_int).max() >= K._ACC_GUARD:
            raise KernelEvalError(kernel.name, "integer accumulator overflow")
        values = out_int.astype(np.float64) / scales  # power-of-two: exact
        int_acc = out_int
    else:
        values = results[0][1]
        for _, other, _ in results[1:]:
            values = values + other
        int_acc = None

    cdict = {"f_evals": int(counters[K.CNT_F_EVALS]),
             "g_evals": int(counters[K.CNT_G_EVALS]),
             "rotations": int(counters[K.CNT_ROT_ITERS]),
             "pairs_scheduled": int(counters[K.CNT_PAIRS_SCHED]),
             "pairs_in_reach": int(counters[K.CNT_PAIRS_IN])}
    return EvalResult(values=values, int_acc=int_acc, scales=scales, counters=cdict)


def eval_leaf_pair(kernel: PairKernel, leaf_i: int, leaf_j: int,
                   state: np.ndarray, mesh: ChainingMesh,
                   mode: str = EvalMode.DETERMINISTIC, lane_width: int = 8,
                   aux: np.ndarray | None = None,
                   pshift: np.ndarray | None = None) -> np.ndarray:
    """Accumulations for leaf_i members from one (leaf_i, leaf_j) pair."""
    ilist = InteractionList(np.array([leaf_i], dtype=np.int64),
                            np.array([leaf_j], dtype=np.int64),
                            kernel.reach, 0)
    res = eval_interaction_list(kernel, ilist, state, mesh, mode=mode,
                                lane_width=lane_width, aux=aux, pshift=pshift)
    s, e = int(mesh.leaf_start[leaf_i]), int(mesh.leaf_end[leaf_i])
    return res.values[s:e]


def reference_pair_sum(kernel: PairKernel, state: np.ndarray, L: float,
                       mode: str = EvalMode.DETERMINISTIC,
                       targets: np.ndarray | None = None,
                       aux: np.ndarray | None = None):
    """All-pairs double-loop oracle sharing only the kernel's scalar pieces.

    Returns (values, abs_sums): per-particle accumulations and per-particle
    channel sums of |phi_ij| for relaxed-mode tolerance bounds.
    """
    state = np.ascontiguousarray(state, dtype=np.float64)
    n = state.shape[0]
    nc = kernel.n_channels
    aux = _aux_or_empty(aux, n, kernel)
    if targets is None:
        targets = np.arange(n, dtype=np.int64)
    out_int = np.zeros((n, nc), dtype=np.int64)
    out_flt = np.zeros((n, nc))
    out_abs = np.zeros((n, nc))
    deterministic = 1 if mode == EvalMode.DETERMINISTIC else 0
    K.reference_pairs_core(kernel.kid, state, aux,
                           np.asarray(targets, dtype=np.int64), kernel.params,
                           L, kernel.reach, 1 if kernel.include_self else 0,
                           kernel.scales, deterministic, out_int, out_flt, out_abs)
    if deterministic:
        return out_int.astype(np.float64) / kernel.scales, out_abs
    return out_flt, out_abs
