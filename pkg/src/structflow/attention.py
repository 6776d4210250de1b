"""Memory-lean biased attention reference kernels.

The workload: queries, keys and values of shape ``(G, R, N, d)`` where ``G``
folds batch and heads and ``R`` (= N) is a broadcast row axis, with an
additive bias of shape ``(G, N, N)`` shared by every row.  Materializing the
broadcast logits costs ``O(G * N^3)`` memory; the tiled kernel keeps an
online softmax (running max / denominator, float64 accumulators) over
fixed-size key tiles and row blocks so its transient footprint is ``O(N)``
for fixed tile sizes — the quadratic terms are only the inputs and outputs
themselves.

Every internal buffer is drawn from an :class:`AllocationAccountant`, a
flat-buffer allocator that records live and peak bytes and distinguishes
persistent results from transient scratch.  That instrumentation, not wall
time, is the deliverable: it lets tests assert the naive/tiled memory ratio
and the scaling slope deterministically.

A banded sliding-window kernel over per-atom features (linear in N for a
fixed window) rounds out the module.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InputError


# --------------------------------------------------------------------------
# instrumented allocation


@dataclass
class MemoryReport:
    """Byte accounting for one kernel invocation."""

    peak_bytes: int
    peak_transient_bytes: int
    persistent_bytes: int
    n_allocations: int


class AllocationAccountant:
    """Tracks every buffer a kernel allocates.

    Buffers are handed out as flat, zeroed numpy arrays reshaped to the
    requested shape (numpy arrays being exactly flat buffers with stride
    metadata).  ``persistent`` marks results that outlive the call; scratch
    buffers should be freed so the transient peak reflects the algorithm's
    working set.
    """

    def __init__(self) -> None:
        self._live: dict[int, tuple[int, bool]] = {}
        self.live_bytes = 0
        self.live_transient_bytes = 0
        self.peak_bytes = 0
        self.peak_transient_bytes = 0
        self.persistent_bytes = 0
        self.n_allocations = 0

    def alloc(self, shape, dtype, persistent: bool = False) -> np.ndarray:
        arr = np.zeros(shape, dtype=dtype)
        nbytes = arr.nbytes
        self._live[id(arr)] = (nbytes, persistent)
        self.n_allocations += 1
        self.live_bytes += nbytes
        if persistent:
            self.persistent_bytes += nbytes
        else:
            self.live_transient_bytes += nbytes
        self.peak_bytes = max(self.peak_bytes, self.live_bytes)
        self.peak_transient_bytes = max(
            self.peak_transient_bytes, self.live_transient_bytes
        )
        return arr

    def free(self, arr: np.ndarray) -> None:
        entry = self._live.pop(id(arr), None)
        if entry is None:
            raise InputError("freeing a buffer this accountant did not allocate")
        nbytes, persistent = entry
        self.live_bytes -= nbytes
        if not persistent:
            self.live_transient_bytes -= nbytes

    def report(self) -> MemoryReport:
        return MemoryReport(
            peak_bytes=self.peak_bytes,
            peak_transient_bytes=self.peak_transient_bytes,
            persistent_bytes=self.persistent_bytes,
            n_allocations=self.n_allocations,
        )


# --------------------------------------------------------------------------
# problem container


@dataclass
class BiasedAttentionProblem:
    """One biased-attention instance.

    ``q``, ``k``, ``v`` have shape ``(G, R, N, d)``; ``bias`` has shape
    ``(G, N, N)`` indexed by (query position, key position) and is shared
    across the ``R`` row axis — it is never stored broadcast.  ``scale``
    defaults to ``1/sqrt(d)``.
    """

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    bias: np.ndarray
    scale: Optional[float] = None

    def __post_init__(self) -> None:
        shapes = {a.shape for a in (self.q, self.k, self.v)}
        if len(shapes) != 1 or self.q.ndim != 4:
            raise InputError(
                f"q/k/v must share a (G, R, N, d) shape, got "
                f"{[a.shape for a in (self.q, self.k, self.v)]}"
            )
        g, r, n, _ = self.q.shape
        if r != n:
            raise InputError(f"row axis must match position axis, got {r} vs {n}")
        if self.bias.shape != (g, n, n):
            raise InputError(
                f"bias must have shape {(g, n, n)}, got {self.bias.shape}"
            )
        for name, arr in (("q", self.q), ("k", self.k), ("v", self.v),
                          ("bias", self.bias)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"{name} contains non-finite values")
        if self.scale is None:
            self.scale = 1.0 / np.sqrt(self.q.shape[-1])

    @property
    def dtype(self):
        return self.q.dtype


@dataclass
class AttentionResult:
    out: np.ndarray
    lse: np.ndarray  # per-row log-sum-exp of the scaled, biased logits
    report: MemoryReport


@dataclass
class AttentionGrads:
    dq: np.ndarray
    dk: np.ndarray
    dv: np.ndarray
    dbias: np.ndarray
    report: MemoryReport


# --------------------------------------------------------------------------
# naive explicit-broadcast path


def naive_biased_attention(
    problem: BiasedAttentionProblem,
    accountant: Optional[AllocationAccountant] = None,
) -> AttentionResult:
    """Reference path materializing the full ``(G, R, N, N)`` logits."""
    acc = accountant if accountant is not None else AllocationAccountant()
    q, k, v, bias = problem.q, problem.k, problem.v, problem.bias
    g, r, n, d = q.shape
    logits = acc.alloc((g, r, n, n), problem.dtype)
    np.matmul(q, k.transpose(0, 1, 3, 2), out=logits)
    logits *= problem.scale
    logits += bias[:, None, :, :]

    row_max = acc.alloc((g, r, n), np.float64)
    np.max(logits, axis=-1, out=row_max)
    probs = acc.alloc((g, r, n, n), np.float64)
    np.subtract(logits, row_max[..., None], out=probs)
    np.exp(probs, out=probs)
    denom = acc.alloc((g, r, n), np.float64)
    np.sum(probs, axis=-1, out=denom)
    probs /= denom[..., None]

    out = acc.alloc((g, r, n, d), problem.dtype, persistent=True)
    out[...] = np.matmul(probs, v.astype(np.float64))
    lse = acc.alloc((g, r, n), np.float64, persistent=True)
    np.add(row_max, np.log(denom), out=lse)

    acc.free(logits)
    acc.free(probs)
    acc.free(row_max)
    acc.free(denom)
    return AttentionResult(out=out, lse=lse, report=acc.report())


def naive_biased_attention_backward(
    problem: BiasedAttentionProblem,
    d_out: np.ndarray,
    accountant: Optional[AllocationAccountant] = None,
) -> AttentionGrads:
    """Explicit-broadcast backward pass (gradient oracle for the tiled path)."""
    acc = accountant if accountant is not None else AllocationAccountant()
    q, k, v, bias = problem.q, problem.k, problem.v, problem.bias
    g, r, n, d = q.shape
    scale = problem.scale

    logits = acc.alloc((g, r, n, n), np.float64)
    np.matmul(q.astype(np.float64), k.transpose(0, 1, 3, 2).astype(np.float64),
              out=logits)
    logits *= scale
    logits += bias[:, None, :, :]
    logits -= logits.max(axis=-1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=-1, keepdims=True)
    probs = logits  # (g, r, n, n), renamed for clarity

    do64 = d_out.astype(np.float64)
    dv = acc.alloc((g, r, n, d), problem.dtype, persistent=True)
    dv[...] = np.matmul(probs.transpose(0, 1, 3, 2), do64)
    dp = acc.alloc((g, r, n, n), np.float64)
    np.matmul(do64, v.transpose(0, 1, 3, 2).astype(np.float64), out=dp)
    inner = np.sum(dp * probs, axis=-1, keepdims=True)
    ds = dp
    ds -= inner
    ds *= probs

    dq = acc.alloc((g, r, n, d), problem.dtype, persistent=True)
    dq[...] = scale * np.matmul(ds, k.astype(np.float64))
    dk = acc.alloc((g, r, n, d), problem.dtype, persistent=True)
    dk[...] = scale * np.matmul(ds.transpose(0, 1, 3, 2), q.astype(np.float64))
    dbias = acc.alloc((g, n, n), problem.dtype, persistent=True)
    dbias[...] = ds.sum(axis=1)

    acc.free(probs)
    acc.free(ds)
    return AttentionGrads(dq=dq, dk=dk, dv=dv, dbias=dbias, report=acc.report())


# --------------------------------------------------------------------------
# tiled online-softmax path


DEFAULT_KEY_TILE = 16
DEFAULT_ROW_BLOCK = 16


def tiled_biased_attention(
    problem: BiasedAttentionProblem,
    key_tile: int = DEFAULT_KEY_TILE,
    row_block: int = DEFAULT_ROW_BLOCK,
    accountant: Optional[AllocationAccountant] = None,
) -> AttentionResult:
    """Online-softmax attention over fixed-size key tiles and row blocks.

    Never materializes the broadcast logits; the bias tile is read once per
    key tile and broadcast arithmetically across the row block.  Running
    max, denominator and the output accumulator are float64.  Tiles are
    processed sequentially, so results are deterministic (the accumulation
    order is fixed).
    """
    if key_tile < 1 or row_block < 1:
        raise InputError("key_tile and row_block must be positive")
    acc = accountant if accountant is not None else AllocationAccountant()
    q, k, v, bias = problem.q, problem.k, problem.v, problem.bias
    g, r, n, d = q.shape
    scale = problem.scale

    out = acc.alloc((g, r, n, d), problem.dtype, persistent=True)
    lse = acc.alloc((g, r, n), np.float64, persistent=True)

    rb = min(row_block, r)
    tk = min(key_tile, n)
    band = acc.alloc((rb, n, tk), problem.dtype)
    pbuf = acc.alloc((rb, n, tk), np.float64)
    m_run = acc.alloc((rb, n), np.float64)
    l_run = acc.alloc((rb, n), np.float64)
    m_new = acc.alloc((rb, n), np.float64)
    o_acc = acc.alloc((rb, n, d), np.float64)
    o_tmp = acc.alloc((rb, n, d), np.float64)

    for gi in range(g):
        for r0 in range(0, r, rb):
            r1 = min(r0 + rb, r)
            nr = r1 - r0
            qb = q[gi, r0:r1]
            m_run[:nr] = -np.inf
            l_run[:nr] = 0.0
            o_acc[:nr] = 0.0
            for k0 in range(0, n, tk):
                k1 = min(k0 + tk, n)
                nk = k1 - k0
                kb = k[gi, r0:r1, k0:k1]
                np.matmul(qb, kb.transpose(0, 2, 1), out=band[:nr, :, :nk])
                band[:nr, :, :nk] *= scale
                band[:nr, :, :nk] += bias[gi, :, k0:k1]  # read once, broadcast
                tile_max = band[:nr, :, :nk].max(axis=-1)
                np.maximum(m_run[:nr], tile_max, out=m_new[:nr])
                correction = np.exp(m_run[:nr] - m_new[:nr])
                l_run[:nr] *= correction
                o_acc[:nr] *= correction[..., None]
                np.subtract(
                    band[:nr, :, :nk], m_new[:nr, :, None], out=pbuf[:nr, :, :nk]
                )
                np.exp(pbuf[:nr, :, :nk], out=pbuf[:nr, :, :nk])
                l_run[:nr] += pbuf[:nr, :, :nk].sum(axis=-1)
                np.matmul(
                    pbuf[:nr, :, :nk],
                    v[gi, r0:r1, k0:k1].astype(np.float64),
                    out=o_tmp[:nr],
                )
                o_acc[:nr] += o_tmp[:nr]
                m_run[:nr] = m_new[:nr]
            out[gi, r0:r1] = o_acc[:nr] / l_run[:nr, :, None]
            lse[gi, r0:r1] = m_run[:nr] + np.log(l_run[:nr])

    for buf in (band, pbuf, m_run, l_run, m_new, o_acc, o_tmp):
        acc.free(buf)
    return AttentionResult(out=out, lse=lse, report=acc.report())


def tiled_biased_attention_backward(
    problem: BiasedAttentionProblem,
    d_out: np.ndarray,
    forward: Optional[AttentionResult] = None,
    key_tile: int = DEFAULT_KEY_TILE,
    row_block: int = DEFAULT_ROW_BLOCK,
    accountant: Optional[AllocationAccountant] = None,
) -> AttentionGrads:
    """Tiled backward pass.

    Probabilities are recomputed per tile from the stored log-sum-exp, so no
    ``O(N^3)`` tensor is ever held.  Bias gradients from every row of every
    row block accumulate into the single shared ``(G, N, N)`` matrix.
    """
    acc = accountant if accountant is not None else AllocationAccountant()
    if forward is None:
        forward = tiled_biased_attention(
            problem, key_tile=key_tile, row_block=row_block
        )
    q, k, v, bias = problem.q, problem.k, problem.v, problem.bias
    g, r, n, d = q.shape
    scale = problem.scale

    dq = acc.alloc((g, r, n, d), problem.dtype, persistent=True)
    dk = acc.alloc((g, r, n, d), problem.dtype, persistent=True)
    dv = acc.alloc((g, r, n, d), problem.dtype, persistent=True)
    dbias = acc.alloc((g, n, n), problem.dtype, persistent=True)

    rb = min(row_block, r)
    tk = min(key_tile, n)
    pbuf = acc.alloc((rb, n, tk), np.float64)
    dpbuf = acc.alloc((rb, n, tk), np.float64)
    rowdot = acc.alloc((rb, n), np.float64)
    tmp_rd = acc.alloc((rb, n, d), np.float64)
    tmp_kd = acc.alloc((rb, tk, d), np.float64)

    for gi in range(g):
        for r0 in range(0, r, rb):
            r1 = min(r0 + rb, r)
            nr = r1 - r0
            qb = q[gi, r0:r1].astype(np.float64)
            dob = d_out[gi, r0:r1].astype(np.float64)
            rowdot[:nr] = np.sum(
                dob * forward.out[gi, r0:r1].astype(np.float64), axis=-1
            )
            for k0 in range(0, n, tk):
                k1 = min(k0 + tk, n)
                nk = k1 - k0
                kb = k[gi, r0:r1, k0:k1].astype(np.float64)
                np.matmul(qb, kb.transpose(0, 2, 1), out=pbuf[:nr, :, :nk])
                pbuf[:nr, :, :nk] *= scale
                pbuf[:nr, :, :nk] += bias[gi, :, k0:k1]
                pbuf[:nr, :, :nk] -= forward.lse[gi, r0:r1][..., None]
                np.exp(pbuf[:nr, :, :nk], out=pbuf[:nr, :, :nk])

                np.matmul(
                    pbuf[:nr, :, :nk].transpose(0, 2, 1), dob, out=tmp_kd[:nr, :nk]
                )
                dv[gi, r0:r1, k0:k1] += tmp_kd[:nr, :nk]
                np.matmul(
                    dob,
                    v[gi, r0:r1, k0:k1].transpose(0, 2, 1).astype(np.float64),
                    out=dpbuf[:nr, :, :nk],
                )
                dpbuf[:nr, :, :nk] -= rowdot[:nr, :, None]
                dpbuf[:nr, :, :nk] *= pbuf[:nr, :, :nk]
                ds = dpbuf[:nr, :, :nk]

                dbias[gi, :, k0:k1] += ds.sum(axis=0)
                np.matmul(ds, kb, out=tmp_rd[:nr])
                dq[gi, r0:r1] += scale * tmp_rd[:nr]
                np.matmul(ds.transpose(0, 2, 1), qb, out=tmp_kd[:nr, :nk])
                dk[gi, r0:r1, k0:k1] += scale * tmp_kd[:nr, :nk]

    for buf in (pbuf, dpbuf, rowdot, tmp_rd, tmp_kd):
        acc.free(buf)
    return AttentionGrads(dq=dq, dk=dk, dv=dv, dbias=dbias, report=acc.report())


# --------------------------------------------------------------------------
# sliding-window attention over per-atom features


@dataclass
class SlidingWindowSpec:
    """Half-width ``window`` and sparse additive bias for banded attention.

    ``pair_bias`` maps ``(i, j)`` index pairs (within the window) to additive
    logit terms; it is stored sparse and never expanded to a dense matrix.
    """

    window: int
    pair_bias: dict[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.window < 0:
            raise InputError(f"window must be >= 0, got {self.window}")
        for (i, j) in self.pair_bias:
            if abs(i - j) > self.window:
                raise InputError(
                    f"pair bias ({i}, {j}) lies outside window {self.window}"
                )


def sliding_window_attention(
    x: np.ndarray,
    spec: SlidingWindowSpec,
    wq: Optional[np.ndarray] = None,
    wk: Optional[np.ndarray] = None,
    wv: Optional[np.ndarray] = None,
    scale: Optional[float] = None,
    accountant: Optional[AllocationAccountant] = None,
) -> np.ndarray:
    """Banded self-attention: atom ``i`` attends to ``|i - j| <= window``.

    Projections default to the identity, so ``window=0`` returns each atom's
    own (projected) value.  Work and memory are ``O(N * window)``: logits are
    held as a ``(N, 2w+1)`` band, never as an ``N x N`` matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InputError(f"x must be (N, d), got shape {x.shape}")
    n = x.shape[0]
    acc = accountant if accountant is not None else AllocationAccountant()
    q = x @ wq if wq is not None else x
    k = x @ wk if wk is not None else x
    v = x @ wv if wv is not None else x
    if scale is None:
        scale = 1.0 / np.sqrt(q.shape[1])
    w = spec.window
    width = 2 * w + 1

    band = acc.alloc((n, width), np.float64)
    band[...] = -np.inf
    for delta in range(-w, w + 1):
        lo = max(0, -delta)
        hi = min(n, n - delta)
        if lo >= hi:
            continue
        band[lo:hi, delta + w] = scale * np.sum(
            q[lo:hi] * k[lo + delta:hi + delta], axis=1
        )
    for (i, j), value in spec.pair_bias.items():
        if 0 <= i < n and 0 <= j < n:
            band[i, j - i + w] += value

    band -= band.max(axis=1, keepdims=True)
    np.exp(band, out=band)
    band /= band.sum(axis=1, keepdims=True)

    out = acc.alloc((n, v.shape[1]), np.float64, persistent=True)
    for delta in range(-w, w + 1):
        lo = max(0, -delta)
        hi = min(n, n - delta)
        if lo >= hi:
            continue
        out[lo:hi] += band[lo:hi, delta + w, None] * v[lo + delta:hi + delta]
    acc.free(band)
    return out


# --------------------------------------------------------------------------
# benchmarking


@dataclass
class BenchRow:
    n: int
    mode: str
    key_tile: int
    peak_bytes: int
    peak_transient_bytes: int
    wall_time_s: float


def run_attention_bench(
    sizes: tuple[int, ...] = (32, 64, 128),
    g: int = 2,
    d: int = 8,
    key_tile: int = DEFAULT_KEY_TILE,
    row_block: int = DEFAULT_ROW_BLOCK,
    seed: int = 0,
    modes: tuple[str, ...] = ("naive", "tiled"),
) -> list[BenchRow]:
    """Peak-memory and wall-time rows for the naive and tiled paths."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        problem = BiasedAttentionProblem(
            q=rng.standard_normal((g, n, n, d)).astype(np.float32),
            k=rng.standard_normal((g, n, n, d)).astype(np.float32),
            v=rng.standard_normal((g, n, n, d)).astype(np.float32),
            bias=rng.standard_normal((g, n, n)).astype(np.float32),
        )
        for mode in modes:
            acc = AllocationAccountant()
            start = time.perf_counter()
            if mode == "naive":
                naive_biased_attention(problem, accountant=acc)
            elif mode == "tiled":
                tiled_biased_attention(
                    problem, key_tile=key_tile, row_block=row_block, accountant=acc
                )
            else:
                raise InputError(f"unknown mode {mode!r}")
            elapsed = time.perf_counter() - start
            report = acc.report()
            rows.append(
                BenchRow(
                    n=n,
                    mode=mode,
                    key_tile=key_tile,
                    peak_bytes=report.peak_bytes,
                    peak_transient_bytes=report.peak_transient_bytes,
                    wall_time_s=elapsed,
                )
            )
    return rows
