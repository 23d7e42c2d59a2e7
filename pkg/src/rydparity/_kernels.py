"""Statevector kernels for the QAOA trajectory sampler.

Trajectory states are complex64: measurement statistics need ~1e-6 relative
accuracy at most, and halving the memory traffic roughly doubles shot
throughput. The public layer operations stay complex128 in qaoa.py.

With numba present the rotation and diagonal-phase kernels run fused and
in place; otherwise numpy fallbacks (same arithmetic, more traffic) keep the
package functional.
"""

from __future__ import annotations

import warnings

import numpy as np

try:
    with warnings.catch_warnings():
        # stale-TBB advisory from the threading-layer probe; workqueue/omp is fine
        warnings.filterwarnings("ignore", message=".*TBB.*")
        from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap

    prange = range


@njit(cache=True, parallel=True)
def _rot_contiguous(fview, c, s, width, n):  # pragma: no cover - compiled
    # x-rotation butterflies on the lowest `width` bits, explicit float32
    # arithmetic on the interleaved re/im view; blocks are contiguous runs
    mid = 1 << width
    nblocks = n // mid
    chunk = 64
    nchunks = (nblocks + chunk - 1) // chunk
    for ch in prange(nchunks):
        tre = np.empty(mid, dtype=np.float32)
        tim = np.empty(mid, dtype=np.float32)
        for nb in range(ch * chunk, min((ch + 1) * chunk, nblocks)):
            off = 2 * nb * mid
            for j in range(mid):
                tre[j] = fview[off + 2 * j]
                tim[j] = fview[off + 2 * j + 1]
            for level in range(width):
                stride = 1 << level
                for pair in range(mid // 2):
                    i0 = (pair // stride) * (2 * stride) + (pair % stride)
                    i1 = i0 + stride
                    ar = tre[i0]
                    ai = tim[i0]
                    br = tre[i1]
                    bi = tim[i1]
                    tre[i0] = c * ar + s * bi
                    tim[i0] = c * ai - s * br
                    tre[i1] = c * br + s * ai
                    tim[i1] = c * bi - s * ar
            for j in range(mid):
                fview[off + 2 * j] = tre[j]
                fview[off + 2 * j + 1] = tim[j]


@njit(cache=True, parallel=True)
def _rot_rowwise(fview, c, s, bit, width, n):  # pragma: no cover - compiled
    # butterflies on bits bit..bit+width-1 as contiguous row operations
    lo = 1 << bit
    mid = 1 << width
    block = lo * mid
    nblocks = n // block
    for nb in prange(nblocks):
        off = nb * block
        for level in range(width):
            stride = 1 << level
            for pair in range(mid // 2):
                i0 = (pair // stride) * (2 * stride) + (pair % stride)
                i1 = i0 + stride
                b0 = 2 * (off + i0 * lo)
                b1 = 2 * (off + i1 * lo)
                for low in range(lo):
                    ar = fview[b0 + 2 * low]
                    ai = fview[b0 + 2 * low + 1]
                    br = fview[b1 + 2 * low]
                    bi = fview[b1 + 2 * low + 1]
                    fview[b0 + 2 * low] = c * ar + s * bi
                    fview[b0 + 2 * low + 1] = c * ai - s * br
                    fview[b1 + 2 * low] = c * br + s * ai
                    fview[b1 + 2 * low + 1] = c * bi - s * ar


@njit(cache=True, parallel=True)
def _diag_lut_inplace(state, idx_a, idx_b, lut):  # pragma: no cover - compiled
    # phase = lut[idx_a[i], idx_b[i]]
    for i in prange(state.size):
        state[i] = state[i] * lut[idx_a[i], idx_b[i]]


@njit(cache=True, parallel=True)
def _diag_single_lut_inplace(state, idx_a, lut):  # pragma: no cover - compiled
    for i in prange(state.size):
        state[i] = state[i] * lut[idx_a[i]]


def x_layer_inplace(state: np.ndarray, alpha: float, k: int) -> np.ndarray:
    """exp(-i alpha sigma_x) on all k qubits of a complex64 state."""
    bit = 0
    while bit < k:
        width = min(8, k - bit)
        if HAVE_NUMBA:
            c = np.float32(np.cos(alpha))
            s = np.float32(np.sin(alpha))
            fview = state.view(np.float32)
            if bit == 0:
                _rot_contiguous(fview, c, s, width, state.size)
            else:
                _rot_rowwise(fview, c, s, bit, width, state.size)
        else:
            cc = np.complex64(np.cos(alpha))
            ms = np.complex64(-1j * np.sin(alpha))
            r2 = np.array([[cc, ms], [ms, cc]], dtype=np.complex64)
            rot = np.array([[1.0 + 0j]], dtype=np.complex64)
            for _ in range(width):
                rot = np.kron(r2, rot).astype(np.complex64)
            lo = 1 << bit
            mid = 1 << width
            v = state.reshape(-1, mid, lo)
            out = np.einsum("ij,ajb->aib", rot, v)
            state[:] = out.reshape(-1)
        bit += width
    return state


def diag_phase_inplace(state: np.ndarray, idx_a, idx_b, lut: np.ndarray) -> np.ndarray:
    """state *= lut[idx_a, idx_b] elementwise (complex64)."""
    if HAVE_NUMBA:
        _diag_lut_inplace(state, idx_a, idx_b, lut)
    else:
        state *= lut[idx_a, idx_b]
    return state


def diag_single_phase_inplace(state: np.ndarray, idx_a, lut: np.ndarray) -> np.ndarray:
    if HAVE_NUMBA:
        _diag_single_lut_inplace(state, idx_a, lut)
    else:
        state *= lut[idx_a]
    return state


@njit(cache=True)
def _bin_sums(state, nbins):  # pragma: no cover - compiled
    width = state.size // nbins
    out = np.zeros(nbins, dtype=np.float64)
    for b in range(nbins):
        acc = 0.0
        off = b * width
        for i in range(width):
            v = state[off + i]
            acc += v.real * v.real + v.imag * v.imag
        out[b] = acc
    return out


def bin_sums(state: np.ndarray, nbins: int) -> np.ndarray:
    """Per-bin probability masses of a complex64 state (single pass)."""
    if HAVE_NUMBA:
        return _bin_sums(state, nbins)
    p = (state.real.astype(np.float64)) ** 2 + (state.imag.astype(np.float64)) ** 2
    return p.reshape(nbins, -1).sum(axis=1)


def warmup() -> None:
    """Trigger JIT compilation on tiny inputs (keeps first-use latency out of timings)."""
    if not HAVE_NUMBA:
        return
    s = np.ones(1 << 9, dtype=np.complex64)
    x_layer_inplace(s, 0.1, 9)
    ia = np.zeros(s.size, dtype=np.int16)
    lut2 = np.ones((1, 1), dtype=np.complex64)
    diag_phase_inplace(s, ia, ia, lut2)
    diag_single_phase_inplace(s, ia, np.ones(1, dtype=np.complex64))
    bin_sums(s, 8)
