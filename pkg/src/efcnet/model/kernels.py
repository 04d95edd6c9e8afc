"""Fused relu / dropout / pooling kernels for the batched models.

Hidden activations are never stored. Forward kernels pool them on the fly
and backward kernels recompute the pre-activation sign and the dropout mask.

Dropout masks come from a counter-based hash: element ``idx`` of a pass
with key ``key`` is kept iff ``hash64(idx ^ hash64(key)) >= threshold``, so
forward and backward agree without storing the mask. ``threshold = 0``
disables dropout. All loops are sequential and therefore bit-reproducible.

For the edge branch the pre-activation of subject ``s``, edge ``e = (i, j)``
is ``P[s, e] = r[s, e] * w0 + Q[s, i] + Q[s, j]``.
"""

from __future__ import annotations

import numba
import numpy as np

_M1 = np.uint64(0xFF51AFD7ED558CCD)
_M2 = np.uint64(0xC4CEB9FE1A85EC53)
_S33 = np.uint64(33)


@numba.njit(inline="always")
def _hash64(x):
    # murmur3 fmix64; numba keeps uint64 arithmetic wrapping at 64 bits
    x ^= x >> _S33
    x *= _M1
    x ^= x >> _S33
    x *= _M2
    x ^= x >> _S33
    return x


def dropout_params(rate: float, rng) -> tuple[np.uint64, np.uint64, float]:
    """``(key, threshold, scale)`` for one dropout pass; identity when ``rate == 0``."""
    if rate <= 0.0:
        return np.uint64(0), np.uint64(0), 1.0
    key = np.uint64(rng.integers(0, 2**64, dtype=np.uint64))
    threshold = np.uint64(min(int(round(rate * 2**64)), 2**64 - 1))
    return key, threshold, 1.0 / (1.0 - rate)


@numba.njit(cache=True)
def keep_mask(shape0, shape1, key, threshold, scale):
    """Dense dropout multipliers, for tests and reference computations."""
    out = np.empty(shape0 * shape1)
    mix = _hash64(np.uint64(key))
    for idx in range(shape0 * shape1):
        h = _hash64(np.uint64(idx) ^ mix)
        out[idx] = scale if h >= threshold else 0.0
    return out.reshape(shape0, shape1)


@numba.njit(cache=True)
def pool_forward(z, weights, key, threshold, scale):
    """``out[s, k] = sum_r weights[s, k, r] * dropout(relu(z[s, r]))``."""
    n_sub, n_row, width = z.shape
    n_pool = weights.shape[1]
    out = np.zeros((n_sub, n_pool, width))
    mix = _hash64(np.uint64(key))
    for s in range(n_sub):
        for r in range(n_row):
            base = np.uint64((s * n_row + r) * width)
            zr = z[s, r]
            for k in range(n_pool):
                w = weights[s, k, r]
                acc = out[s, k]
                for f in range(width):
                    v = zr[f]
                    h = _hash64((base + np.uint64(f)) ^ mix)
                    if v > 0.0 and h >= threshold:
                        acc[f] += w * scale * v
    return out


@numba.njit(cache=True)
def pool_backward(z, weights, key, threshold, scale, grad):
    """Gradient of ``sum(grad * pool_forward(z, ...))`` with respect to ``z``."""
    n_sub, n_row, width = z.shape
    n_pool = weights.shape[1]
    dz = np.zeros(z.shape)
    mix = _hash64(np.uint64(key))
    for s in range(n_sub):
        for r in range(n_row):
            base = np.uint64((s * n_row + r) * width)
            zr = z[s, r]
            dr = dz[s, r]
            for k in range(n_pool):
                w = weights[s, k, r] * scale
                g = grad[s, k]
                for f in range(width):
                    h = _hash64((base + np.uint64(f)) ^ mix)
                    if zr[f] > 0.0 and h >= threshold:
                        dr[f] += w * g[f]
    return dz


@numba.njit(cache=True)
def edge_pool_forward(r, q, w0, rows, cols, key, threshold, scale):
    """Mean over edges of ``dropout(relu(P))``; returns ``S x F``."""
    n_sub, n_edge = r.shape
    width = w0.shape[0]
    out = np.zeros((n_sub, width))
    mix = _hash64(np.uint64(key))
    for s in range(n_sub):
        acc = out[s]
        for e in range(n_edge):
            qi = q[s, rows[e]]
            qj = q[s, cols[e]]
            re = r[s, e]
            base = np.uint64((s * n_edge + e) * width)
            for f in range(width):
                p = re * w0[f] + qi[f] + qj[f]
                h = _hash64((base + np.uint64(f)) ^ mix)
                if p > 0.0 and h >= threshold:
                    acc[f] += p
        c = scale / n_edge
        for f in range(width):
            acc[f] *= c
    return out


@numba.njit(cache=True)
def edge_pool_backward(r, q, w0, rows, cols, key, threshold, scale, grad_pool):
    """Gradients of ``sum(grad_pool * edge_pool_forward(...))`` w.r.t. ``q`` and ``w0``."""
    n_sub, n_edge = r.shape
    width = w0.shape[0]
    dq = np.zeros(q.shape)
    dw0 = np.zeros(width)
    c = scale / n_edge
    mix = _hash64(np.uint64(key))
    for s in range(n_sub):
        g = grad_pool[s] * c
        for e in range(n_edge):
            qi = q[s, rows[e]]
            qj = q[s, cols[e]]
            di = dq[s, rows[e]]
            dj = dq[s, cols[e]]
            re = r[s, e]
            base = np.uint64((s * n_edge + e) * width)
            for f in range(width):
                p = re * w0[f] + qi[f] + qj[f]
                h = _hash64((base + np.uint64(f)) ^ mix)
                if p > 0.0 and h >= threshold:
                    di[f] += g[f]
                    dj[f] += g[f]
                    dw0[f] += re * g[f]
    return dq, dw0
