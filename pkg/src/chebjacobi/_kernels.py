"""Jitted row-block kernels over flat storage arrays.

All kernels take an interior row range ``[r0, r1)`` so a backend can split the
work across threads. Every node is computed by the same instruction sequence
whatever the split, which keeps results bitwise independent of partitioning.
``qs`` is 0 when one coefficient row is shared by all nodes and 1 when the
coefficients are tabulated per node.
"""

import numba as nb
import numpy as np

_jit = {"nogil": True, "cache": True, "fastmath": False}


@nb.njit(**_jit)
def sweep(u, b, out, offs, coef, center, weight, r0, r1, g, stride, m, qs):
    K = offs.size
    acc = np.empty(m)
    for a in range(r0, r1):
        base = (a + g) * stride + g
        uc = u[base:base + m]
        bc = b[base:base + m]
        oc = out[base:base + m]
        for c in range(m):
            acc[c] = bc[c]
        if qs == 0:
            for k in range(K):
                ck = coef[0, k]
                un = u[base + offs[k]:base + offs[k] + m]
                for c in range(m):
                    acc[c] -= ck * un[c]
            cc = center[0]
            for c in range(m):
                oc[c] = uc[c] + weight * (acc[c] / cc - uc[c])
        else:
            q0 = a * m
            cq = coef[q0:q0 + m]
            dq = center[q0:q0 + m]
            for k in range(K):
                un = u[base + offs[k]:base + offs[k] + m]
                for c in range(m):
                    acc[c] -= cq[c, k] * un[c]
            for c in range(m):
                oc[c] = uc[c] + weight * (acc[c] / dq[c] - uc[c])


@nb.njit(**_jit)
def _row_apply(u, acc, offs, coef, center, a, base, m, qs):
    K = offs.size
    uc = u[base:base + m]
    if qs == 0:
        cc = center[0]
        for c in range(m):
            acc[c] = cc * uc[c]
        for k in range(K):
            ck = coef[0, k]
            un = u[base + offs[k]:base + offs[k] + m]
            for c in range(m):
                acc[c] += ck * un[c]
    else:
        q0 = a * m
        cq = coef[q0:q0 + m]
        dq = center[q0:q0 + m]
        for c in range(m):
            acc[c] = dq[c] * uc[c]
        for k in range(K):
            un = u[base + offs[k]:base + offs[k] + m]
            for c in range(m):
                acc[c] += cq[c, k] * un[c]


@nb.njit(**_jit)
def apply(u, out, offs, coef, center, r0, r1, g, stride, m, qs):
    acc = np.empty(m)
    for a in range(r0, r1):
        base = (a + g) * stride + g
        _row_apply(u, acc, offs, coef, center, a, base, m, qs)
        for c in range(m):
            out[base + c] = acc[c]


@nb.njit(**_jit)
def residual_max(u, b, offs, coef, center, r0, r1, g, stride, m, qs):
    acc = np.empty(m)
    rmax = 0.0
    for a in range(r0, r1):
        base = (a + g) * stride + g
        _row_apply(u, acc, offs, coef, center, a, base, m, qs)
        for c in range(m):
            r = abs(b[base + c] - acc[c])
            # NaN must win the reduction so divergence is never masked
            if r > rmax or r != r:
                rmax = r
    return rmax


@nb.njit(**_jit)
def abs_max(x, r0, r1, g, stride, m):
    amax = 0.0
    for a in range(r0, r1):
        base = (a + g) * stride + g
        for c in range(m):
            v = abs(x[base + c])
            if v > amax or v != v:
                amax = v
    return amax


def warmup():
    """Compile the kernels on a tiny problem."""
    u = np.zeros(16)
    offs = np.array([1, -1], dtype=np.int64)
    coef = np.ones((1, 2))
    center = -np.ones(1)
    sweep(u, u, u.copy(), offs, coef, center, 1.0, 0, 1, 1, 4, 2, 0)
    apply(u, u.copy(), offs, coef, center, 0, 1, 1, 4, 2, 0)
    residual_max(u, u, offs, coef, center, 0, 1, 1, 4, 2, 0)
    abs_max(u, 0, 1, 1, 4, 2)
