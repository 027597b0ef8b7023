"""Independent brute-force references for the test suite.

Everything here is written with explicit Python loops and its own copy of the
filter constants, on purpose: these functions must not share a code path with
the implementations they check.
"""

import math

import numpy as np

SQRT3 = math.sqrt(3.0)
DEN = 4.0 * math.sqrt(2.0)
H_REF = [(1 + SQRT3) / DEN, (3 + SQRT3) / DEN, (3 - SQRT3) / DEN, (1 - SQRT3) / DEN]
G_REF = [(-1 + SQRT3) / DEN, (3 - SQRT3) / DEN, (-3 - SQRT3) / DEN, (1 + SQRT3) / DEN]


def direct_dwt(x, h=H_REF, g=G_REF):
    """Single-level periodized analysis with explicit modular indexing."""
    x = list(x)
    n = len(x)
    m = n + n % 2
    xp = [x[i % n] for i in range(m)]
    A = [sum(h[k] * xp[(2 * i + k) % m] for k in range(4)) for i in range(m // 2)]
    D = [sum(g[k] * xp[(2 * i + k) % m] for k in range(4)) for i in range(m // 2)]
    return np.array(A), np.array(D)


def direct_wavedec(x, L, h=H_REF, g=G_REF):
    """Multi-level analysis by repeated direct_dwt on the approximation."""
    a = list(x)
    details = []
    for _ in range(L):
        a, d = direct_dwt(a, h, g)
        a = list(a)
        details.append(np.array(d))
    return np.array(a), details


def loop_mldb(x, alpha, beta):
    """Triple-loop (head, level, window) reference for the learnable mixing.

    x is [B, T, D]; alpha/beta are [L, H, 4, d_h]. Returns [B, T', D] with the
    per-head band order (A_L, D_1, ..., D_L).
    """
    B, T, D = x.shape
    L, H, _, d_h = alpha.shape
    assert D == H * d_h
    out_bands = {}
    for b in range(B):
        for h_i in range(H):
            cur = [[x[b, t, h_i * d_h + f] for f in range(d_h)] for t in range(T)]
            details = []
            for l in range(L):
                n = len(cur)
                m = n + n % 2
                padded = [cur[i % n] for i in range(m)]
                A = []
                Dl = []
                for i in range(m // 2):
                    arow = [0.0] * d_h
                    drow = [0.0] * d_h
                    for k in range(4):
                        src = padded[(2 * i + k) % m]
                        for f in range(d_h):
                            arow[f] += alpha[l, h_i, k, f] * src[f]
                            drow[f] += beta[l, h_i, k, f] * src[f]
                    A.append(arow)
                    Dl.append(drow)
                details.append(Dl)
                cur = A
            out_bands[(b, h_i)] = [cur] + details
    t_prime = sum(len(band) for band in out_bands[(0, 0)])
    out = np.zeros((B, t_prime, D))
    for b in range(B):
        for h_i in range(H):
            rows = [row for band in out_bands[(b, h_i)] for row in band]
            for t, row in enumerate(rows):
                for f in range(d_h):
                    out[b, t, h_i * d_h + f] = row[f]
    return out


def loop_matmul_bias(x, W, b):
    """Explicit triple-loop affine map over the trailing axis of [B, T, C]."""
    B, T, C = x.shape
    D = W.shape[1]
    out = np.zeros((B, T, D))
    for i in range(B):
        for t in range(T):
            for j in range(D):
                acc = b[j]
                for c in range(C):
                    acc += x[i, t, c] * W[c, j]
                out[i, t, j] = acc
    return out


def loop_forecast_head(x, W_time, b_time, W_out, b_out):
    """Explicit-loop reference for the two-stage forecast head."""
    B, T, D = x.shape
    P = W_time.shape[1]
    C = W_out.shape[1]
    out = np.zeros((B, P, C))
    for i in range(B):
        for p in range(P):
            u = [b_time[p]] * D
            for d in range(D):
                u[d] = b_time[p]
                for t in range(T):
                    u[d] += x[i, t, d] * W_time[t, p]
            for c in range(C):
                acc = b_out[c]
                for d in range(D):
                    acc += u[d] * W_out[d, c]
                out[i, p, c] = acc
    return out


def central_difference(fn, arrays, eps=1e-5):
    """Central finite-difference gradient of scalar fn w.r.t. each array entry."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + eps
            fp = fn()
            a[idx] = orig - eps
            fm = fn()
            a[idx] = orig
            g[idx] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def rel_err(a, b, floor=1e-8):
    return np.abs(a - b) / np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))
