"""Learnable multi-head, multi-scale DB2 wavelet mixing.

The scalar filter taps of the classical transform are promoted to trainable
per-level, per-head, per-feature coefficient tensors. At init (sigma = 0) the
layer reproduces :mod:`wavecast.dwt` exactly, channel by channel; training
then adapts the taps freely. Forward and reverse-mode passes are written out
explicitly in float64 so gradients are exact, not approximated.

Shapes follow [batch, time, features]. Features are split into H contiguous
head slices of width d_h; each level unfolds the running sequence into
windows of 4 samples with stride 2 (the DB2 support and dyadic step) and
contracts them with that level's coefficients. Per head the outputs are
concatenated along time as (A_L, D_1, ..., D_L), then heads are concatenated
back along features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dwt import make_db2_filter, max_level

__all__ = [
    "LearnableWaveletParams",
    "MldbOutput",
    "init_params",
    "output_length",
    "level_lengths",
    "mldb_forward",
    "mldb_backward",
]

WINDOW = 4
STRIDE = 2


@dataclass
class LearnableWaveletParams:
    """Trainable low/high-pass coefficients, one 4-tap bank per (level, head, feature).

    ``alpha`` and ``beta`` are both shaped [L, H, 4, d_h].
    """

    alpha: np.ndarray
    beta: np.ndarray
    L: int
    H: int
    d_h: int


@dataclass
class MldbOutput:
    """Result of the multi-scale mixing pass.

    ``level_layout`` records the time-axis extent of each coefficient band as
    (label, start, stop) with labels "A{L}" and "D{l}".
    """

    mixed: np.ndarray
    T_prime: int
    level_layout: list[tuple[str, int, int]]


def init_params(L: int, H: int, d_h: int, sigma: float = 0.0, seed: int = 0) -> LearnableWaveletParams:
    """Classical DB2 taps plus i.i.d. Normal(0, sigma^2) perturbation, seeded.

    sigma = 0 gives the exact closed-form values in every slot.
    """
    if L < 1 or H < 1 or d_h < 1:
        raise ValueError(f"init_params: L, H, d_h must be >= 1, got {L}, {H}, {d_h}")
    f = make_db2_filter()
    shape = (L, H, WINDOW, d_h)
    alpha = np.broadcast_to(f.h[None, None, :, None], shape).copy()
    beta = np.broadcast_to(f.g[None, None, :, None], shape).copy()
    if sigma > 0.0:
        rng = np.random.default_rng(seed)
        alpha += sigma * rng.standard_normal(shape)
        beta += sigma * rng.standard_normal(shape)
    return LearnableWaveletParams(alpha=alpha, beta=beta, L=L, H=H, d_h=d_h)


def level_lengths(T: int, L: int) -> list[int]:
    """Ceil-halving lengths [n_1, ..., n_L] starting from n_0 = T."""
    if L > max_level(T):
        raise ValueError(
            f"{L} decomposition levels too deep for sequence length {T}; "
            f"maximum admissible is {max_level(T)}"
        )
    out = []
    n = T
    for _ in range(L):
        n = (n + 1) // 2
        out.append(n)
    return out


def output_length(T: int, L: int) -> int:
    """Total mixed length T' = n_L + sum_l n_l under the ceil-halving recurrence."""
    ns = level_lengths(T, L)
    return ns[-1] + sum(ns)


def _window_index(n: int) -> tuple[int, np.ndarray]:
    # padded even length and the wrapped gather index [n_out, 4]
    m = n + (n % 2)
    idx = (STRIDE * np.arange(m // 2)[:, None] + np.arange(WINDOW)[None, :]) % m
    return m, idx


def forward_with_cache(x: np.ndarray, p: LearnableWaveletParams):
    B, T, D = x.shape
    if D != p.H * p.d_h:
        raise ValueError(f"feature dim {D} is not heads {p.H} x head width {p.d_h}")
    if T < 2:
        raise ValueError(f"sequence length {T} too short to unfold")
    ns = level_lengths(T, p.L)

    cur = x.reshape(B, T, p.H, p.d_h)
    approx = cur
    detail_bands: list[np.ndarray] = []
    cache = []
    for l in range(p.L):
        n = approx.shape[1]
        m, idx = _window_index(n)
        padded = approx if m == n else np.concatenate([approx, approx[:, :1]], axis=1)
        win = padded[:, idx]  # [B, n_out, 4, H, d_h]
        a = np.einsum("bnkhf,hkf->bnhf", win, p.alpha[l])
        d = np.einsum("bnkhf,hkf->bnhf", win, p.beta[l])
        cache.append((win, n, m, idx))
        detail_bands.append(d)
        approx = a

    mixed = np.concatenate([approx] + detail_bands, axis=1)
    T_prime = mixed.shape[1]
    layout: list[tuple[str, int, int]] = [(f"A{p.L}", 0, ns[-1])]
    pos = ns[-1]
    for l, n_l in enumerate(ns, start=1):
        layout.append((f"D{l}", pos, pos + n_l))
        pos += n_l
    out = MldbOutput(mixed=mixed.reshape(B, T_prime, D), T_prime=T_prime, level_layout=layout)
    return out, (cache, ns, (B, T, D))


def mldb_forward(x: np.ndarray, p: LearnableWaveletParams) -> MldbOutput:
    """Multi-scale decomposition of ``x`` [B, T, D] with learnable taps."""
    x = np.asarray(x, dtype=np.float64)
    out, _ = forward_with_cache(x, p)
    return out


def backward_from_cache(upstream: np.ndarray, p: LearnableWaveletParams, state):
    cache, ns, (B, T, D) = state
    T_prime = ns[-1] + sum(ns)
    if upstream.shape != (B, T_prime, D):
        raise ValueError(
            f"upstream gradient shape {upstream.shape} does not match output "
            f"shape {(B, T_prime, D)}"
        )
    g = upstream.reshape(B, T_prime, p.H, p.d_h)
    g_approx = g[:, : ns[-1]]
    g_details: list[np.ndarray] = []
    pos = ns[-1]
    for n_l in ns:
        g_details.append(g[:, pos : pos + n_l])
        pos += n_l

    grad_alpha = np.zeros_like(p.alpha)
    grad_beta = np.zeros_like(p.beta)
    g_next = g_approx
    for l in range(p.L - 1, -1, -1):
        win, n, m, idx = cache[l]
        gA, gD = g_next, g_details[l]
        grad_alpha[l] = np.einsum("bnkhf,bnhf->hkf", win, gA)
        grad_beta[l] = np.einsum("bnkhf,bnhf->hkf", win, gD)
        a_t = p.alpha[l].transpose(1, 0, 2)  # [4, H, d_h]
        b_t = p.beta[l].transpose(1, 0, 2)
        gwin = a_t[None, None] * gA[:, :, None] + b_t[None, None] * gD[:, :, None]
        gpad = np.zeros((B, m, p.H, p.d_h))
        for k in range(WINDOW):
            gpad[:, idx[:, k]] += gwin[:, :, k]
        if m != n:
            g_next = gpad[:, :n].copy()
            g_next[:, 0] += gpad[:, n]  # pad sample was a wrapped copy of sample 0
        else:
            g_next = gpad
    return g_next.reshape(B, T, D), grad_alpha, grad_beta


def mldb_backward(
    x: np.ndarray, p: LearnableWaveletParams, upstream_grad: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact reverse-mode gradients of :func:`mldb_forward`.

    Returns (grad_x, grad_alpha, grad_beta). Gradient flow follows the
    recursive approximation feeding across levels and the wrapped padding
    indices, so parameter gradients at level l accumulate contributions from
    every deeper level.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    _, state = forward_with_cache(x, p)
    return backward_from_cache(upstream_grad, p, state)
