"""Classical Daubechies-2 discrete wavelet transform with periodized boundaries.

Single-level and multi-level analysis and synthesis for 1-D signals in
float64. Periodization (circular indexing) is used everywhere because it is
the one boundary mode under which the transform is an orthonormal map on
even-length signals, giving exact perfect reconstruction and energy
conservation. Odd-length inputs are padded periodically by one sample before
convolving; the original length is recorded so synthesis trims exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Db2Filter",
    "WaveletCoeffs",
    "make_db2_filter",
    "periodic_pad",
    "dwt_level",
    "idwt_level",
    "wavedec",
    "waverec",
    "max_level",
]


@dataclass(frozen=True)
class Db2Filter:
    """The 4-tap DB2 analysis pair: low-pass taps ``h`` and high-pass taps ``g``.

    Satisfies sum(h) = sqrt(2), sum(g) = 0, unit energy of both taps,
    h-g orthogonality, and the quadrature mirror relation
    g[k] = (-1)^(k+1) * h[3-k].
    """

    h: np.ndarray
    g: np.ndarray


def make_db2_filter() -> Db2Filter:
    """Build the DB2 filter pair from its closed forms."""
    s3 = math.sqrt(3.0)
    d = 4.0 * math.sqrt(2.0)
    h = np.array([(1 + s3) / d, (3 + s3) / d, (3 - s3) / d, (1 - s3) / d])
    g = np.array([(-1 + s3) / d, (3 - s3) / d, (-3 - s3) / d, (1 + s3) / d])
    return Db2Filter(h=h, g=g)


def periodic_pad(x: np.ndarray, target_len: int) -> np.ndarray:
    """Extend ``x`` to ``target_len`` samples by wrapping: out[i] = x[i mod len(x)]."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if target_len < n:
        raise ValueError(f"target_len {target_len} is shorter than the input ({n})")
    idx = np.arange(target_len) % n
    return x[idx]


def _analysis_windows(n_out: int, padded_len: int) -> np.ndarray:
    # index matrix [n_out, 4]: position 2n+k wrapped modulo the padded length
    return (2 * np.arange(n_out)[:, None] + np.arange(4)[None, :]) % padded_len


def dwt_level(x: np.ndarray, f: Db2Filter | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One analysis level: A[n] = sum_k h[k] x[2n+k], D[n] = sum_k g[k] x[2n+k].

    Indices wrap modulo the (even) padded length; odd inputs are padded
    periodically by one sample first. Output lengths are ceil(len(x)/2).
    """
    if f is None:
        f = make_db2_filter()
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 1:
        raise ValueError("dwt_level: empty input")
    m = n + (n % 2)
    xp = periodic_pad(x, m)
    idx = _analysis_windows(m // 2, m)
    win = xp[idx]
    return win @ f.h, win @ f.g


def idwt_level(
    A: np.ndarray, D: np.ndarray, f: Db2Filter | None = None, out_len: int | None = None
) -> np.ndarray:
    """One synthesis level, the adjoint of :func:`dwt_level` under periodization.

    Reconstructs the padded even-length signal and trims to ``out_len``
    (either 2*len(A) or 2*len(A)-1, the latter when the analysed signal was
    odd and one wrapped sample was appended).
    """
    if f is None:
        f = make_db2_filter()
    A = np.asarray(A, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    if A.shape != D.shape:
        raise ValueError(f"idwt_level: len(A)={A.shape[0]} != len(D)={D.shape[0]}")
    half = A.shape[0]
    m = 2 * half
    if out_len is None:
        out_len = m
    if out_len not in (m - 1, m):
        raise ValueError(f"idwt_level: out_len must be {m - 1} or {m}, got {out_len}")
    x = np.zeros(m)
    idx = _analysis_windows(half, m)
    # per-tap scatter; for fixed k the positions (2n+k) mod m are distinct
    for k in range(4):
        x[idx[:, k]] += f.h[k] * A + f.g[k] * D
    # out_len == m-1 drops the wrap-around pad sample appended during analysis
    return x[:out_len]


@dataclass
class WaveletCoeffs:
    """Multi-level decomposition {A_L, D_1 .. D_L} with length bookkeeping.

    ``level_lengths`` holds [len(D_1), ..., len(D_L), len(A_L)];
    ``original_length`` lets synthesis strip boundary padding exactly.
    """

    approx: np.ndarray
    details: list[np.ndarray] = field(default_factory=list)
    level_lengths: list[int] = field(default_factory=list)
    original_length: int = 0

    @property
    def levels(self) -> int:
        return len(self.details)


def max_level(n: int) -> int:
    """Deepest decomposition whose every level sees at least 2 samples."""
    if n < 2:
        return 0
    return math.ceil(math.log2(n))


def _check_level(n: int, L: int) -> None:
    lmax = max_level(n)
    if L > lmax:
        raise ValueError(
            f"decomposition level {L} too deep for signal of length {n}; "
            f"maximum admissible level is {lmax}"
        )


def wavedec(x: np.ndarray, f: Db2Filter | None = None, L: int = 1) -> WaveletCoeffs:
    """Apply :func:`dwt_level` L times, feeding each level's approximation forward."""
    if f is None:
        f = make_db2_filter()
    x = np.asarray(x, dtype=np.float64)
    if L < 1:
        raise ValueError(f"wavedec: L must be >= 1, got {L}")
    n = x.shape[0]
    _check_level(n, L)
    details: list[np.ndarray] = []
    lengths: list[int] = []
    a = x
    for _ in range(L):
        a, d = dwt_level(a, f)
        details.append(d)
        lengths.append(d.shape[0])
    lengths.append(a.shape[0])
    return WaveletCoeffs(approx=a, details=details, level_lengths=lengths, original_length=n)


def waverec(c: WaveletCoeffs, f: Db2Filter | None = None) -> np.ndarray:
    """Invert :func:`wavedec`, trimming to the recorded original length."""
    if f is None:
        f = make_db2_filter()
    L = c.levels
    if L < 1:
        raise ValueError("waverec: no detail levels to invert")
    if len(c.level_lengths) != L + 1 or c.level_lengths[L] != c.approx.shape[0]:
        raise ValueError("waverec: level_lengths inconsistent with coefficient arrays")
    for l, d in enumerate(c.details):
        if d.shape[0] != c.level_lengths[l]:
            raise ValueError(
                f"waverec: level_lengths inconsistent, details[{l}] has length "
                f"{d.shape[0]} but level_lengths says {c.level_lengths[l]}"
            )
    a = c.approx
    for l in range(L - 1, -1, -1):
        out_len = c.level_lengths[l - 1] if l > 0 else c.original_length
        if out_len not in (2 * a.shape[0] - 1, 2 * a.shape[0]):
            raise ValueError(
                f"waverec: level_lengths inconsistent at level {l + 1}: "
                f"cannot invert {a.shape[0]} coefficients to length {out_len}"
            )
        a = idwt_level(a, c.details[l], f, out_len=out_len)
    return a
