"""Discrete wavelet transform on a cascaded two-channel filter bank.

Supports the orthogonal Daubechies family (db1..db8, sym3 coincides with
db3), and the reverse biorthogonal spline wavelet rbio3.9 used for the
third-level detail envelope. Filters are generated at import time:
Daubechies scaling coefficients by spectral factorization of the binomial
half-band polynomial, the biorthogonal dual by direct expansion of the
spline product form. Analysis uses half-sample symmetric extension;
reconstruction is exact (see tests).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np


class WaveletError(ValueError):
    """Unknown family or signal too short for the requested depth."""


@dataclass(frozen=True)
class Wavelet:
    name: str
    dec_lo: np.ndarray
    dec_hi: np.ndarray
    rec_lo: np.ndarray
    rec_hi: np.ndarray

    @property
    def filter_len(self) -> int:
        return len(self.dec_lo)


def _qmf(h: np.ndarray) -> np.ndarray:
    g = h[::-1].copy()
    g[1::2] *= -1
    return g


def _daub_scaling(n_moments: int) -> np.ndarray:
    """Daubechies scaling filter with `n_moments` vanishing moments (2N taps)."""
    if n_moments == 1:
        return np.array([1.0, 1.0]) / np.sqrt(2.0)
    # roots of the binomial polynomial P(y) = sum C(N-1+k, k) y^k
    p = [comb(n_moments - 1 + k, k) for k in range(n_moments)]
    yroots = np.roots(p[::-1])
    zroots = []
    for y in yroots:
        # y = (2 - z - 1/z)/4  =>  z^2 - (2 - 4y)z + 1 = 0; keep |z| < 1
        c = 2.0 - 4.0 * y
        disc = np.sqrt(c * c - 4.0 + 0j)
        r1, r2 = (c + disc) / 2.0, (c - disc) / 2.0
        zroots.append(r1 if abs(r1) < 1 else r2)
    poly = np.array([1.0 + 0j])
    for _ in range(n_moments):
        poly = np.convolve(poly, [0.5, 0.5])
    for zr in zroots:
        poly = np.convolve(poly, [1.0, -zr])
    h = np.real(poly)
    return h * (np.sqrt(2.0) / h.sum())


def _spline_dual_lowpass(dual_order: int) -> np.ndarray:
    """Analysis lowpass paired with the cubic B-spline synthesis filter.

    Product form: cos^Nd(w/2) * sum_{m<L} C(L-1+m, m) sin^2m(w/2) with
    L = (3 + Nd) / 2, expanded as a polynomial in z^-1. Coefficients are
    dyadic rationals, so the expansion is exact in float64.
    """
    if dual_order % 2 != 1:
        raise WaveletError("dual order must be odd to pair with the cubic spline")
    half = (3 + dual_order) // 2
    base = np.array([1.0])
    for _ in range(dual_order):
        base = np.convolve(base, [0.5, 0.5])
    s2 = np.array([-0.25, 0.5, -0.25])  # sin^2(w/2) as a symmetric Laurent poly
    total = np.array([float(comb(half - 1, 0))])
    for m in range(1, half):
        piece = np.array([1.0])
        for _ in range(m):
            piece = np.convolve(piece, s2)
        piece = comb(half - 1 + m, m) * piece
        pad = (len(piece) - len(total)) // 2
        total = np.pad(total, (pad, pad)) + piece
    h = np.convolve(base, total)
    return h * (np.sqrt(2.0) / h.sum())


_SPLINE4 = np.array([1.0, 3.0, 3.0, 1.0]) * (np.sqrt(2.0) / 8.0)


@lru_cache(maxsize=None)
def wavelet(name: str) -> Wavelet:
    """Filter set for a named family: db1..db8, sym3, bior3.9, rbio3.9."""
    name = name.lower()
    if name == "sym3":  # least-asymmetric order 3 coincides with db3
        base = wavelet("db3")
        return Wavelet(name, base.dec_lo, base.dec_hi, base.rec_lo, base.rec_hi)
    if name.startswith("db"):
        try:
            n = int(name[2:])
        except ValueError:
            raise WaveletError(f"unknown wavelet family: {name!r}") from None
        if not 1 <= n <= 8:
            raise WaveletError(f"db order out of supported range: {n}")
        rec_lo = _daub_scaling(n)
        dec_lo = rec_lo[::-1].copy()
        rec_hi = _qmf(rec_lo)
        dec_hi = rec_hi[::-1].copy()
        return Wavelet(name, dec_lo, dec_hi, rec_lo, rec_hi)
    if name in ("bior3.9", "rbio3.9"):
        dual = _spline_dual_lowpass(9)
        spline = np.concatenate([np.zeros(8), _SPLINE4, np.zeros(8)])
        if name == "bior3.9":
            dec_lo, rec_lo = dual, spline
        else:
            dec_lo, rec_lo = spline, dual
        dec_hi = _qmf(rec_lo)[::-1].copy()
        rec_hi = _qmf(dec_lo)
        return Wavelet(name, dec_lo, dec_hi, rec_lo, rec_hi)
    raise WaveletError(f"unknown wavelet family: {name!r}")


def dwt(x: np.ndarray, wav: Wavelet | str) -> tuple[np.ndarray, np.ndarray]:
    """One analysis level: (approximation, detail), symmetric extension."""
    if isinstance(wav, str):
        wav = wavelet(wav)
    x = np.asarray(x, dtype=float)
    if len(x) < wav.filter_len:
        raise WaveletError(
            f"signal of length {len(x)} shorter than filter ({wav.filter_len})"
        )
    ext = np.pad(x, wav.filter_len - 1, mode="symmetric")
    a = np.convolve(ext, wav.dec_lo, mode="valid")[1::2]
    d = np.convolve(ext, wav.dec_hi, mode="valid")[1::2]
    return a, d


def idwt(a: np.ndarray, d: np.ndarray, wav: Wavelet | str, out_len: int) -> np.ndarray:
    """Inverse of one analysis level; `out_len` selects the original length."""
    if isinstance(wav, str):
        wav = wavelet(wav)
    ua = np.zeros(2 * len(a))
    ua[::2] = a
    ud = np.zeros(2 * len(d))
    ud[::2] = d
    y = np.convolve(ua, wav.rec_lo) + np.convolve(ud, wav.rec_hi)
    off = wav.filter_len - 2
    return y[off : off + out_len]


def wavedec(x: np.ndarray, wav: Wavelet | str, depth: int) -> list[np.ndarray]:
    """Multi-level decomposition: [a_depth, d_depth, ..., d_1]."""
    if isinstance(wav, str):
        wav = wavelet(wav)
    x = np.asarray(x, dtype=float)
    if depth < 1:
        raise WaveletError("depth must be >= 1")
    if len(x) < wav.filter_len * 2 ** (depth - 1):
        raise WaveletError(
            f"signal of length {len(x)} too short for depth {depth} "
            f"with a {wav.filter_len}-tap filter"
        )
    coeffs: list[np.ndarray] = []
    a = x
    for _ in range(depth):
        a, d = dwt(a, wav)
        coeffs.append(d)
    coeffs.append(a)
    return coeffs[::-1]


def waverec(coeffs: list[np.ndarray], wav: Wavelet | str, out_len: int) -> np.ndarray:
    """Inverse of :func:`wavedec`."""
    if isinstance(wav, str):
        wav = wavelet(wav)
    # reconstruct level lengths top-down from out_len
    lengths = [out_len]
    for _ in range(len(coeffs) - 1):
        lengths.append((lengths[-1] + wav.filter_len - 1) // 2)
    a = coeffs[0]
    for i, d in enumerate(coeffs[1:]):
        a = idwt(a, d, wav, lengths[len(coeffs) - 2 - i])
    return a
