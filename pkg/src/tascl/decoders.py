"""SC, SCL and adaptive SCL decoding of CRC-aided polar codes.

All decoders use the min-sum F function and the LLR-based path metric
``gamma += |Lambda|`` whenever a branch contradicts the hard decision. Path
storage is laid out per stage: the LLRs of stage ``s`` live in
``[2**s, 2**(s+1))`` of a length-N row, and so do the re-encoded bits of the
left child waiting for the G node of stage ``s + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .channel import FixedPoint, quantize
from .codec import PolarCode, crc_pass_rows, polar_transform

__all__ = [
    "SclDecodeResult",
    "theta",
    "f_node",
    "g_node",
    "hard_decision",
    "partial_sums",
    "sc_decode",
    "scl_decode",
    "ascl_decode",
]


def theta(llr):
    """Hard decision of an LLR: 0 iff strictly positive."""
    return np.where(np.asarray(llr) > 0, 0, 1).astype(np.uint8)


def f_node(la, lb):
    la = np.asarray(la, dtype=np.float64)
    lb = np.asarray(lb, dtype=np.float64)
    sign = np.where(theta(la) ^ theta(lb), -1.0, 1.0)
    return sign * np.minimum(np.abs(la), np.abs(lb)) + 0.0


def g_node(la, lb, ps):
    return np.where(np.asarray(ps) & 1, -1.0, 1.0) * np.asarray(la, dtype=np.float64) + lb


def hard_decision(lam: float, i: int, code: PolarCode) -> int:
    if code.frozen_mask[i]:
        return 0
    return int(theta(lam))


def partial_sums(u_hat, j: int, s: int) -> np.ndarray:
    """Partial sums fed to the G node at stage ``s`` after bit ``j`` is decided."""
    u_hat = np.asarray(u_hat, dtype=np.uint8)
    h = 1 << s
    if j + 1 < h:
        raise ValueError("fewer than 2**s bits decoded")
    return polar_transform(u_hat[j - h + 1:j + 1])


@dataclass
class SclDecodeResult:
    """Surviving paths sorted by ascending path metric."""

    u_hat: np.ndarray        # (A, N) decoded source words
    metrics: np.ndarray      # (A,)
    crc_pass: np.ndarray     # (A,) bool
    selected: int
    list_size: int
    pm_saturations: int = 0

    @property
    def passed_crc(self) -> bool:
        return bool(self.crc_pass[self.selected])

    @property
    def output(self) -> np.ndarray:
        return self.u_hat[self.selected]

    @property
    def candidates(self) -> list[tuple[np.ndarray, float, bool]]:
        return [(self.u_hat[a], float(self.metrics[a]), bool(self.crc_pass[a]))
                for a in range(len(self.metrics))]


# -- kernels ----------------------------------------------------------------

@njit(cache=True, inline="always")
def _f(a, b):
    m = min(abs(a), abs(b))
    if (a > 0) != (b > 0):
        return -m
    return m


@njit(cache=True)
def _ctz(i):
    s = 0
    while (i & 1) == 0:
        i >>= 1
        s += 1
    return s


@njit(cache=True)
def _descend(alpha, beta, ch, n, i, llr_max):
    """Fill stage 0 of one path for leaf ``i``; clips G outputs at ``llr_max`` if > 0."""
    N = 1 << n
    if i == 0:
        s = n - 1
    else:
        s = _ctz(i)
        h = 1 << s
        for j in range(h):
            if s + 1 == n:
                a = ch[j]
                b = ch[j + h]
            else:
                a = alpha[2 * h + j]
                b = alpha[3 * h + j]
            if beta[h + j]:
                v = b - a
            else:
                v = b + a
            if llr_max > 0.0:
                if v > llr_max:
                    v = llr_max
                elif v < -llr_max:
                    v = -llr_max
            alpha[h + j] = v
        s -= 1
    while s >= 0:
        h = 1 << s
        for j in range(h):
            if s + 1 == n:
                alpha[h + j] = _f(ch[j], ch[j + h])
            else:
                alpha[h + j] = _f(alpha[2 * h + j], alpha[3 * h + j])
        s -= 1
    return alpha[1]


@njit(cache=True)
def _ascend(beta, tmp, n, i, bit):
    tmp[0] = bit
    s = 0
    while s < n and (i >> s) & 1:
        h = 1 << s
        for j in range(h):
            tmp[h + j] = tmp[j]
            tmp[j] ^= beta[h + j]
        s += 1
    if s < n:
        h = 1 << s
        for j in range(h):
            beta[h + j] = tmp[j]


@njit(cache=True)
def _sc_kernel(ch, frozen, n, llr_max):
    N = 1 << n
    alpha = np.zeros(N)
    beta = np.zeros(N, dtype=np.uint8)
    tmp = np.zeros(N, dtype=np.uint8)
    u = np.zeros(N, dtype=np.uint8)
    for i in range(N):
        lam = _descend(alpha, beta, ch, n, i, llr_max)
        b = 0
        if not frozen[i] and not lam > 0:
            b = 1
        u[i] = b
        _ascend(beta, tmp, n, i, b)
    return u


@njit(cache=True)
def _scl_kernel(ch, frozen, n, L, llr_max, pm_max, normalise):
    N = 1 << n
    alpha = np.zeros((L, N))
    beta = np.zeros((L, N), dtype=np.uint8)
    uh = np.zeros((L, N), dtype=np.uint8)
    tmp = np.zeros(N, dtype=np.uint8)
    pm = np.zeros(L)
    act = np.zeros(L, dtype=np.int64)     # active slot ids, position = path index
    A = 1
    lam = np.zeros(L)
    cm = np.zeros(2 * L)
    kept = np.zeros(L, dtype=np.int64)
    nkept = np.zeros(L, dtype=np.int64)
    first = np.zeros(L, dtype=np.int64)
    new_act = np.zeros(L, dtype=np.int64)
    new_pm = np.zeros(L)
    new_bit = np.zeros(L, dtype=np.uint8)
    freel = np.zeros(L, dtype=np.int64)
    sat = 0
    for i in range(N):
        for p in range(A):
            lam[p] = _descend(alpha[act[p]], beta[act[p]], ch, n, i, llr_max)
        if frozen[i]:
            for p in range(A):
                sl = act[p]
                if not lam[p] > 0:
                    v = pm[sl] + abs(lam[p])
                    if pm_max > 0.0 and v > pm_max:
                        v = pm_max
                        sat += 1
                    pm[sl] = v
                uh[sl, i] = 0
                _ascend(beta[sl], tmp, n, i, 0)
            continue
        # expand: child 2p keeps the hard decision, child 2p+1 flips it
        for p in range(A):
            sl = act[p]
            cm[2 * p] = pm[sl]
            v = pm[sl] + abs(lam[p])
            if pm_max > 0.0 and v > pm_max:
                v = pm_max
                sat += 1
            cm[2 * p + 1] = v
        M = 2 * A
        order = np.argsort(cm[:M], kind="mergesort")
        K = M if M < L else L
        for p in range(A):
            nkept[p] = 0
        for k in range(K):
            c = order[k]
            kept[k] = c
            nkept[c >> 1] += 1
        # slots released by parents without surviving children, plus unused ones
        nf = 0
        for p in range(A):
            if nkept[p] == 0:
                freel[nf] = act[p]
                nf += 1
        used = np.zeros(L, dtype=np.bool_)
        for p in range(A):
            used[act[p]] = True
        for sl in range(L):
            if not used[sl]:
                freel[nf] = sl
                nf += 1
        for p in range(A):
            first[p] = -1
        fi = 0
        for k in range(K):
            c = kept[k]
            p = c >> 1
            dec = 0 if lam[p] > 0 else 1
            bit = dec if (c & 1) == 0 else 1 - dec
            if first[p] < 0:
                first[p] = act[p]
                sl = act[p]
            else:
                sl = freel[fi]
                fi += 1
                src = act[p]
                alpha[sl, :] = alpha[src, :]
                beta[sl, :] = beta[src, :]
                uh[sl, :] = uh[src, :]
            new_act[k] = sl
            new_pm[k] = cm[c]
            new_bit[k] = bit
        A = K
        mn = new_pm[0]
        for k in range(A):
            sl = new_act[k]
            act[k] = sl
            pm[sl] = new_pm[k] - mn if normalise else new_pm[k]
            uh[sl, i] = new_bit[k]
            _ascend(beta[sl], tmp, n, i, new_bit[k])
    out_pm = np.empty(A)
    for p in range(A):
        out_pm[p] = pm[act[p]]
    order = np.argsort(out_pm, kind="mergesort")
    u_out = np.empty((A, N), dtype=np.uint8)
    m_out = np.empty(A)
    for k in range(A):
        u_out[k, :] = uh[act[order[k]], :]
        m_out[k] = out_pm[order[k]]
    return u_out, m_out, sat


# -- public decoders ---------------------------------------------------------

def _prepare(llr, code: PolarCode, quant: FixedPoint | None):
    ch = np.ascontiguousarray(llr, dtype=np.float64)
    if ch.shape != (code.N,):
        raise ValueError(f"expected {code.N} channel LLRs, got shape {ch.shape}")
    if quant is None:
        return ch, 0.0, 0.0
    return quantize(ch, quant.llr), quant.llr.max_value, quant.pm.max_unsigned


def sc_decode(llr, code: PolarCode, quant: FixedPoint | None = None) -> np.ndarray:
    ch, llr_max, _ = _prepare(llr, code, quant)
    return _sc_kernel(ch, code.frozen_mask, code.n, llr_max)


def scl_decode(llr, code: PolarCode, list_size: int,
               quant: FixedPoint | None = None) -> SclDecodeResult:
    """CRC-aided SCL decoding.

    After every information bit the ``2A`` expanded paths are sorted by
    (metric, expansion index) and the ``list_size`` smallest survive. In
    fixed-point mode, metrics saturate at the unsigned ``pm_bits`` range and
    are re-based to the best survivor after each pruning step.
    """
    if list_size < 1:
        raise ValueError("list size must be >= 1")
    ch, llr_max, pm_max = _prepare(llr, code, quant)
    u, m, sat = _scl_kernel(ch, code.frozen_mask, code.n, int(list_size),
                            llr_max, pm_max, quant is not None)
    ok = crc_pass_rows(code, u[:, code.info_index])
    hits = np.flatnonzero(ok)
    sel = int(hits[0]) if hits.size else 0
    return SclDecodeResult(u, m, ok, sel, int(list_size), int(sat))


def ascl_decode(llr, code: PolarCode, max_list: int, variant: str = "original",
                quant: FixedPoint | None = None) -> tuple[SclDecodeResult, list[int]]:
    """Adaptive SCL: retry with a larger list until a candidate passes the CRC.

    ``original`` doubles the list size 1, 2, 4, ... up to ``max_list``;
    ``simplified`` tries SC (list size 1) and then ``max_list`` directly.
    Returns the terminating result and every list size attempted.
    """
    if variant == "original":
        if max_list < 1 or max_list & (max_list - 1):
            raise ValueError("max_list must be a power of two for the original variant")
        sizes = []
        L = 1
        while L < max_list:
            sizes.append(L)
            L *= 2
        sizes.append(max_list)
    elif variant == "simplified":
        sizes = [1, max_list] if max_list > 1 else [1]
    else:
        raise ValueError(f"unknown variant {variant!r}")
    tried = []
    for L in sizes:
        res = scl_decode(llr, code, L, quant)
        tried.append(L)
        if res.passed_crc:
            break
    return res, tried
