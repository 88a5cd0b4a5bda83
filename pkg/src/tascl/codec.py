"""Polar code construction, encoding and CRC attachment.

Bit order is natural: ``x = u . F^{(x)n}`` with ``F = [[1, 0], [1, 1]]`` and no
bit-reversal permutation. The CRC checksum occupies the last ``r`` information
positions in ascending index order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "CodeError",
    "CrcSpec",
    "PolarCode",
    "DEFAULT_CRC_POLYNOMIALS",
    "default_crc",
    "construct_code",
    "bhattacharyya_parameters",
    "ga_mean_llrs",
    "polar_transform",
    "encode",
    "attach_crc",
    "extract_info",
    "check_crc",
    "crc_pass_rows",
    "load_code",
    "save_code",
]


class CodeError(ValueError):
    """Invalid code parameters or a vector that violates the code structure."""


# Generator polynomials including the x^r term.
DEFAULT_CRC_POLYNOMIALS = {
    4: 0x13,
    6: 0x61,
    8: 0x107,
    11: 0xE21,
    16: 0x11021,
    24: 0x1864CFB,
}


@dataclass(frozen=True)
class CrcSpec:
    width: int
    polynomial: int
    init_value: int = 0
    placement: str = "tail"

    def __post_init__(self):
        if self.width < 0:
            raise CodeError("CRC width must be non-negative")
        if self.width and self.polynomial.bit_length() - 1 != self.width:
            raise CodeError(
                f"polynomial 0x{self.polynomial:X} has degree "
                f"{self.polynomial.bit_length() - 1}, expected {self.width}"
            )
        if self.init_value >> max(self.width, 0):
            raise CodeError("init_value wider than the CRC")
        if self.placement != "tail":
            raise CodeError("only tail placement is supported")

    def checksum(self, bits) -> np.ndarray:
        """Bitwise long division (MSB first); returns the ``width`` checksum bits."""
        r = self.width
        if r == 0:
            return np.zeros(0, dtype=np.uint8)
        mask = (1 << r) - 1
        low = self.polynomial & mask
        reg = self.init_value
        for b in np.asarray(bits, dtype=np.uint8):
            top = ((reg >> (r - 1)) & 1) ^ int(b)
            reg = (reg << 1) & mask
            if top:
                reg ^= low
        return np.array([(reg >> (r - 1 - i)) & 1 for i in range(r)], dtype=np.uint8)

    def parity_matrix(self, length: int) -> tuple[np.ndarray, np.ndarray]:
        """Affine form of the checksum: ``crc(m) = m @ G ^ c0 (mod 2)``."""
        return _parity_matrix(self, length)


@lru_cache(maxsize=64)
def _parity_matrix(spec: CrcSpec, length: int):
    c0 = spec.checksum(np.zeros(length, dtype=np.uint8))
    G = np.empty((length, spec.width), dtype=np.uint8)
    e = np.zeros(length, dtype=np.uint8)
    for i in range(length):
        e[i] = 1
        G[i] = spec.checksum(e) ^ c0
        e[i] = 0
    G.setflags(write=False)
    c0.setflags(write=False)
    return G, c0


def default_crc(width: int) -> CrcSpec:
    if width == 0:
        return CrcSpec(0, 0)
    try:
        return CrcSpec(width, DEFAULT_CRC_POLYNOMIALS[width])
    except KeyError:
        raise CodeError(f"no default CRC polynomial for width {width}") from None


@dataclass(frozen=True)
class PolarCode:
    n: int
    K: int
    r: int
    info_set: tuple[int, ...]
    crc: CrcSpec
    design_snr: float | None = None
    method: str | None = None
    N: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "N", 1 << self.n)
        object.__setattr__(self, "info_set", tuple(sorted(int(i) for i in self.info_set)))
        if len(self.info_set) != self.K:
            raise CodeError(f"info_set has {len(self.info_set)} entries, expected K={self.K}")
        if len(set(self.info_set)) != self.K:
            raise CodeError("info_set has duplicate indices")
        if self.info_set and (self.info_set[0] < 0 or self.info_set[-1] >= self.N):
            raise CodeError("info_set index out of range")
        if not 0 <= self.r < self.K:
            raise CodeError("need 0 <= r < K")
        if self.crc.width != self.r:
            raise CodeError("CRC width must equal r")

    @property
    def rate(self) -> float:
        return (self.K - self.r) / self.N

    @cached_property
    def info_mask(self) -> np.ndarray:
        m = np.zeros(self.N, dtype=np.bool_)
        m[list(self.info_set)] = True
        m.setflags(write=False)
        return m

    @cached_property
    def frozen_mask(self) -> np.ndarray:
        m = ~self.info_mask
        m.setflags(write=False)
        return m

    @cached_property
    def info_index(self) -> np.ndarray:
        a = np.array(self.info_set, dtype=np.int64)
        a.setflags(write=False)
        return a

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "K": self.K,
            "r": self.r,
            "design_snr": self.design_snr,
            "method": self.method,
            "crc": {
                "width": self.crc.width,
                "polynomial": hex(self.crc.polynomial),
                "init_value": hex(self.crc.init_value),
            },
            "info_set": list(self.info_set),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolarCode":
        c = d.get("crc") or {}
        r = int(d["r"])
        if c:
            crc = CrcSpec(int(c.get("width", r)), int(str(c["polynomial"]), 0),
                          int(str(c.get("init_value", "0")), 0))
        else:
            crc = default_crc(r)
        return cls(int(d["n"]), int(d["K"]), r, tuple(d["info_set"]), crc,
                   d.get("design_snr"), d.get("method"))


# -- construction -----------------------------------------------------------

def bhattacharyya_parameters(n: int, z0: float) -> np.ndarray:
    """Log-Bhattacharyya parameter of each synthetic bit channel, natural order.

    Uses ``z -> (2z - z^2, z^2)`` for the (upper, lower) branch at every level,
    evaluated in the log domain so tiny values keep their ordering.
    """
    if not 0.0 < z0 <= 1.0:
        raise CodeError("z0 must lie in (0, 1]")
    lz = np.array([math.log(z0)])
    for _ in range(n):
        bad = lz + np.log(2.0 - np.exp(lz))
        good = 2.0 * lz
        lz = np.stack([bad, good], axis=1).reshape(-1)
    return lz


def _phi(x: float) -> float:
    if x <= 0.0:
        return 1.0
    if x < 10.0:
        return math.exp(-0.4527 * x ** 0.86 + 0.0218)
    return math.sqrt(math.pi / x) * math.exp(-x / 4.0) * (1.0 - 10.0 / (7.0 * x))


def _log_phi(x: float) -> float:
    if x < 10.0:
        return math.log(_phi(x))
    return 0.5 * math.log(math.pi / x) - x / 4.0 + math.log1p(-10.0 / (7.0 * x))


def _phi_inv_log(log_y: float) -> float:
    # phi is decreasing; log_phi(0) = 0
    if log_y >= 0.0:
        return 0.0
    hi = 1.0
    while _log_phi(hi) > log_y:
        hi *= 2.0
    return brentq(lambda x: _log_phi(x) - log_y, 0.0, hi, xtol=1e-12, rtol=1e-12)


def ga_mean_llrs(n: int, m0: float) -> np.ndarray:
    """Mean LLR of each bit channel under the Gaussian approximation, natural order."""
    m = np.array([float(m0)])
    for _ in range(n):
        bad = np.empty_like(m)
        for i, v in enumerate(m):
            lp = _log_phi(v)
            p = math.exp(lp)
            # 1 - (1 - p)^2 = p (2 - p)
            bad[i] = _phi_inv_log(lp + math.log(2.0 - p))
        m = np.stack([bad, 2.0 * m], axis=1).reshape(-1)
    return m


def construct_code(n: int, K: int, r: int, design_snr: float = 2.0,
                   method: str = "bhattacharyya", crc: CrcSpec | None = None,
                   z0: float | None = None) -> PolarCode:
    """Pick the ``K`` most reliable bit channels at ``design_snr`` (Eb/N0, dB).

    ``z0`` overrides the channel Bhattacharyya parameter (bhattacharyya only).
    Ties are broken towards the larger index, so raising ``K`` always yields a
    superset of the previous information set.
    """
    if n < 0:
        raise CodeError("n must be non-negative")
    N = 1 << n
    if not 0 < K <= N:
        raise CodeError(f"need 0 < K <= {N}")
    if not 0 <= r < K:
        raise CodeError("need 0 <= r < K")
    rate = (K - r) / N
    ebn0 = 10.0 ** (design_snr / 10.0)
    if method == "bhattacharyya":
        if z0 is None:
            z0 = math.exp(-rate * ebn0)
        badness = bhattacharyya_parameters(n, z0)
    elif method == "gaussian_approx":
        if z0 is not None:
            raise CodeError("z0 applies to the bhattacharyya method only")
        badness = -ga_mean_llrs(n, 4.0 * rate * ebn0)
    else:
        raise CodeError(f"unknown construction method {method!r}")
    idx = np.arange(N)
    # most reliable first: smallest badness, then larger index
    order = np.lexsort((-idx, badness))
    info = sorted(int(i) for i in order[:K])
    return PolarCode(n, K, r, tuple(info), crc if crc is not None else default_crc(r),
                     design_snr, method)


# -- encoding ---------------------------------------------------------------

def polar_transform(u) -> np.ndarray:
    """``u . F^{(x)n}`` over GF(2) on the last axis, in log2(N) butterfly passes."""
    x = np.array(u, dtype=np.uint8, copy=True)
    N = x.shape[-1]
    if N & (N - 1):
        raise CodeError("length must be a power of two")
    lead = x.shape[:-1]
    h = N // 2
    while h >= 1:
        v = x.reshape(*lead, N // (2 * h), 2, h)
        v[..., 0, :] ^= v[..., 1, :]
        h //= 2
    return x


def encode(code: PolarCode, u) -> np.ndarray:
    u = np.asarray(u, dtype=np.uint8)
    if u.shape[-1] != code.N:
        raise CodeError(f"source word length {u.shape[-1]} != N={code.N}")
    if np.any(u[..., code.frozen_mask]):
        raise CodeError("non-zero value in a frozen position")
    return polar_transform(u)


def attach_crc(code: PolarCode, message) -> np.ndarray:
    """Place ``message`` and its checksum into the information positions."""
    m = np.asarray(message, dtype=np.uint8)
    if m.shape[-1] != code.K - code.r:
        raise CodeError(f"message length {m.shape[-1]} != K - r = {code.K - code.r}")
    if code.r:
        G, c0 = code.crc.parity_matrix(code.K - code.r)
        chk = ((m.astype(np.int64) @ G) & 1).astype(np.uint8) ^ c0
        info = np.concatenate([m, chk], axis=-1)
    else:
        info = m
    u = np.zeros(m.shape[:-1] + (code.N,), dtype=np.uint8)
    u[..., code.info_index] = info
    return u


def extract_info(code: PolarCode, u) -> np.ndarray:
    return np.asarray(u, dtype=np.uint8)[..., code.info_index]


def crc_pass_rows(code: PolarCode, infos) -> np.ndarray:
    """Vectorised CRC check over the leading axes of a ``(..., K)`` array."""
    infos = np.asarray(infos, dtype=np.uint8)
    if code.r == 0:
        return np.ones(infos.shape[:-1], dtype=np.bool_)
    k0 = code.K - code.r
    G, c0 = code.crc.parity_matrix(k0)
    chk = ((infos[..., :k0].astype(np.int64) @ G) & 1).astype(np.uint8) ^ c0
    return np.all(chk == infos[..., k0:], axis=-1)


def check_crc(code: PolarCode, decoded_info) -> bool:
    info = np.asarray(decoded_info, dtype=np.uint8)
    if info.shape != (code.K,):
        raise CodeError(f"expected {code.K} information bits")
    return bool(crc_pass_rows(code, info))


def save_code(code: PolarCode, path) -> None:
    Path(path).write_text(json.dumps(code.to_dict(), indent=2) + "\n")


def load_code(path) -> PolarCode:
    return PolarCode.from_dict(json.loads(Path(path).read_text()))
