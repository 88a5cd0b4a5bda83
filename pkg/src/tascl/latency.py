"""Clock-cycle latency and memory arithmetic for the two component decoders.

The small-list decoder splits the code into ``M_s``-bit sub-codes; each one is
decoded as a short sequence of special nodes followed by one pruning cycle.
Everything here is exact integer or rational arithmetic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources

import numpy as np

from .codec import PolarCode

__all__ = [
    "LatencyError",
    "SubcodePattern",
    "DsLatency",
    "DlLatency",
    "m_sn",
    "c_sort",
    "subcode_frozen_counts",
    "group_counts",
    "classify_subcode",
    "decompose_special_nodes",
    "canonical_pattern",
    "ds_latency",
    "dl_latency",
    "speed_gain",
    "memory_estimate",
    "system_latency",
    "output_buffer_frames",
    "load_presets",
    "preset",
]

GROUPS = ("one_cycle", "two_cycle", "three_cycle", "four_cycle")

# Bit-channel reliability order of a 16-bit polar sub-code, least reliable first.
# Freezing the first F entries gives the single pattern used for each F.
RELIABILITY_16 = (0, 1, 2, 4, 8, 3, 5, 9, 6, 10, 12, 7, 11, 13, 14, 15)


class LatencyError(ValueError):
    pass


def m_sn(frozen: int, merge: int = 16) -> int:
    """Number of special nodes a ``merge``-bit sub-code with ``frozen`` frozen bits splits into."""
    if merge != 16:
        raise LatencyError("special-node counts are only defined for 16-bit sub-codes")
    if not 0 <= frozen <= merge:
        raise LatencyError(f"frozen count {frozen} outside [0, {merge}]")
    if frozen in (0, 1, 2, 14, 15, 16):
        return 1
    if frozen in (7, 8, 9):
        return 2
    return 3


def c_sort(frozen: int, list_size: int, merge: int = 16) -> int:
    if list_size == 1:
        return 0
    if list_size != 2:
        raise LatencyError("sorting cycles are modelled for list sizes 1 and 2 only")
    return 0 if frozen in (0, merge) else 1


def _group_of(frozen: int, merge: int = 16) -> int:
    """0-based latency group under list size 2."""
    return m_sn(frozen, merge) + c_sort(frozen, 2, merge) - 1


# -- special-node decomposition ----------------------------------------------

def _node_kind(frozen_block: np.ndarray) -> str | None:
    T = frozen_block.size
    nf = int(frozen_block.sum())
    if nf == T:
        return "Rate0"
    if nf == 0:
        return "Rate1"
    if T >= 2 and nf == T - 1 and not frozen_block[-1]:
        return "Rep"
    if T >= 2 and nf == 1 and frozen_block[0]:
        return "SPC"
    if T >= 4 and nf == T - 2 and not frozen_block[-1] and not frozen_block[-2]:
        return "Rep2"
    if T >= 4 and nf == 2 and frozen_block[0] and frozen_block[1]:
        return "SPC2"
    return None


def decompose_special_nodes(frozen_mask) -> list[tuple[str, int]]:
    """Split a sub-code into (kind, length) special nodes, largest dyadic blocks first."""
    fm = np.asarray(frozen_mask, dtype=bool)
    out = []

    def rec(lo, T):
        kind = _node_kind(fm[lo:lo + T])
        if kind is not None:
            out.append((kind, T))
            return
        rec(lo, T // 2)
        rec(lo + T // 2, T // 2)

    rec(0, fm.size)
    return out


def canonical_pattern(frozen: int, merge: int = 16) -> np.ndarray:
    if merge != 16:
        raise LatencyError("canonical patterns are only tabulated for 16-bit sub-codes")
    fm = np.zeros(merge, dtype=bool)
    fm[list(RELIABILITY_16[:frozen])] = True
    return fm


@dataclass(frozen=True)
class SubcodePattern:
    merge: int
    frozen: int
    group: str
    special_nodes: tuple[tuple[str, int], ...]


def classify_subcode(frozen_mask) -> SubcodePattern:
    fm = np.asarray(frozen_mask, dtype=bool)
    F = int(fm.sum())
    return SubcodePattern(fm.size, F, GROUPS[_group_of(F, fm.size)],
                          tuple(decompose_special_nodes(fm)))


def subcode_frozen_counts(code: PolarCode, merge: int = 16) -> np.ndarray:
    if code.N % merge:
        raise LatencyError("N must be a multiple of the merge length")
    return code.frozen_mask.reshape(-1, merge).sum(axis=1).astype(int)


def group_counts(code: PolarCode, merge: int = 16) -> tuple[int, int, int, int]:
    counts = [0, 0, 0, 0]
    for F in subcode_frozen_counts(code, merge):
        counts[_group_of(int(F), merge)] += 1
    return tuple(counts)


# -- decoder latency -----------------------------------------------------------

@dataclass(frozen=True)
class DsLatency:
    C_MBD: int
    C_SCD: int
    C_rw: int

    @property
    def C_s(self) -> int:
        return self.C_MBD + self.C_SCD + self.C_rw


@dataclass(frozen=True)
class DlLatency:
    C_LM: int
    C_SCD: int
    C_fine: int
    C_zero: int
    list_size: int = 32
    merge: int = 4
    parallelism: int = 64

    @property
    def C_l(self) -> int:
        return self.C_LM + self.C_SCD + self.C_fine + self.C_zero


# representative frozen count of each list-size-2 latency group
_GROUP_REP = (0, 1, 7, 3)


def ds_latency(source, N: int | None = None, merge: int = 16, parallelism: int = 64,
               list_size: int = 2) -> DsLatency:
    """Cycle count of the small-list decoder.

    ``source`` is either a ``PolarCode`` or the four sub-code group counts
    (frozen counts {0,16}, {1,2,14,15}, {7,8,9}, others); ``N`` is required
    with group counts.
    """
    if isinstance(source, PolarCode):
        N = source.N
        frozen = [int(F) for F in subcode_frozen_counts(source, merge)]
    else:
        if N is None:
            raise LatencyError("N is required when passing group counts")
        counts = tuple(int(c) for c in source)
        if len(counts) != 4:
            raise LatencyError("expected four group counts")
        if sum(counts) * merge != N:
            raise LatencyError(f"group counts cover {sum(counts) * merge} bits, N={N}")
        frozen = [_GROUP_REP[g] for g, c in enumerate(counts) for _ in range(c)]
    if N % merge or N % (2 * parallelism):
        raise LatencyError("N must be divisible by the merge length and by 2P")
    mbd = sum(m_sn(F, merge) + c_sort(F, list_size, merge) for F in frozen)
    return DsLatency(mbd, N // merge - 1, N // (2 * parallelism))


def dl_latency(C_LM: int, C_SCD: int, C_fine: int, C_zero: int) -> int:
    return C_LM + C_SCD + C_fine + C_zero


def speed_gain(C_l: int, C_s: int, max_denominator: int | None = None) -> tuple[int, int]:
    """Reduced ``(num, den)`` of ``C_l / C_s``.

    When the exact denominator exceeds ``max_denominator`` the smallest
    fraction not below the exact ratio with an admissible denominator is
    returned, so an overflow bound computed from it stays an upper bound.
    """
    if C_l <= 0 or C_s <= 0:
        raise LatencyError("cycle counts must be positive")
    exact = Fraction(C_l, C_s)
    if max_denominator is None or exact.denominator <= max_denominator:
        return exact.numerator, exact.denominator
    best = None
    for d in range(1, max_denominator + 1):
        cand = Fraction(-((-exact.numerator * d) // exact.denominator), d)  # ceil
        if best is None or cand < best:
            best = cand
    return best.numerator, best.denominator


def _as_fraction(beta) -> Fraction:
    if isinstance(beta, tuple):
        return Fraction(*beta)
    return Fraction(beta)


def output_buffer_frames(beta, zeta: int) -> int:
    b = _as_fraction(beta)
    return math.floor(b * zeta + b + 1)


def memory_estimate(N: int, Q: int, list_small: int, list_large: int, parallelism: int,
                    beta, zeta: int) -> dict:
    """Bits of the large-list decoder vs. everything TA-SCL adds on top of it."""
    dl = ((list_large + 1) * N + 3 * list_large * parallelism) * Q + Fraction(list_large * 3 * N, 2)
    other = (zeta + list_small + Fraction(5, 2)) * N * Q \
        + (output_buffer_frames(beta, zeta) + Fraction(3 * list_small, 2)) * N
    return {
        "dl_bits": dl,
        "other_bits": other,
        "overhead_ratio": Fraction(other) / Fraction(dl),
    }


def system_latency(C_s: int, C_rw: int, beta, zeta: int) -> Fraction:
    """Cycles from a frame's arrival to its emission from the output buffer."""
    b = _as_fraction(beta)
    return C_s + C_s * (b * zeta + b) + C_rw


# -- presets ---------------------------------------------------------------

@lru_cache(maxsize=1)
def load_presets() -> dict:
    text = resources.files("tascl").joinpath("data/presets.json").read_text()
    return json.loads(text)


def preset(name: str) -> dict:
    presets = load_presets()
    try:
        return presets[name.lower()]
    except KeyError:
        raise LatencyError(f"unknown preset {name!r}; have {sorted(presets)}") from None
