"""BPSK over AWGN with counter-based per-frame random streams, and LLR quantisation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ChannelConfig",
    "QuantSpec",
    "FixedPoint",
    "noise_variance",
    "frame_rng",
    "transmit",
    "quantize",
]

# distinct stream tags so that payload and noise draws never share a substream
STREAM_PAYLOAD = 0
STREAM_NOISE = 1


@dataclass(frozen=True)
class ChannelConfig:
    ebn0_db: float
    rate: float
    seed: int = 0
    frame_index: int = 0

    def __post_init__(self):
        if not math.isfinite(self.ebn0_db):
            raise ValueError("ebn0_db must be finite")
        if not 0.0 < self.rate <= 1.0:
            raise ValueError("rate must lie in (0, 1]")


@dataclass(frozen=True)
class QuantSpec:
    total_bits: int
    fraction_bits: int = 1
    saturating: bool = True

    def __post_init__(self):
        if not 0 <= self.fraction_bits < self.total_bits:
            raise ValueError("need 0 <= fraction_bits < total_bits")

    @property
    def step(self) -> float:
        return 2.0 ** -self.fraction_bits

    @property
    def max_value(self) -> float:
        """Largest magnitude of the symmetric signed range."""
        return (2 ** (self.total_bits - 1) - 1) * self.step

    @property
    def max_unsigned(self) -> float:
        return (2 ** self.total_bits - 1) * self.step


def noise_variance(ebn0_db: float, rate: float) -> float:
    return 1.0 / (2.0 * rate * 10.0 ** (ebn0_db / 10.0))


def frame_rng(seed: int, frame_index: int, stream: int) -> np.random.Generator:
    """Independent generator for one (seed, frame, stream) triple.

    Philox is counter based, so any frame can be regenerated without touching
    the others and results do not depend on execution order.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(frame_index)))
    return np.random.Generator(np.random.Philox(ss))


def transmit(x, cfg: ChannelConfig) -> np.ndarray:
    """Map bits to +/-1, add white Gaussian noise, return channel LLRs ``2y/sigma^2``."""
    x = np.asarray(x, dtype=np.uint8)
    sigma2 = noise_variance(cfg.ebn0_db, cfg.rate)
    rng = frame_rng(cfg.seed, cfg.frame_index, STREAM_NOISE)
    y = 1.0 - 2.0 * x + rng.standard_normal(x.shape) * math.sqrt(sigma2)
    return 2.0 * y / sigma2


def quantize(llr, q: QuantSpec) -> np.ndarray:
    """Round to the fixed-point grid and saturate symmetrically."""
    v = np.asarray(llr, dtype=np.float64)
    out = np.round(v / q.step) * q.step
    if q.saturating:
        out = np.clip(out, -q.max_value, q.max_value)
    return out + 0.0  # normalise -0.0


@dataclass(frozen=True)
class FixedPoint:
    """LLR and path-metric word lengths sharing one binary point."""

    llr_bits: int = 6
    pm_bits: int = 8
    frac_bits: int = 1

    @property
    def llr(self) -> QuantSpec:
        return QuantSpec(self.llr_bits, self.frac_bits)

    @property
    def pm(self) -> QuantSpec:
        return QuantSpec(self.pm_bits, self.frac_bits)
