"""CRC-aided polar list decoding and a two-stage adaptive list decoder with an exact overflow model."""

from .channel import ChannelConfig, FixedPoint, QuantSpec, quantize, transmit
from .codec import CrcSpec, PolarCode, attach_crc, check_crc, construct_code, encode
from .decoders import SclDecodeResult, ascl_decode, sc_decode, scl_decode
from .latency import ds_latency, dl_latency, memory_estimate, speed_gain, system_latency
from .markov import MarkovModel, TasclParams, build_model, stationary
from .scheduler import Scheduler, SchedulerConfig, simulate_bernoulli, simulate_full

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig", "FixedPoint", "QuantSpec", "quantize", "transmit",
    "CrcSpec", "PolarCode", "attach_crc", "check_crc", "construct_code", "encode",
    "SclDecodeResult", "ascl_decode", "sc_decode", "scl_decode",
    "ds_latency", "dl_latency", "memory_estimate", "speed_gain", "system_latency",
    "MarkovModel", "TasclParams", "build_model", "stationary",
    "Scheduler", "SchedulerConfig", "simulate_bernoulli", "simulate_full",
]
