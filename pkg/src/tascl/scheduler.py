"""Slot-level simulation of the two-stage decoder.

One input slot is the time the small decoder ``D_s`` spends on a frame. The
large decoder ``D_l`` needs ``beta = bn / bd`` slots per frame, so time inside a
slot is counted in ``bd`` sub-slots and a ``D_l`` frame costs ``bn`` of them.
Cycle-level timestamps use ticks of ``1 / bd`` clock cycles, which keeps every
quantity an integer.

Frame ``t`` enters at cycle ``t*C_s``, leaves ``D_s`` at ``(t+1)*C_s`` and is
emitted from the output buffer at ``t*C_s + latency``.
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numba import njit

from .channel import STREAM_PAYLOAD, ChannelConfig, FixedPoint, frame_rng, transmit
from .codec import PolarCode, attach_crc, encode
from .decoders import scl_decode
from .latency import output_buffer_frames, system_latency
from .markov import TasclParams

__all__ = [
    "SchedulerError",
    "SchedulerConfig",
    "SchedulerStats",
    "Scheduler",
    "warmup_slots",
    "simulate_bernoulli",
    "simulate_full",
    "FullResult",
]

TRACE_FIELDS = ("slot", "X", "buffer_occ", "dl_remaining", "event")


class SchedulerError(RuntimeError):
    pass


@dataclass(frozen=True)
class SchedulerConfig:
    params: TasclParams
    C_s: int = 1
    C_rw: int = 0
    mode: str = "bernoulli"
    code: PolarCode | None = None
    list_small: int = 2
    list_large: int = 32
    quant_small: FixedPoint | None = None
    quant_large: FixedPoint | None = None

    def __post_init__(self):
        if self.mode not in ("bernoulli", "full"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "full" and self.code is None:
            raise ValueError("full mode needs a PolarCode")
        if self.C_s < 1 or self.C_rw < 0:
            raise ValueError("C_s must be positive and C_rw non-negative")

    @property
    def latency(self) -> Fraction:
        return system_latency(self.C_s, self.C_rw, self.params.beta, self.params.zeta)

    @property
    def output_capacity(self) -> int:
        return output_buffer_frames(self.params.beta, self.params.zeta)


def warmup_slots(params: TasclParams) -> int:
    b = params.beta
    return math.ceil(b * params.zeta + b) + 1


@dataclass
class SchedulerStats:
    frames: int = 0
    ds_failures: int = 0
    overflows: int = 0
    dl_completions: int = 0
    frame_errors: int = 0
    state_occupancy: np.ndarray | None = None
    max_output_buffer_occupancy: int = 0
    max_llr_buffer_occupancy: int = 0
    emitted: int = 0

    @property
    def occupancy_freq(self) -> np.ndarray:
        return self.state_occupancy / max(1, self.state_occupancy.sum())

    @property
    def overflow_rate(self) -> float:
        return self.overflows / max(1, self.frames)

    @property
    def ds_failure_rate(self) -> float:
        return self.ds_failures / max(1, self.frames)

    @property
    def bler(self) -> float:
        return self.frame_errors / max(1, self.frames)


class Scheduler:
    """Event-exact model of the LLR buffer, ``D_l`` and the output buffer.

    ``step`` advances one input slot and returns the events it produced as
    ``(kind, frame, time)`` tuples, time in ticks. Kinds are ``dl_start``,
    ``dl_done``, ``enqueue``, ``overflow`` and ``emit``.
    """

    def __init__(self, cfg: SchedulerConfig, trace: bool = False):
        self.cfg = cfg
        p = cfg.params
        self.bn, self.bd, self.zeta = p.beta_n, p.beta_d, p.zeta
        self.slot = 0
        self.queue: deque[int] = deque()
        self.inflight: int | None = None
        self.remaining = 0
        self.S = self.bn * self.zeta + self.bn + 1
        # ticks
        self.tick_slot = cfg.C_s * self.bd
        self.tick_subslot = cfg.C_s
        self.tick_rw = cfg.C_rw * self.bd
        lat = cfg.latency * self.bd
        if lat.denominator != 1:
            raise SchedulerError("latency is not a whole number of ticks")
        self.tick_latency = int(lat)
        self.capacity = cfg.output_capacity
        self.settled: dict[int, int] = {}
        self.route: dict[int, str] = {}
        self.out_buf: deque[int] = deque()
        self.emitted = 0
        self.last_emitted = -1
        self.latencies: set[int] = set()
        self.max_out = 0
        self.max_llr = 0
        self.trace_rows: list[dict] | None = [] if trace else None

    @property
    def k(self) -> int:
        """Composite state ``X * bd`` at the current slot boundary."""
        return self.bn * len(self.queue) + (self.remaining if self.inflight is not None else 0)

    @property
    def X(self) -> Fraction:
        return Fraction(self.k, self.bd)

    def emission_time(self, t: int) -> int:
        return t * self.tick_slot + self.tick_latency

    def _emit_until(self, now: int, events: list):
        while self.out_buf and self.emission_time(self.out_buf[0]) <= now:
            f = self.out_buf.popleft()
            when = self.emission_time(f)
            if f not in self.settled or self.settled[f] + self.tick_rw > when:
                raise SchedulerError(f"frame {f} emitted before its final result was written")
            del self.settled[f]
            self.route.pop(f, None)
            if f != self.last_emitted + 1:
                raise SchedulerError(f"frame {f} emitted out of order")
            self.last_emitted = f
            self.emitted += 1
            self.latencies.add(when - f * self.tick_slot)
            events.append(("emit", f, when))

    def step(self, ds_pass: bool, frame=None) -> list[tuple[str, int, int]]:
        t = self.slot
        frame = t if frame is None else frame
        if frame != t:
            raise SchedulerError("frames must be stepped in input order")
        events: list[tuple[str, int, int]] = []
        t0 = t * self.tick_slot
        # D_l works through bd sub-slots while D_s decodes frame t
        budget, pos = self.bd, 0
        while budget > 0 and self.inflight is not None:
            use = min(self.remaining, budget)
            self.remaining -= use
            budget -= use
            pos += use
            if self.remaining == 0:
                done = t0 + pos * self.tick_subslot
                self.settled[self.inflight] = done
                events.append(("dl_done", self.inflight, done))
                if self.queue:
                    self.inflight = self.queue.popleft()
                    self.remaining = self.bn
                    events.append(("dl_start", self.inflight, done))
                else:
                    self.inflight = None
        t1 = t0 + self.tick_slot
        self._emit_until(t1, events)
        self.out_buf.append(t)
        self.max_out = max(self.max_out, len(self.out_buf))
        if len(self.out_buf) > self.capacity:
            raise SchedulerError(f"output buffer holds {len(self.out_buf)} > {self.capacity} frames")
        if ds_pass:
            self.route[t] = "ds"
            self.settled[t] = t1
        elif self.inflight is None:
            self.inflight, self.remaining = t, self.bn
            self.route[t] = "dl"
            events.append(("dl_start", t, t1))
        elif len(self.queue) < self.zeta:
            self.queue.append(t)
            self.route[t] = "dl"
            events.append(("enqueue", t, t1))
        else:
            self.route[t] = "overflow"
            self.settled[t] = t1
            events.append(("overflow", t, t1))
        self.max_llr = max(self.max_llr, len(self.queue))
        if self.trace_rows is not None:
            self.trace_rows.append({
                "slot": t, "X": str(self.X), "buffer_occ": len(self.queue),
                "dl_remaining": self.remaining if self.inflight is not None else 0,
                "event": ";".join(f"{e}:{f}" for e, f, _ in events if e != "emit") or "-",
            })
        self.slot += 1
        return events

    def drain(self) -> list[tuple[str, int, int]]:
        """Finish ``D_l`` work and emit everything still buffered (no new input)."""
        events: list = []
        while self.inflight is not None:
            t0 = self.slot * self.tick_slot
            budget, pos = self.bd, 0
            while budget > 0 and self.inflight is not None:
                use = min(self.remaining, budget)
                self.remaining -= use
                budget -= use
                pos += use
                if self.remaining == 0:
                    done = t0 + pos * self.tick_subslot
                    self.settled[self.inflight] = done
                    events.append(("dl_done", self.inflight, done))
                    if self.queue:
                        self.inflight = self.queue.popleft()
                        self.remaining = self.bn
                    else:
                        self.inflight = None
            self.slot += 1
        if self.out_buf:
            self._emit_until(self.emission_time(self.out_buf[-1]), events)
        return events

    def emission_latencies(self) -> set[Fraction]:
        """Distinct arrival-to-emission latencies seen so far, in cycles."""
        return {Fraction(v, self.bd) for v in self.latencies}

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(TRACE_FIELDS), lineterminator="\n")
        w.writeheader()
        w.writerows(self.trace_rows or [])
        return buf.getvalue()


# -- Bernoulli mode -----------------------------------------------------------

@njit(cache=True)
def _bernoulli_kernel(bn, bd, zeta, eps_s, eps_l, n_slots, warm, seed):
    np.random.seed(seed)
    S = bn * zeta + bn + 1
    occ = np.zeros(S, dtype=np.int64)
    q = 0
    r = 0
    fails = 0
    overflows = 0
    dl_done = 0
    dl_err = 0
    max_q = 0
    for t in range(n_slots):
        counted = t >= warm
        budget = bd
        while budget > 0 and r > 0:
            use = r if r < budget else budget
            r -= use
            budget -= use
            if r == 0:
                bad = np.random.random() < eps_l
                if counted:
                    dl_done += 1
                    if bad:
                        dl_err += 1
                if q > 0:
                    q -= 1
                    r = bn
        if np.random.random() < eps_s:
            if counted:
                fails += 1
            if r == 0:
                r = bn
            elif q < zeta:
                q += 1
            elif counted:
                overflows += 1
        if q > max_q:
            max_q = q
        if counted:
            occ[bn * q + r] += 1
    return occ, fails, overflows, dl_done, dl_err, max_q


def simulate_bernoulli(cfg: SchedulerConfig, n_slots: int, seed: int = 0) -> SchedulerStats:
    """IID small-decoder failures with probability ``eps_s``; large-decoder results wrong w.p. ``eps_l``.

    Statistics exclude the warm-up slots. Frame errors are overflows plus
    wrong large-decoder results; frames passing the small decoder count as
    correct.
    """
    p = cfg.params
    warm = warmup_slots(p)
    if n_slots <= warm:
        raise ValueError(f"need more than {warm} slots")
    occ, fails, ov, done, dl_err, max_q = _bernoulli_kernel(
        p.beta_n, p.beta_d, p.zeta, float(p.eps_s), float(p.eps_l), int(n_slots), warm, int(seed))
    return SchedulerStats(
        frames=int(n_slots - warm), ds_failures=int(fails), overflows=int(ov),
        dl_completions=int(done), frame_errors=int(ov + dl_err), state_occupancy=occ,
        max_llr_buffer_occupancy=int(max_q))


# -- full-decoder mode ------------------------------------------------------

@dataclass
class FullResult:
    stats: SchedulerStats
    ebn0_db: float
    eps_ta: float
    eps_s_fail: float           # small decoder CRC-failure rate (drives the model)
    eps_s_bler: float           # small decoder output wrong
    eps_l: float | None         # large decoder BLER over every frame, if computed
    reference_errors: int | None
    trace: str | None = field(default=None, repr=False)


def _frame(code: PolarCode, ebn0_db: float, seed: int, idx: int):
    msg = frame_rng(seed, idx, STREAM_PAYLOAD).integers(0, 2, code.K - code.r, dtype=np.uint8)
    u = attach_crc(code, msg)
    llr = transmit(encode(code, u), ChannelConfig(ebn0_db, code.rate, seed, idx))
    return u, llr


def simulate_full(cfg: SchedulerConfig, ebn0_db: float, seed: int = 0, min_frames: int = 10_000,
                  min_errors: int = 100, max_frames: int = 10**7, reference: bool = True,
                  trace: bool = False, batch: int = 1000) -> FullResult:
    """Decode real frames through the scheduler until both stopping counts are met.

    With ``reference`` every frame is also decoded by the large decoder on
    its own, giving ``eps_l`` on the same noise realisations.
    """
    code = cfg.code
    p = cfg.params
    sched = Scheduler(cfg, trace=trace)
    warm = warmup_slots(p)
    st = SchedulerStats(state_occupancy=np.zeros(sched.S, dtype=np.int64))
    ref_err = 0
    ds_wrong = 0
    idx = 0
    while idx < max_frames:
        for _ in range(batch):
            u, llr = _frame(code, ebn0_db, seed, idx)
            rs = scl_decode(llr, code, cfg.list_small, cfg.quant_small)
            events = sched.step(rs.passed_crc)
            route = sched.route.pop(idx)
            out = rs.output
            rl = None
            if route == "dl" or reference:
                rl = scl_decode(llr, code, cfg.list_large, cfg.quant_large)
            if route == "dl":
                out = rl.output
            if idx >= warm:
                st.frames += 1
                st.ds_failures += not rs.passed_crc
                st.overflows += route == "overflow"
                st.dl_completions += sum(1 for e in events if e[0] == "dl_done")
                st.frame_errors += bool(np.any(out != u))
                ds_wrong += bool(np.any(rs.output != u))
                st.state_occupancy[sched.k] += 1
                if reference:
                    ref_err += bool(np.any(rl.output != u))
            idx += 1
        if st.frames >= min_frames and st.frame_errors >= min_errors:
            break
    sched.drain()
    st.max_output_buffer_occupancy = sched.max_out
    st.max_llr_buffer_occupancy = sched.max_llr
    st.emitted = sched.emitted
    n = max(1, st.frames)
    return FullResult(
        stats=st, ebn0_db=ebn0_db, eps_ta=st.frame_errors / n, eps_s_fail=st.ds_failures / n,
        eps_s_bler=ds_wrong / n, eps_l=ref_err / n if reference else None,
        reference_errors=ref_err if reference else None,
        trace=sched.trace_csv() if trace else None)
