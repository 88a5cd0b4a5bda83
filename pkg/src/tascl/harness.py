"""Monte Carlo BLER runs, model-vs-simulation checks and the buffer design search."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import stats

from .channel import STREAM_PAYLOAD, ChannelConfig, FixedPoint, frame_rng, transmit
from .codec import PolarCode, attach_crc, encode
from .decoders import ascl_decode, sc_decode, scl_decode
from .latency import speed_gain
from .markov import (
    TasclParams,
    bler_bound,
    build_model,
    overflow_probability,
    reduce_states,
    stationary,
)
from .scheduler import SchedulerConfig, simulate_bernoulli

__all__ = [
    "DesignInfeasible",
    "ExperimentConfig",
    "DesignTarget",
    "BLER_FIELDS",
    "clopper_pearson",
    "parse_decoder",
    "run_bler",
    "rows_to_csv",
    "read_curve",
    "interp_log",
    "snr_at_bler",
    "design_search",
    "compare_model_vs_sim",
]

BLER_FIELDS = ("snr_db", "decoder", "frames", "errors", "bler", "ci_low", "ci_high",
               "crc_failures", "avg_list_sum", "avg_list_terminal", "complete")


class DesignInfeasible(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    code: PolarCode
    snr_grid: list[float]
    decoder: str = "scl:8"
    min_frames: int = 10_000
    min_errors: int = 100
    max_frames: int = 10**7
    seed: int = 0
    workers: int = 1
    quant: FixedPoint | None = None
    batch: int = 1000
    time_limit: float | None = None
    noiseless: bool = False

    def __post_init__(self):
        if list(self.snr_grid) != sorted(self.snr_grid):
            raise ValueError("snr_grid must be sorted")
        parse_decoder(self.decoder)


@dataclass(frozen=True)
class DesignTarget:
    delta_max: float = 0.30
    target_bler: float = 1e-2
    zeta_max: int = 8

    def __post_init__(self):
        if self.delta_max <= 0:
            raise ValueError("delta_max must be positive")
        if not 0.0 < self.target_bler < 1.0:
            raise ValueError("target_bler must lie in (0, 1)")
        if self.zeta_max < 1:
            raise ValueError("zeta_max must be >= 1")


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def parse_decoder(spec: str) -> tuple:
    """``sc``, ``scl:L`` or ``ascl:Lmax:variant``."""
    parts = spec.lower().split(":")
    if parts[0] == "sc" and len(parts) == 1:
        return ("sc",)
    if parts[0] == "scl" and len(parts) == 2:
        return ("scl", int(parts[1]))
    if parts[0] == "ascl" and len(parts) in (2, 3):
        variant = parts[2] if len(parts) == 3 else "original"
        if variant not in ("original", "simplified"):
            raise ValueError(f"unknown A-SCL variant {variant!r}")
        return ("ascl", int(parts[1]), variant)
    raise ValueError(f"bad decoder spec {spec!r}")


def _batch(code: PolarCode, dec: tuple, ebn0: float, seed: int, start: int, count: int,
           quant: FixedPoint | None, noiseless: bool) -> tuple[int, int, int, int]:
    """(errors, crc failures, sum of attempted list sizes, sum of terminal list sizes)."""
    err = crc_fail = lsum = lterm = 0
    for idx in range(start, start + count):
        msg = frame_rng(seed, idx, STREAM_PAYLOAD).integers(0, 2, code.K - code.r, dtype=np.uint8)
        u = attach_crc(code, msg)
        x = encode(code, u)
        if noiseless:
            llr = np.where(x == 0, 1e3, -1e3)
        else:
            llr = transmit(x, ChannelConfig(ebn0, code.rate, seed, idx))
        if dec[0] == "sc":
            out = sc_decode(llr, code, quant)
            ok = True
        elif dec[0] == "scl":
            res = scl_decode(llr, code, dec[1], quant)
            out, ok = res.output, res.passed_crc
        else:
            res, tried = ascl_decode(llr, code, dec[1], dec[2], quant)
            out, ok = res.output, res.passed_crc
            lsum += sum(tried)
            lterm += tried[-1]
        err += bool(np.any(out != u))
        crc_fail += not ok
    return err, crc_fail, lsum, lterm


def _run_point(cfg: ExperimentConfig, dec: tuple, snr: float, pool) -> dict:
    frames = err = crc = lsum = lterm = 0
    start = 0
    t0 = time.monotonic()
    complete = False
    args = (cfg.code, dec, snr, cfg.seed)
    while frames < cfg.max_frames:
        # fixed batch boundaries keep the stopping point independent of the worker count
        n_par = max(1, cfg.workers)
        starts = [start + i * cfg.batch for i in range(n_par)]
        if pool is None:
            results = (_batch(*args, s, cfg.batch, cfg.quant, cfg.noiseless) for s in starts)
        else:
            futs = [pool.submit(_batch, *args, s, cfg.batch, cfg.quant, cfg.noiseless)
                    for s in starts]
            results = (f.result() for f in futs)
        for r in results:
            err += r[0]
            crc += r[1]
            lsum += r[2]
            lterm += r[3]
            frames += cfg.batch
            start += cfg.batch
            if frames >= cfg.min_frames and err >= cfg.min_errors:
                complete = True
                break
        if complete:
            break
        if cfg.time_limit is not None and time.monotonic() - t0 > cfg.time_limit:
            break
    lo, hi = clopper_pearson(err, frames)
    is_ascl = dec[0] == "ascl"
    return {
        "snr_db": snr, "decoder": cfg.decoder, "frames": frames, "errors": err,
        "bler": err / frames, "ci_low": lo, "ci_high": hi, "crc_failures": crc,
        "avg_list_sum": lsum / frames if is_ascl else "",
        "avg_list_terminal": lterm / frames if is_ascl else "",
        "complete": int(complete),
    }


def run_bler(cfg: ExperimentConfig) -> list[dict]:
    """One row per SNR point; rows are identical for any worker count."""
    dec = parse_decoder(cfg.decoder)
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return [_run_point(cfg, dec, s, pool) for s in cfg.snr_grid]
    return [_run_point(cfg, dec, s, None) for s in cfg.snr_grid]


def rows_to_csv(rows, fields=BLER_FIELDS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def read_curve(path_or_text, column: str = "bler") -> list[tuple[float, float]]:
    """(snr, value) pairs from a BLER CSV; ``column`` may be ``crc_failures`` (turned into a rate)."""
    text = path_or_text
    if "\n" not in str(path_or_text):
        with open(path_or_text) as fh:
            text = fh.read()
    pts = []
    for row in csv.DictReader(io.StringIO(text)):
        if column == "crc_failures":
            v = int(row["crc_failures"]) / int(row["frames"])
        else:
            v = float(row[column])
        pts.append((float(row["snr_db"]), v))
    return sorted(pts)


def interp_log(curve, snr: float) -> float:
    """Log-linear interpolation of a BLER curve in (dB, log BLER); clamps outside the grid."""
    xs = np.array([p[0] for p in curve], dtype=float)
    ys = np.array([p[1] for p in curve], dtype=float)
    if snr <= xs[0]:
        return float(ys[0])
    if snr >= xs[-1]:
        return float(ys[-1])
    j = int(np.searchsorted(xs, snr)) - 1
    w = (snr - xs[j]) / (xs[j + 1] - xs[j])
    a, b = ys[j], ys[j + 1]
    if a <= 0 or b <= 0:
        return float(a + w * (b - a))
    return float(math.exp(math.log(a) + w * (math.log(b) - math.log(a))))


def snr_at_bler(curve, target: float) -> float:
    """SNR where a decreasing BLER curve crosses ``target`` (log-linear)."""
    pts = sorted(curve)
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        if y0 >= target >= y1 and y0 > 0 and y1 > 0 and y0 != y1:
            w = (math.log(y0) - math.log(target)) / (math.log(y0) - math.log(y1))
            return x0 + w * (x1 - x0)
    raise ValueError(f"curve does not cross {target}")


def _min_zeta(beta: Fraction, eps_s: float, eps_l: float, target: DesignTarget):
    for zeta in range(1, target.zeta_max + 1):
        ov = overflow_probability(TasclParams(beta.numerator, beta.denominator, zeta, eps_s, eps_l))
        d = bler_bound(eps_l, ov)["delta"]
        if d <= target.delta_max:
            return zeta, d
    return None, None


def design_search(C_s: int, C_l: int, es_curve, el_curve, target: DesignTarget,
                  max_denominator: int | None = None) -> dict:
    """Smallest buffer, then smallest idle padding, meeting the loss target.

    ``es_curve`` and ``el_curve`` are (snr, rate) pairs for the small
    decoder's CRC-failure rate and the large decoder's BLER.
    """
    snr = snr_at_bler(el_curve, target.target_bler)
    eps_l = target.target_bler
    eps_s = interp_log(es_curve, snr)

    def beta_for(pad):
        n, d = speed_gain(C_l, C_s + pad, max_denominator)
        return Fraction(n, d)

    out = {"snr_db": snr, "eps_s": eps_s, "eps_l": eps_l}
    beta = beta_for(0)
    zeta, d = _min_zeta(beta, eps_s, eps_l, target)
    pad = 0
    if zeta is None:
        # overflow probability is non-decreasing in beta, so bisect on the padding
        lo, hi = 0, max(1, C_l - C_s)
        if _min_zeta(beta_for(hi), eps_s, eps_l, target)[0] is None:
            raise DesignInfeasible("no padding up to beta = 1 meets the target")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _min_zeta(beta_for(mid), eps_s, eps_l, target)[0] is None:
                lo = mid
            else:
                hi = mid
        pad = hi
        beta = beta_for(pad)
        zeta, d = _min_zeta(beta, eps_s, eps_l, target)
    out.update(beta_n=beta.numerator, beta_d=beta.denominator, zeta=zeta,
               idle_padding_cycles=pad, delta=d, C_s_padded=C_s + pad)
    return out


def compare_model_vs_sim(params: TasclParams, n_slots: int = 10**7, seed: int = 0) -> dict:
    """Occupancy gap (max norm) and overflow-rate z-score of the slot simulation against the model."""
    p = reduce_states(params.beta_n, params.beta_d, params.zeta, params.eps_s, params.eps_l)
    res = stationary(build_model(p))
    st = simulate_bernoulli(SchedulerConfig(p), n_slots, seed)
    gap = float(np.max(np.abs(st.occupancy_freq - res.pi)))
    rate = st.overflow_rate
    sigma = math.sqrt(max(res.pr_overflow * (1 - res.pr_overflow), 0.0) / st.frames)
    if sigma > 0:
        z = (rate - res.pr_overflow) / sigma
    else:
        z = 0.0 if rate == res.pr_overflow else math.inf
    return {
        "beta": str(p.beta), "zeta": p.zeta, "eps_s": p.eps_s, "slots": st.frames,
        "linf": gap, "pr_hazard": res.pr_hazard, "pr_overflow": res.pr_overflow,
        "overflow_rate": rate, "z": z,
    }
