"""Command-line entry point: ``tascl <command> [options]``.

Exit codes: 0 success, 1 error, 2 infeasible design.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from fractions import Fraction

import numpy as np

from . import harness, latency, markov
from .channel import FixedPoint
from .codec import CodeError, PolarCode, attach_crc, construct_code, encode, load_code
from .scheduler import Scheduler, SchedulerConfig, simulate_bernoulli, simulate_full


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.replace(" ", "").split(",") if v]


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.replace(" ", "").split(",") if v]


def _fracs(s: str) -> list[Fraction]:
    return [Fraction(v) for v in s.replace(" ", "").split(",") if v]


def _load_config(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path:
        if not cp.read(path):
            raise FileNotFoundError(path)
    return cp


def _cfg(args, section: str, key: str, default=None):
    """Command-line value if given, else the config file, else ``default``."""
    v = getattr(args, key.replace(".", "_"), None)
    if v is not None:
        return v
    cp = args._config
    if cp.has_option(section, key):
        return cp.get(section, key)
    return default


def _emit(args, text: str):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _code(args) -> PolarCode:
    path = _cfg(args, "code", "code")
    if path:
        return load_code(path)
    return construct_code(int(_cfg(args, "code", "n", 8)), int(_cfg(args, "code", "K", 128)),
                          int(_cfg(args, "code", "r", 8)),
                          float(_cfg(args, "code", "design_snr", 2.0)),
                          str(_cfg(args, "code", "method", "bhattacharyya")))


def _quant(args, prefix: str = "") -> FixedPoint | None:
    if not getattr(args, "quant", False) and not args._config.getboolean("quant", "enabled",
                                                                          fallback=False):
        return None
    cp = args._config
    return FixedPoint(cp.getint("quant", f"{prefix}llr_bits", fallback=6),
                      cp.getint("quant", f"{prefix}pm_bits", fallback=8),
                      cp.getint("quant", "frac_bits", fallback=1))


def _params(args, eps_s: float = 0.0, eps_l: float = 0.0) -> markov.TasclParams:
    beta = Fraction(str(_cfg(args, "tascl", "beta", "3")))
    zeta = int(_cfg(args, "tascl", "zeta", 1))
    return markov.reduce_states(beta.numerator, beta.denominator, zeta, eps_s, eps_l)


def _code_args(p):
    p.add_argument("--code", help="code JSON written by `construct`")
    p.add_argument("--n", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--design-snr", dest="design_snr", type=float)
    p.add_argument("--method", choices=["bhattacharyya", "gaussian_approx"])


# -- commands ---------------------------------------------------------------

def cmd_construct(args):
    code = _code(args)
    _emit(args, json.dumps(code.to_dict(), indent=2) + "\n")


def cmd_encode(args):
    code = _code(args)
    if args.message:
        msg = np.array([int(c) for c in args.message.strip()], dtype=np.uint8)
    else:
        msg = np.random.default_rng(args.seed).integers(0, 2, code.K - code.r, dtype=np.uint8)
    u = attach_crc(code, msg)
    x = encode(code, u)
    _emit(args, "u=" + "".join(map(str, u)) + "\nx=" + "".join(map(str, x)) + "\n")


def cmd_bler(args):
    code = _code(args)
    cfg = harness.ExperimentConfig(
        code=code,
        snr_grid=_floats(str(_cfg(args, "bler", "snr", "1.0,1.5,2.0"))),
        decoder=str(_cfg(args, "bler", "decoder", "scl:8")),
        min_frames=int(_cfg(args, "bler", "min_frames", 10_000)),
        min_errors=int(_cfg(args, "bler", "min_errors", 100)),
        max_frames=int(_cfg(args, "bler", "max_frames", 10**7)),
        seed=args.seed, workers=args.workers, quant=_quant(args),
        time_limit=float(v) if (v := _cfg(args, "bler", "time_limit")) else None,
    )
    _emit(args, harness.rows_to_csv(harness.run_bler(cfg)))


def cmd_markov(args):
    rows = markov.model_rows(_fracs(str(_cfg(args, "tascl", "beta", "3"))),
                             _ints(str(_cfg(args, "tascl", "zeta", "1"))),
                             _floats(str(_cfg(args, "tascl", "eps_s", "0.1"))),
                             float(_cfg(args, "tascl", "eps_l", 0.0)))
    _emit(args, markov.rows_to_csv(rows))


def cmd_latency(args):
    if args.preset:
        pre = latency.preset(args.preset)
        groups, N = pre["group_counts"], pre["N"]
        dl = pre["dl"]
        comps = (dl["C_LM"], dl["C_SCD"], dl["C_fine"], dl["C_zero"])
    else:
        groups, N = _ints(args.groups), args.N
        comps = tuple(_ints(args.dl)) if args.dl else None
    ds = latency.ds_latency(groups, N=N, parallelism=args.P, list_size=args.list_small)
    out = {"C_MBD": ds.C_MBD, "C_SCD": ds.C_SCD, "C_rw": ds.C_rw, "C_s": ds.C_s}
    if comps:
        C_l = latency.dl_latency(*comps)
        bn, bd = latency.speed_gain(C_l, ds.C_s, args.max_den)
        out.update(C_l=C_l, beta=f"{bn}/{bd}", beta_float=bn / bd)
    _emit(args, json.dumps(out, indent=2) + "\n")


def cmd_memory(args):
    m = latency.memory_estimate(args.N, args.Q, args.list_small, args.list_large, args.P,
                                Fraction(args.beta), args.zeta)
    out = {"dl_bits": str(m["dl_bits"]), "other_bits": str(m["other_bits"]),
           "overhead_ratio": float(m["overhead_ratio"]),
           "output_buffer_frames": latency.output_buffer_frames(Fraction(args.beta), args.zeta)}
    _emit(args, json.dumps(out, indent=2) + "\n")


def cmd_sched(args):
    es = float(_cfg(args, "tascl", "eps_s", 0.1))
    el = float(_cfg(args, "tascl", "eps_l", 0.0))
    p = _params(args, es, el)
    C_s, C_rw = int(_cfg(args, "tascl", "C_s", 1)), int(_cfg(args, "tascl", "C_rw", 0))
    if args.full:
        code = _code(args)
        cfg = SchedulerConfig(p, C_s, C_rw, "full", code,
                              int(_cfg(args, "tascl", "list_small", 2)),
                              int(_cfg(args, "tascl", "list_large", 32)),
                              _quant(args, "s_"), _quant(args, "l_"))
        res = simulate_full(cfg, float(args.snr), args.seed, args.min_frames, args.min_errors,
                            trace=bool(args.trace))
        ov = markov.overflow_probability(markov.TasclParams(p.beta_n, p.beta_d, p.zeta,
                                                            res.eps_s_fail, res.eps_l or 0.0))
        st = res.stats
        out = {"snr_db": res.ebn0_db, "frames": st.frames, "errors": st.frame_errors,
               "eps_ta": res.eps_ta, "eps_s_fail": res.eps_s_fail, "eps_s_bler": res.eps_s_bler,
               "eps_l": res.eps_l, "overflows": st.overflows, "pr_overflow_model": ov,
               "bler_upper": (res.eps_l or 0.0) + ov,
               "max_output_buffer": st.max_output_buffer_occupancy}
        if args.trace:
            with open(args.trace, "w") as fh:
                fh.write(res.trace)
    else:
        cfg = SchedulerConfig(p, C_s, C_rw)
        if args.trace:
            rng = np.random.default_rng(args.seed)
            sch = Scheduler(cfg, trace=True)
            for _ in range(args.slots):
                sch.step(bool(rng.random() >= p.eps_s))
            with open(args.trace, "w") as fh:
                fh.write(sch.trace_csv())
        st = simulate_bernoulli(cfg, args.slots, args.seed)
        out = {"slots": st.frames, "ds_failures": st.ds_failures, "overflows": st.overflows,
               "overflow_rate": st.overflow_rate, "bler": st.bler,
               "occupancy": st.occupancy_freq.tolist()}
    _emit(args, json.dumps(out, indent=2) + "\n")


def cmd_design(args):
    if args.preset:
        pre = latency.preset(args.preset)
        C_s = latency.ds_latency(pre["group_counts"], N=pre["N"],
                                 list_size=args.list_small).C_s
        C_l = pre["dl"]["C_l"]
    else:
        C_s, C_l = args.C_s, args.C_l
    es = harness.read_curve(args.es_curve, "crc_failures")
    el = harness.read_curve(args.el_curve, "bler")
    target = harness.DesignTarget(args.delta_max, args.target_bler, args.zeta_max)
    res = harness.design_search(C_s, C_l, es, el, target, args.max_den)
    _emit(args, json.dumps(res, indent=2, default=float) + "\n")


def cmd_compare(args):
    rows = []
    for es in _floats(str(_cfg(args, "tascl", "eps_s", "0.1,0.3,0.5"))):
        rows.append(harness.compare_model_vs_sim(_params(args, es), args.slots, args.seed))
    fields = ("beta", "zeta", "eps_s", "slots", "linf", "pr_hazard", "pr_overflow",
              "overflow_rate", "z")
    _emit(args, harness.rows_to_csv(rows, fields))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tascl", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="INI file with [code] [bler] [tascl] [quant] sections")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", help="write output here instead of stdout")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("construct", help="build a code and print it as JSON")
    _code_args(p)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("encode", help="attach CRC and encode one message")
    _code_args(p)
    p.add_argument("--message", help="K-r bits, e.g. 10110...; random if omitted")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("bler", help="Monte Carlo BLER curve as CSV")
    _code_args(p)
    p.add_argument("--snr", help="comma-separated Eb/N0 grid in dB")
    p.add_argument("--decoder", help="sc | scl:L | ascl:Lmax:original|simplified")
    p.add_argument("--min-frames", dest="min_frames", type=int)
    p.add_argument("--min-errors", dest="min_errors", type=int)
    p.add_argument("--max-frames", dest="max_frames", type=int)
    p.add_argument("--time-limit", dest="time_limit", type=float)
    p.add_argument("--quant", action="store_true", help="fixed-point LLRs and path metrics")
    p.set_defaults(func=cmd_bler)

    p = sub.add_parser("markov", help="overflow model rows as CSV")
    p.add_argument("--beta", help="comma-separated speed gains, e.g. 3,5/2,13/4")
    p.add_argument("--zeta", help="comma-separated buffer sizes")
    p.add_argument("--eps-s", dest="eps_s", help="comma-separated D_s failure rates")
    p.add_argument("--eps-l", dest="eps_l", type=float)
    p.set_defaults(func=cmd_markov)

    p = sub.add_parser("latency", help="decoder cycle counts and speed gain")
    p.add_argument("--preset", choices=["p1", "p2", "p3"])
    p.add_argument("--groups", help="four sub-code group counts")
    p.add_argument("--N", type=int)
    p.add_argument("--dl", help="C_LM,C_SCD,C_fine,C_zero")
    p.add_argument("--P", type=int, default=64)
    p.add_argument("--list-small", dest="list_small", type=int, default=2)
    p.add_argument("--max-den", dest="max_den", type=int)
    p.set_defaults(func=cmd_latency)

    p = sub.add_parser("memory", help="memory estimate in bits")
    p.add_argument("--N", type=int, default=1024)
    p.add_argument("--Q", type=int, default=6)
    p.add_argument("--list-small", dest="list_small", type=int, default=2)
    p.add_argument("--list-large", dest="list_large", type=int, default=32)
    p.add_argument("--P", type=int, default=64)
    p.add_argument("--beta", default="3")
    p.add_argument("--zeta", type=int, default=3)
    p.set_defaults(func=cmd_memory)

    p = sub.add_parser("sched", help="run the slot scheduler")
    _code_args(p)
    p.add_argument("--beta")
    p.add_argument("--zeta", type=int)
    p.add_argument("--eps-s", dest="eps_s", type=float)
    p.add_argument("--eps-l", dest="eps_l", type=float)
    p.add_argument("--C-s", dest="C_s", type=int)
    p.add_argument("--C-rw", dest="C_rw", type=int)
    p.add_argument("--list-small", dest="list_small", type=int)
    p.add_argument("--list-large", dest="list_large", type=int)
    p.add_argument("--slots", type=int, default=10**6)
    p.add_argument("--full", action="store_true", help="decode real frames")
    p.add_argument("--snr", type=float, default=2.0)
    p.add_argument("--min-frames", dest="min_frames", type=int, default=10_000)
    p.add_argument("--min-errors", dest="min_errors", type=int, default=100)
    p.add_argument("--quant", action="store_true")
    p.add_argument("--trace", help="write a per-slot CSV trace here")
    p.set_defaults(func=cmd_sched)

    p = sub.add_parser("design", help="choose zeta and idle padding for a loss target")
    p.add_argument("--preset", choices=["p1", "p2", "p3"])
    p.add_argument("--C-s", dest="C_s", type=int)
    p.add_argument("--C-l", dest="C_l", type=int)
    p.add_argument("--list-small", dest="list_small", type=int, default=2)
    p.add_argument("--es-curve", required=True, help="BLER CSV of the small decoder")
    p.add_argument("--el-curve", required=True, help="BLER CSV of the large decoder")
    p.add_argument("--delta-max", dest="delta_max", type=float, default=0.30)
    p.add_argument("--target-bler", dest="target_bler", type=float, default=1e-2)
    p.add_argument("--zeta-max", dest="zeta_max", type=int, default=8)
    p.add_argument("--max-den", dest="max_den", type=int)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("compare", help="model vs. Bernoulli slot simulation")
    p.add_argument("--beta")
    p.add_argument("--zeta", type=int)
    p.add_argument("--eps-s", dest="eps_s")
    p.add_argument("--slots", type=int, default=10**7)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        args._config = _load_config(args.config)
        args.func(args)
    except harness.DesignInfeasible as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return 2
    except (ValueError, CodeError, FileNotFoundError, latency.LatencyError,
            markov.ModelError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
