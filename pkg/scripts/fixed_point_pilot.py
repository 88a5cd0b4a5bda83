"""Fraction-bit sweep and fixed-point loss at BLER 1e-2 on the (256,128,8) code.

Every configuration decodes the same frames, so differences are paired.
"""
import sys

from tascl.channel import FixedPoint
from tascl.codec import construct_code
from tascl.harness import ExperimentConfig, run_bler, snr_at_bler

FRAMES = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
GRID = [2.0, 2.25, 2.5, 2.75, 3.0]
code = construct_code(8, 128, 8, 2.0)
configs = {"float": None}
configs.update({f"q6/8 frac={f}": FixedPoint(6, 8, f) for f in (0, 1, 2)})
crossing = {}
for name, q in configs.items():
    rows = run_bler(ExperimentConfig(code, GRID, "scl:8", min_frames=FRAMES, min_errors=0,
                                     max_frames=FRAMES, batch=FRAMES // 4, seed=77, quant=q))
    curve = [(r["snr_db"], r["bler"]) for r in rows]
    try:
        crossing[name] = snr_at_bler(curve, 1e-2)
    except ValueError:
        crossing[name] = None  # stays above 1e-2 on the grid
    print(name, [f"{b:.4g}" for _, b in curve], flush=True)
for name, x in crossing.items():
    loss = "no crossing on the grid" if x is None else f"{x - crossing['float']:+.3f} dB"
    print(f"{name}: loss {loss}")
