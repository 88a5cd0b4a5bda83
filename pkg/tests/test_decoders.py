import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tascl.channel import ChannelConfig, FixedPoint, quantize, transmit
from tascl.codec import attach_crc, construct_code, encode, polar_transform
from tascl.decoders import (
    ascl_decode,
    f_node,
    g_node,
    hard_decision,
    partial_sums,
    sc_decode,
    scl_decode,
    theta,
)


# -- independent reference: recursive LLRs recomputed from scratch per bit ------

def ref_llr(ch, u_prefix, i):
    N = len(ch)
    if N == 1:
        return ch[0]
    h = N // 2
    a, b = ch[:h], ch[h:]
    if i < h:
        # a zero LLR counts as negative, matching the hard decision
        fa = np.where((a > 0) != (b > 0), -1.0, 1.0) * np.minimum(np.abs(a), np.abs(b))
        return ref_llr(fa, u_prefix, i)
    left = polar_transform(np.array(u_prefix[:h], dtype=np.uint8))
    return ref_llr(b + np.where(left == 1, -a, a), u_prefix[h:], i - h)


def ref_scl(ch, frozen, L):
    paths = [([], 0.0)]
    for i in range(len(ch)):
        nxt = []
        for u, pm in paths:
            lam = ref_llr(ch, u, i)
            dec = 0 if lam > 0 else 1
            if frozen[i]:
                nxt.append((u + [0], pm + (abs(lam) if dec else 0.0)))
            else:
                nxt.append((u + [dec], pm))
                nxt.append((u + [1 - dec], pm + abs(lam)))
        order = sorted(range(len(nxt)), key=lambda j: nxt[j][1])  # stable
        paths = [nxt[j] for j in order[:L]]
    return paths


def noisy_frame(code, snr, seed, idx):
    rng = np.random.default_rng([seed, idx])
    u = attach_crc(code, rng.integers(0, 2, code.K - code.r, dtype=np.uint8))
    return u, transmit(encode(code, u), ChannelConfig(snr, code.rate, seed, idx))


# -- node functions -----------------------------------------------------------

def test_f_node_examples():
    assert f_node(2, -3) == -2
    assert f_node(7, 0) == 0 and f_node(-7, 0) == 0
    assert f_node(5, 1) == 1


def test_g_node_examples():
    assert g_node(2, 3, 0) == 5
    assert g_node(2, 3, 1) == 1
    assert g_node(4.5, 0, 1) == -4.5


def test_hard_decision_examples():
    code = construct_code(3, 4, 0)
    fz = int(np.flatnonzero(code.frozen_mask)[0])
    inf = int(code.info_index[0])
    assert hard_decision(-7.0, fz, code) == 0
    assert hard_decision(-0.1, inf, code) == 1
    assert hard_decision(0.1, inf, code) == 0
    assert theta(0.0) == 1


def test_partial_sums():
    assert not partial_sums([0, 0, 0, 0], 3, 2).any()
    assert list(partial_sums([1, 0], 1, 1)) == [1, 0]
    # [1,1,0,1] times F^(x)2 = rows 0,1,3 of [[1000],[1100],[1010],[1111]] summed
    assert list(partial_sums([1, 1, 0, 1], 3, 2)) == [1, 0, 1, 1]


# -- SC -----------------------------------------------------------------------

def test_sc_noiseless_all_zero():
    code = construct_code(7, 64, 8)
    assert not sc_decode(np.full(128, 4.0), code).any()


def test_sc_hand_example():
    # left half: f(1,3)=1, f(-2,-4)=2 -> u0=f(1,2)>0 -> 0, u1=g(1,2,0)=3 -> 0
    # right half: [3+1, -4-2] = [4,-6] -> u2=f=-4 -> 1, u3=-4-6 -> 1
    code = construct_code(2, 4, 0)
    assert list(sc_decode(np.array([1.0, -2.0, 3.0, -4.0]), code)) == [0, 0, 1, 1]


def test_sc_matches_scl1():
    code = construct_code(3, 4, 0)
    rng = np.random.default_rng(0)
    for _ in range(10**4):
        llr = rng.normal(1.0, 1.5, 8)
        assert np.array_equal(sc_decode(llr, code), scl_decode(llr, code, 1).output)


def test_sc_frozen_bits_zero():
    code = construct_code(6, 20, 4)
    rng = np.random.default_rng(2)
    for _ in range(50):
        assert not sc_decode(rng.normal(0, 3, 64), code)[code.frozen_mask].any()


# -- SCL ------------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(2, 5), st.integers(1, 9), st.integers(0, 2**31 - 1))
def test_scl_matches_reference(n, L, seed):
    rng = np.random.default_rng(seed)
    N = 1 << n
    K = int(rng.integers(1, N + 1))
    code = construct_code(n, K, 0, float(rng.uniform(0, 3)))
    ch = np.round(rng.normal(0.5, 2.0, N), 2)
    res = scl_decode(ch, code, L)
    ref = ref_scl(ch, code.frozen_mask, L)
    assert len(ref) == len(res.metrics)
    for (u, pm), got_u, got_pm in zip(ref, res.u_hat, res.metrics):
        assert list(got_u) == u
        assert got_pm == pytest.approx(pm, abs=1e-9)


def test_scl_candidates_sorted_and_nonnegative():
    code = construct_code(7, 64, 8)
    rng = np.random.default_rng(4)
    for _ in range(20):
        res = scl_decode(rng.normal(1, 2, 128), code, 8)
        assert np.all(np.diff(res.metrics) >= 0) and np.all(res.metrics >= 0)
        assert len(res.candidates) == 8


def test_scl_selection_rule():
    code = construct_code(6, 32, 8)
    for idx in range(200):
        u, llr = noisy_frame(code, 0.5, 1, idx)
        res = scl_decode(llr, code, 4)
        hits = np.flatnonzero(res.crc_pass)
        assert res.selected == (hits[0] if hits.size else 0)


def ml_decode(code, llr):
    best, arg = -np.inf, None
    for bits in itertools.product([0, 1], repeat=code.K):
        u = np.zeros(code.N, np.uint8)
        u[code.info_index] = bits
        x = encode(code, u)
        corr = float(np.sum(llr * (1 - 2.0 * x)))
        if corr > best:
            best, arg = corr, u
    return arg


def test_scl_equals_ml_without_pruning_small():
    code = construct_code(3, 4, 0)
    for idx in range(500):
        _, llr = noisy_frame(code, 1.0, 2, idx)
        assert np.array_equal(scl_decode(llr, code, 16).output, ml_decode(code, llr))


def test_no_pruning_keeps_transmitted_path():
    code = construct_code(4, 6, 0)
    for idx in range(300):
        u, llr = noisy_frame(code, 0.0, 3, idx)
        res = scl_decode(llr, code, 2**6)
        assert any(np.array_equal(u, c) for c in res.u_hat)


def test_list_gain_min_metric_rarely_worse():
    # larger lists can lose the best path only through earlier pruning; count it
    code = construct_code(6, 32, 0)
    worse = 0
    for idx in range(300):
        _, llr = noisy_frame(code, 1.0, 5, idx)
        m = [scl_decode(llr, code, L).metrics[0] for L in (1, 2, 4, 8, 16)]
        worse += any(b > a + 1e-12 for a, b in zip(m, m[1:]))
    assert worse <= 3


def test_quantized_metrics_on_grid_and_bounded():
    code = construct_code(8, 128, 8)
    fp = FixedPoint(6, 8, 1)
    for idx in range(30):
        _, llr = noisy_frame(code, 1.0, 6, idx)
        res = scl_decode(llr, code, 8, fp)
        assert np.all(res.metrics >= 0) and np.all(res.metrics <= fp.pm.max_unsigned)
        assert np.all(res.metrics / fp.pm.step == np.round(res.metrics / fp.pm.step))
        assert res.metrics[0] == 0.0  # re-based to the best survivor


def test_quantized_input_is_quantized_first():
    code = construct_code(6, 32, 0)
    fp = FixedPoint(6, 8, 1)
    rng = np.random.default_rng(8)
    ch = rng.normal(1, 4, 64)
    a = scl_decode(ch, code, 1, fp).output
    b = scl_decode(quantize(ch, fp.llr), code, 1, fp).output
    assert np.array_equal(a, b)


def test_pm_saturation_counted():
    code = construct_code(6, 32, 0)
    fp = FixedPoint(6, 3, 1)  # tiny PM range forces saturation
    ch = np.random.default_rng(9).normal(0, 8, 64)
    assert scl_decode(ch, code, 4, fp).pm_saturations > 0


# -- A-SCL ----------------------------------------------------------------------

def test_ascl_passes_immediately_when_clean():
    code = construct_code(7, 64, 8)
    u, _ = noisy_frame(code, 0, 0, 0)
    llr = np.where(encode(code, u) == 0, 8.0, -8.0)
    for variant in ("original", "simplified"):
        res, tried = ascl_decode(llr, code, 32, variant)
        assert tried == [1] and np.array_equal(res.output, u)


def test_ascl_schedules():
    code = construct_code(6, 32, 8)
    for idx in range(200):
        _, llr = noisy_frame(code, -1.0, 4, idx)
        res, tried = ascl_decode(llr, code, 16, "original")
        assert tried == [1, 2, 4, 8, 16][: len(tried)]
        direct = scl_decode(llr, code, tried[-1])
        assert np.array_equal(res.output, direct.output)
        res, tried = ascl_decode(llr, code, 16, "simplified")
        assert tried in ([1], [1, 16])
        assert np.array_equal(res.output, scl_decode(llr, code, tried[-1]).output)


def test_ascl_rejects_bad_args():
    code = construct_code(3, 4, 0)
    with pytest.raises(ValueError):
        ascl_decode(np.zeros(8), code, 12, "original")
    with pytest.raises(ValueError):
        ascl_decode(np.zeros(8), code, 8, "other")


@pytest.mark.slow
def test_scl32_beats_sc_on_1024():
    from tascl.harness import ExperimentConfig, run_bler
    code = construct_code(10, 512, 24, 2.0)
    for snr in (1.5, 2.0, 2.5):
        rows = {}
        for dec in ("scl:1", "scl:32"):
            rows[dec] = run_bler(ExperimentConfig(code, [snr], dec, min_frames=600, min_errors=0,
                                                  max_frames=600, seed=21, batch=200))[0]
        assert rows["scl:32"]["ci_high"] < rows["scl:1"]["ci_low"]


@pytest.mark.slow
def test_fixed_point_loss_small():
    # 6-bit LLRs, 8-bit metrics, 1 fraction bit: within 0.05 dB of float at BLER 1e-2
    from tascl.harness import ExperimentConfig, run_bler, snr_at_bler
    code = construct_code(8, 128, 8, 2.0)
    grid = [2.0, 2.25, 2.5]
    at = {}
    for name, q in (("float", None), ("fixed", FixedPoint(6, 8, 1))):
        rows = run_bler(ExperimentConfig(code, grid, "scl:8", min_frames=20_000, min_errors=0,
                                         max_frames=20_000, batch=5_000, seed=77, quant=q))
        at[name] = snr_at_bler([(r["snr_db"], r["bler"]) for r in rows], 1e-2)
    assert at["fixed"] - at["float"] < 0.05
