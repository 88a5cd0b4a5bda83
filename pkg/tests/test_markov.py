import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tascl.markov import (
    HAZARD,
    IDLE,
    SAFE,
    ModelError,
    TasclParams,
    bler_bound,
    build_model,
    check_irreducible_aperiodic,
    model_rows,
    overflow_probability,
    reduce_states,
    rows_to_csv,
    stationary,
    stationary_exact,
)


def reference_3_1(e):
    """Hand-written transition matrix of D_TA(3,1), zeta=1."""
    f = 1 - e
    return np.array([
        [f, 0, 0, e, 0, 0, 0],
        [f, 0, 0, e, 0, 0, 0],
        [0, f, 0, 0, e, 0, 0],
        [0, 0, f, 0, 0, e, 0],
        [0, 0, 0, f, 0, 0, e],
        [0, 0, 0, 0, 1, 0, 0],
        [0, 0, 0, 0, 0, 1, 0],
    ])


def walk_chain(params, steps, seed):
    """Occupancy of a direct random walk driven by the class rules, no matrix involved."""
    bn, bd, z, es = params.beta_n, params.beta_d, params.zeta, params.eps_s
    S = bn * z + bn + 1
    fails = np.random.default_rng(seed).random(steps) < es
    counts = np.zeros(S, np.int64)
    overflows = 0
    k = 0
    for fail in fails.tolist():
        X = Fraction(k, bd)
        if X <= 1:
            k = bn if fail else 0
        elif X <= Fraction(bn, bd) * z + 1:
            k = k - bd + (bn if fail else 0)
        else:
            overflows += fail
            k -= bd
        counts[k] += 1
    return counts / steps, overflows / steps


coprime_grid = [(bn, bd, z) for bn in range(2, 13) for bd in range(1, 6) for z in range(1, 7)
                if bn > bd and math.gcd(bn, bd) == 1]


# -- construction -------------------------------------------------------------

@pytest.mark.parametrize("e", [0.1, 0.5, 0.9])
def test_matrix_3_1_matches_reference(e):
    P = build_model(TasclParams(3, 1, 1, e)).P
    assert np.array_equal(P, reference_3_1(e))


def test_five_halves_counts():
    m = build_model(TasclParams(5, 2, 1, 0.2))
    assert m.S == 11
    assert m.class_counts() == {"idle": 3, "safe": 5, "hazard": 3}
    assert m.states[1] == Fraction(1, 2)


@pytest.mark.parametrize("bn,bd,z", coprime_grid)
def test_class_counts_and_rows(bn, bd, z):
    m = build_model(TasclParams(bn, bd, z, 0.3))
    assert m.S == bn * z + bn + 1
    assert m.class_counts() == {"idle": bd + 1, "safe": bn * z, "hazard": bn - bd}
    np.testing.assert_allclose(m.P.sum(axis=1), 1.0, atol=1e-12)
    beta = Fraction(bn, bd)
    for k, X in enumerate(m.states):
        expected = IDLE if X <= 1 else (HAZARD if X > beta * z + 1 else SAFE)
        assert m.classes[k] == expected


def test_rejects_unreduced_and_small_gain():
    with pytest.raises(ModelError):
        build_model(TasclParams(6, 2, 1, 0.1))
    with pytest.raises(ModelError):
        build_model(TasclParams(2, 3, 1, 0.1))
    with pytest.raises(ModelError):
        TasclParams(3, 1, 0)
    with pytest.raises(ModelError):
        TasclParams(3, 1, 1, eps_s=1.5)


def test_reduce_states():
    assert reduce_states(6, 2, 3) == TasclParams(3, 1, 3)
    assert reduce_states(5, 2, 1) == TasclParams(5, 2, 1)
    assert TasclParams.from_beta(Fraction(647, 203), 2).beta_n == 647


def test_zero_failure_rate_absorbs_at_empty():
    m = build_model(TasclParams(3, 1, 2, 0.0))
    r = stationary(m)
    assert r.pi[0] == pytest.approx(1.0) and r.pr_overflow == 0.0
    assert not check_irreducible_aperiodic(m)["irreducible"]


# -- stationary distribution --------------------------------------------------

@pytest.mark.parametrize("bn,bd,z,e", [(3, 1, 1, 0.3), (5, 2, 2, 0.2), (13, 4, 3, 0.5), (7, 3, 2, 0.9)])
def test_stationary_matches_exact(bn, bd, z, e):
    m = build_model(TasclParams(bn, bd, z, e))
    r = stationary(m)
    exact = np.array([float(v) for v in stationary_exact(m, Fraction(e).limit_denominator(1000))])
    np.testing.assert_allclose(r.pi, exact, atol=1e-10)
    assert np.max(np.abs(r.pi @ m.P - r.pi)) < 1e-10
    assert r.pr_overflow == pytest.approx(e * r.pi[m.classes == HAZARD].sum(), rel=1e-12)


def test_direct_and_squaring_agree():
    m = build_model(TasclParams(13, 4, 3, 0.4))
    a = stationary(m, method="squaring")
    b = stationary(m, method="direct")
    np.testing.assert_allclose(a.pi, b.pi, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(coprime_grid), st.floats(0.01, 0.99), st.integers(0, 2**32 - 1))
def test_stationary_independent_of_start(grid, e, seed):
    bn, bd, z = grid
    m = build_model(TasclParams(bn, bd, z, e))
    lam = np.random.default_rng(seed).dirichlet(np.ones(m.S))
    np.testing.assert_allclose(stationary(m).pi, stationary(m, start=lam).pi, atol=1e-9)


def test_nearly_periodic_chain_falls_back_to_direct():
    # every move except the rarely visited self-loop at 0 shifts k by -1 mod 8
    m = build_model(TasclParams(8, 1, 5, 0.5))
    lam = np.random.default_rng(0).dirichlet(np.ones(m.S))
    r = stationary(m, start=lam)
    assert r.method == "direct" and np.max(np.abs(r.pi @ m.P - r.pi)) < 1e-12
    with pytest.raises(ModelError):
        stationary(m, start=lam, method="squaring")


def test_start_vector_validated():
    m = build_model(TasclParams(3, 1, 1, 0.3))
    with pytest.raises(ModelError):
        stationary(m, start=np.ones(m.S))


def test_stationary_against_chain_walk():
    p = TasclParams(3, 1, 1, 0.3)
    r = stationary(build_model(p))
    occ, ov = walk_chain(p, 2 * 10**6, seed=17)
    assert np.max(np.abs(occ - r.pi)) < 2e-3
    sd = math.sqrt(r.pr_overflow * (1 - r.pr_overflow) / 2e6)
    assert abs(ov - r.pr_overflow) < 4 * sd


def test_pi_smooth_in_failure_rate():
    # exact pi at rational points; second differences along the grid stay small
    m = build_model(TasclParams(3, 1, 1, 0.5))
    grid = [Fraction(k, 20) for k in range(2, 19)]
    pis = np.array([[float(v) for v in stationary_exact(m, e)] for e in grid])
    for e, row in zip(grid, pis):
        r = stationary(build_model(TasclParams(3, 1, 1, float(e))))
        np.testing.assert_allclose(r.pi, row, atol=1e-10)
    assert np.max(np.abs(np.diff(pis, 2, axis=0))) < 0.05


def test_unreduced_model_restricted_to_reachable_states():
    raw = stationary_exact(build_model(TasclParams(6, 2, 2, 0.3), allow_raw=True), Fraction(3, 10))
    red = stationary_exact(build_model(TasclParams(3, 1, 2, 0.3)), Fraction(3, 10))
    assert raw[0::2] == red
    assert all(v == 0 for v in raw[1::2])


# -- overflow and bound ---------------------------------------------------------

def test_overflow_monotone_in_buffer_and_gain():
    for e in (0.05, 0.2, 0.5):
        by_zeta = [overflow_probability(TasclParams(5, 2, z, e)) for z in range(1, 7)]
        assert all(b <= a + 1e-15 for a, b in zip(by_zeta, by_zeta[1:]))
        betas = [Fraction(2), Fraction(5, 2), Fraction(3), Fraction(7, 2), Fraction(4)]
        by_beta = [overflow_probability(TasclParams.from_beta(b, 2, e)) for b in betas]
        assert all(b >= a - 1e-15 for a, b in zip(by_beta, by_beta[1:]))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(coprime_grid), st.floats(0.0, 1.0))
def test_overflow_at_most_failure_rate(grid, e):
    bn, bd, z = grid
    ov = overflow_probability(TasclParams(bn, bd, z, e))
    assert 0.0 <= ov <= e + 1e-15


def test_overflow_vanishes_with_failure_rate():
    vals = [overflow_probability(TasclParams(3, 1, 2, e)) for e in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(b < a for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-10
    assert overflow_probability(TasclParams(1, 2, 1, 0.5)) == 0.0


def test_bler_bound_examples():
    assert bler_bound(1e-2, 0.0) == {"lower": 1e-2, "upper": 1e-2, "delta": 0.0}
    b = bler_bound(1e-2, 3e-3)
    assert b["upper"] == pytest.approx(1.3e-2) and b["delta"] == pytest.approx(0.3)


# -- structure ------------------------------------------------------------------

@pytest.mark.parametrize("bn,bd,z", coprime_grid[::7] + [(3, 1, z) for z in range(1, 6)])
def test_irreducible_aperiodic(bn, bd, z):
    m = build_model(TasclParams(bn, bd, z, 0.37))
    assert check_irreducible_aperiodic(m) == {"irreducible": True, "aperiodic": True,
                                             "period": 1, "components": 1}


def test_raw_unreduced_model_is_reducible():
    m = build_model(TasclParams(6, 2, 1, 0.5), allow_raw=True)
    assert not check_irreducible_aperiodic(m)["irreducible"]


def test_model_rows_csv():
    rows = model_rows([(3, 1), Fraction(1, 2)], [1, 2], [0.1], eps_l=1e-2)
    assert len(rows) == 4
    assert rows[-1]["pr_overflow"] == 0.0
    text = rows_to_csv(rows)
    assert text.splitlines()[0] == "beta,zeta,eps_s,eps_l,pr_hazard,pr_overflow,bler_upper,delta"
    assert text == rows_to_csv(model_rows([(3, 1), Fraction(1, 2)], [1, 2], [0.1], eps_l=1e-2))
