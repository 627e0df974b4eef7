import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specshift.spectral_core import (
    DivergenceError,
    SpectralData,
    TailRule,
    divergence_witness,
    domination_check,
    generate,
    model_measure,
    moment,
    moment_profile,
    restrict,
    sequence_report,
    validate,
)


def test_validate_reports_all_issues():
    d = SpectralData(t=[1, 0, 1], nu=[1, -1, 1], a=[1, 1, 1], b=[1, 1, 1])
    rep = validate(d)
    assert not rep.valid
    text = str(rep)
    assert "zero t at index 2" in text
    assert "duplicate" in text and "index 1 and 3" in text
    assert "nonpositive nu at index 2" in text


def test_validate_length_mismatch():
    rep = validate(SpectralData(t=[1, 2], nu=[1], a=[1, 1], b=[1, 1]))
    assert not rep.valid and "length mismatch" in str(rep)


def test_canonical_order_by_modulus_then_argument():
    d = SpectralData(t=[3, -1, 1, 2j], nu=[1] * 4, a=[1, 2, 3, 4], b=[1] * 4)
    rep = validate(d)
    assert rep.permutation == (3, 2, 4, 1)
    c = d.canonical()
    np.testing.assert_array_equal(c.t, [1, -1, 2j, 3])
    np.testing.assert_array_equal(c.a, [3, 2, 4, 1])


def test_moment_two_point(mom1_data):
    assert moment(mom1_data, 1).value == pytest.approx(-1.0, abs=1e-15)
    assert moment(mom1_data, 2).value == pytest.approx(-10 / 3, abs=1e-14)
    assert moment(mom1_data, 1).tail_bound == 0.0
    with pytest.raises(ValueError):
        moment(mom1_data, 0)


def test_moment_profile_pattern(mom1_data):
    table = moment_profile(mom1_data, 4)
    assert table.case == "mom1"
    N, margin = table.pattern()
    assert N == 1 and margin > 0


def test_moment_profile_mom0(two_point):
    table = moment_profile(two_point, 3)
    assert table.case == "mom0"
    assert table.pattern() is None
    assert table.mom0_margin() == pytest.approx(4.0 - 1e-10)


def test_moment_divergence_flagged():
    d = generate("arithmetic", {"count": 30, "a_exp": 0.0, "b_exp": 0.0})
    with pytest.raises(DivergenceError):
        moment(d, 1)
    table = moment_profile(d, 2)
    assert table.diverges.all() and table.case == "divergent"


def test_geometric_tail_sum_exact():
    rule = TailRule("geometric", {"q": 2.0})
    val, div = rule.modulus_power_sum(-1.0, 8.0, 3)
    # 1/16 + 1/32 + ... = 1/8
    assert not div and val == pytest.approx(0.125, rel=1e-15)
    assert rule.modulus_power_sum(0.0, 8.0, 3) == (math.inf, True)


def test_power_tail_matches_brute_force():
    rule = TailRule("power", {"scale": 1.0, "shift": 0.0, "alpha": 1.0, "n_start": 11})
    val, div = rule.modulus_power_sum(-2.0, 10.0, 10)
    brute = math.fsum(1.0 / n**2 for n in range(11, 2_000_000)) + 1.0 / 1_999_999.5
    assert not div and val == pytest.approx(brute, rel=1e-12)
    assert rule.point_power_sum(2, 10.0, 10) == pytest.approx(val, rel=1e-15)


def test_moment_tail_bound_covers_omitted_terms():
    short = generate("lacunary", {"count": 20, "q": 2, "a_exp": -1.5, "b_exp": -1.5})
    long = generate("lacunary", {"count": 60, "q": 2, "a_exp": -1.5, "b_exp": -1.5})
    m_short = moment(short, 1)
    m_long = moment(long, 1)
    assert abs(m_long.value - m_short.value) <= m_short.tail_bound * (1 + 1e-12)


def test_sequence_report_lacunary_and_arithmetic():
    lac = sequence_report(generate("lacunary", {"count": 40, "q": 2}))
    assert lac.lacunary and lac.convergence_exponent_estimate == 0.0
    assert lac.lacunarity_ratio == pytest.approx(2.0)
    assert lac.separation_exponent == 0
    ari = sequence_report(generate("arithmetic", {"count": 200}))
    assert not ari.lacunary
    assert ari.convergence_exponent_estimate == pytest.approx(1.0, abs=0.1)
    assert ari.schatten_witness is not None and ari.schatten_witness > 1.0
    assert ari.schatten_certified


def test_domination_check_lacunary():
    d = generate("lacunary", {"count": 30, "q": 2, "a_exp": -1.0, "b_exp": -1.0})
    res = domination_check(d, 1)
    assert res.dom and np.isfinite(res.tail_bound)
    assert res.partial_sums[-1] == pytest.approx(sum(4.0 ** -n for n in range(1, 31)), rel=1e-12)
    # b = a: sum |t|^0 diverges for N = 0
    assert not domination_check(d, 0).dom


def test_domination_zero_a_nonzero_b():
    d = SpectralData(t=[1, 2], nu=[1, 1], a=[0, 1], b=[1, 1])
    assert not domination_check(d, 3).dom


def test_restrict_drops_tail_unless_full():
    d = generate("lacunary", {"count": 10, "q": 2})
    sub = restrict(d, [0, 2, 4])
    assert len(sub) == 3 and sub.tail is None
    np.testing.assert_array_equal(sub.t, [2, 8, 32])
    assert restrict(d, np.ones(10, bool)).tail is d.tail
    with pytest.raises(IndexError):
        restrict(d, [10])


def test_model_measure():
    d = SpectralData(t=[1, 2], nu=[0.5, 1], a=[1, 1], b=[2, 1j])
    np.testing.assert_allclose(model_measure(d), [2.0, 4.0])
    with pytest.raises(ValueError):
        model_measure(SpectralData(t=[1, 2], nu=[1, 1], a=[1, 1], b=[0, 1]))


def test_divergence_witness():
    grows, ratio = divergence_witness(np.ones(100))
    assert ratio == pytest.approx(2.0) and not grows
    grows, ratio = divergence_witness(2.0 ** np.arange(40))
    assert grows
    grows, ratio = divergence_witness(1.0 / np.arange(1, 100) ** 2)
    assert not grows and ratio < 1.1


def test_generators():
    c = generate("cos_zeros", {"count": 5})
    assert len(c) == 10
    np.testing.assert_allclose(np.sort(c.t.real), np.concatenate([-np.arange(4.5, 0, -1), np.arange(0.5, 5)]))
    k3 = generate("cos_power_zeros", {"k": 3, "count": 4})
    assert len(k3) == 24
    np.testing.assert_allclose(np.abs(k3.t) ** 3, np.repeat(np.arange(4) + 0.5, 6), rtol=1e-12)
    with pytest.raises(ValueError):
        generate("nope", {})


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=2, max_value=30), st.integers(min_value=0, max_value=2**32 - 1))
def test_canonical_is_permutation_invariant(n, seed):
    rng = np.random.default_rng(seed)
    t = rng.normal(size=n) + 1j * rng.normal(size=n)
    a = rng.normal(size=n)
    d = SpectralData(t=t, nu=np.ones(n), a=a, b=np.ones(n))
    p = rng.permutation(n)
    e = SpectralData(t=t[p], nu=np.ones(n), a=a[p], b=np.ones(n))
    np.testing.assert_array_equal(d.canonical().t, e.canonical().t)
    np.testing.assert_array_equal(d.canonical().a, e.canonical().a)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=1, max_value=4))
def test_moment_conjugate_symmetry(seed, k):
    # swapping a and b conjugates every moment
    rng = np.random.default_rng(seed)
    n = 12
    t = rng.normal(size=n) + 1j * rng.normal(size=n)
    a = rng.normal(size=n) + 1j * rng.normal(size=n)
    b = rng.normal(size=n) + 1j * rng.normal(size=n)
    nu = rng.uniform(0.1, 1, size=n)
    m1 = moment(SpectralData(t=t, nu=nu, a=a, b=b), k).value
    m2 = moment(SpectralData(t=np.conj(t), nu=nu, a=b, b=a), k).value
    assert abs(m1 - np.conj(m2)) <= 1e-12 * (1 + abs(m1))
