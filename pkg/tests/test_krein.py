import numpy as np
import pytest

from specshift.krein import (
    SampleTooCloseError,
    cos_pi_z,
    custom_product,
    default_samples,
    delete_zero,
    family,
    krein_residual,
    krein_rhs,
    removability_verdict,
    side_series,
    times_polynomial,
    volterra_model_check,
)


@pytest.fixture(scope="module")
def cosine():
    return cos_pi_z(10_000)


def test_cos_pi_z_derivatives(cosine):
    h = 1e-6
    for k in (0, 1, 7):
        t = cosine.zeros[k]
        fd = (cosine.F(t + h) - cosine.F(t - h)) / (2 * h)
        assert fd == pytest.approx(cosine.Fprime[k], abs=1e-8)
    assert cosine.n_groups == 10_000


def test_expansion_cos_pi_z(cosine):
    z = default_samples(cosine, 25, seed=0)
    assert np.all(np.abs(z) <= 2.0)
    r = krein_residual(cosine, z)
    assert r.residual <= 1e-10
    assert r.exponent == pytest.approx(3.0, abs=0.05)
    assert r.residual <= r.tail_bound


def test_pairing_matters_only_for_truncation(cosine):
    z = default_samples(cosine, 5, seed=1)
    paired = krein_rhs(cosine, z, trunc=100)
    unpaired = krein_rhs(cosine, z, trunc=100, pairing=False)
    np.testing.assert_allclose(paired, unpaired, atol=1e-12)


def test_sample_too_close(cosine):
    with pytest.raises(SampleTooCloseError):
        krein_residual(cosine, [0.5 + 1e-4])


def test_removable(cosine):
    v = removability_verdict(cosine, default_samples(cosine, 10))
    assert v.removable and v.conclusion == "removable"
    assert not v.side.diverges


def test_deleted_zero_not_removable(cosine):
    d = delete_zero(cosine, 0)
    assert d.F0 == pytest.approx(-2.0)
    v = removability_verdict(d)
    assert v.conclusion == "not_removable_by_this_F"
    assert side_series(d).diverges
    residuals = [volterra_model_check(d, tr).residual for tr in (2500, 5000, 10_000)]
    assert min(residuals) >= 1e-2
    assert max(residuals) - min(residuals) <= 1e-6


def test_volterra_reproduces_one(cosine):
    chk = volterra_model_check(cosine, 5000)
    assert chk.coefficients_summable
    assert chk.residual <= 1e-8


@pytest.mark.parametrize("name", ["cos_pi_sqrt_z", "cos_pi_z_pow_k"])
def test_other_families(name):
    c = family(name, trunc=2000)
    assert removability_verdict(c).removable


def test_custom_and_polynomial_factor():
    c = custom_product([1.0, -2.0, 3.0j])
    z = np.array([0.4 + 0.1j, -0.3j])
    assert krein_residual(c, z).residual <= 1e-14
    p = times_polynomial(cos_pi_z(500), [5j])
    assert krein_residual(p, default_samples(p, 5)).residual <= 1e-6
    with pytest.raises(ValueError):
        times_polynomial(cos_pi_z(10), [0.5])
    with pytest.raises(ValueError):
        family("nope")
