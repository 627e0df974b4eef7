import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specshift.cdb_space import (
    MixedSystemSpec,
    ModelFunction,
    ModelSpace,
    SpaceElement,
    basis_element,
    biorthogonal_eval,
    biorthogonal_log_coeffs,
    defect_stability,
    element_eval,
    gram_matrix,
    inner_product,
    kernel_coeffs,
    kernel_eval,
    mixed_defect,
    norm,
    sample_inner_product,
    sample_norm,
    summability_gate,
)
from specshift.determinant import GDescriptor
from specshift.spectral_core import generate


@pytest.fixture(scope="module")
def lac_space():
    t = 2.0 ** np.arange(1, 41)
    return ModelSpace.from_mu(t, 1 / t)


@pytest.fixture(scope="module")
def ari_space():
    return ModelSpace.from_data(generate("arithmetic", {"count": 80, "a_exp": -1.0, "b_exp": -1.5}))


def test_space_validation():
    with pytest.raises(ValueError):
        ModelSpace.from_mu([1, 1], [1, 1])
    with pytest.raises(ValueError):
        ModelSpace.from_mu([0, 1], [1, 1])
    with pytest.raises(ValueError):
        ModelSpace.from_mu([1, 2], [1, -1])


def test_space_sorted_and_truncated(lac_space):
    sp = ModelSpace.from_mu([4, 2, 8], [1, 2, 3])
    np.testing.assert_array_equal(sp.t, [2, 4, 8])
    np.testing.assert_allclose(sp.mu, [2, 1, 3])
    assert len(lac_space.truncate(10)) == 10
    assert lac_space.radius(10) == pytest.approx(0.5 * (2**10 + 2**11))


def test_Aprime_cache(lac_space, ari_space):
    assert lac_space.audit_Aprime() < 1e-6
    assert ari_space.audit_Aprime() < 1e-6


def test_basis_value_at_node(lac_space):
    f = basis_element(lac_space, 3)
    v = element_eval(lac_space, f, lac_space.t[3])
    assert v == pytest.approx(lac_space.Aprime[3] * np.sqrt(lac_space.mu[3]), rel=1e-12)
    assert abs(element_eval(lac_space, f, lac_space.t[5])) == 0


def test_element_length_checked(lac_space):
    with pytest.raises(ValueError):
        norm(lac_space, SpaceElement([1, 2]))


@pytest.mark.parametrize("which", ["lac_space", "ari_space"])
def test_reproducing_property(which, request):
    sp = request.getfixturevalue(which)
    rng = np.random.default_rng(1)
    for _ in range(10):
        f = SpaceElement((rng.normal(size=len(sp)) + 1j * rng.normal(size=len(sp))) / np.arange(1, len(sp) + 1))
        lam = complex(*rng.uniform(-3, 3, size=2))
        k = kernel_coeffs(sp, lam)
        lhs = inner_product(sp, f, k)
        assert abs(lhs - element_eval(sp, f, lam)) <= 1e-12 * norm(sp, f) * norm(sp, k)


def test_kernel_at_node_and_symmetry(ari_space):
    sp = ari_space
    k = kernel_coeffs(sp, sp.t[2])
    assert np.count_nonzero(k.coeffs) == 1
    lam, z = 0.3 + 0.4j, -1.2 + 0.1j
    assert kernel_eval(sp, lam, z) == pytest.approx(np.conj(kernel_eval(sp, z, lam)), rel=1e-10)
    assert kernel_eval(sp, lam, lam).real == pytest.approx(norm(sp, kernel_coeffs(sp, lam)) ** 2, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_parseval(seed):
    t = 2.0 ** np.arange(1, 31)
    sp = ModelSpace.from_mu(t, t**-2.0)
    rng = np.random.default_rng(seed)
    f = SpaceElement(rng.normal(size=30) + 1j * rng.normal(size=30))
    g = SpaceElement(rng.normal(size=30) + 1j * rng.normal(size=30))
    assert abs(sample_norm(sp, f) ** 2 - norm(sp, f) ** 2) <= 1e-12 * norm(sp, f) ** 2
    assert abs(sample_inner_product(sp, f, g) - inner_product(sp, f, g)) <= 1e-12 * norm(sp, f) * norm(sp, g)


def test_biorthogonal_functions():
    t = 2.0 ** np.arange(1, 31)
    sp = ModelSpace.from_mu(t, t**-2.0)
    G = GDescriptor.quotient(t, t[:1], zero_offsets=np.full(30, 0.5), p_offsets=[0.5])
    Gm = ModelFunction(G)
    zeros = Gm.zeros
    lam = zeros[np.arange(4)]
    vals = biorthogonal_eval(sp, Gm, lam[0], lam)
    np.testing.assert_allclose(vals, [1, 0, 0, 0], atol=1e-14)
    # coefficient form reproduces the same function
    g = SpaceElement(np.exp(biorthogonal_log_coeffs(sp, Gm, lam[1])))
    z = np.array([1.0 + 1.0j, 7.5])
    direct = biorthogonal_eval(sp, Gm, lam[1], z)
    np.testing.assert_allclose(element_eval(sp, g, z), direct, rtol=1e-9)


def test_summability_gate():
    t = 2.0 ** np.arange(1, 61)
    from specshift.spectral_core import TailRule

    sp = ModelSpace(t, -2 * np.log(t), tail=TailRule("geometric", {"q": 2.0, "mu_exp": -2.0}))
    assert summability_gate(sp, [1.0]).converges
    top = summability_gate(sp, [0.0, 1.0])
    assert not top.converges and top.growth_ratio == pytest.approx(2.0)
    assert top.exponent == 0.0


def test_mixed_defect_kernels_on_all_points_complete():
    t = 2.0 ** np.arange(1, 61)
    sp = ModelSpace(t, np.zeros(60))
    spec = MixedSystemSpec(GDescriptor.constant_one(), t[::2], np.ones(30, dtype=int))
    res = mixed_defect(sp, spec, 60)
    assert res.rows == 30 and res.raw_nullity == 30
    with pytest.raises(ValueError):
        MixedSystemSpec(GDescriptor.constant_one(), [1, 2], [1, 3])
    with pytest.raises(ValueError):
        MixedSystemSpec(GDescriptor.constant_one(), [1, 1], [1, 1])


def test_defect_stability_and_gram():
    from specshift.counterexamples import build

    c = build("finite_defect", 1, 2.0, 100)
    dims, stable = defect_stability(c.space, c.spec(2), truncs=(50, 100))
    assert dims == [1, 1] and stable
    G = gram_matrix(c.space, [basis_element(c.space, 0), basis_element(c.space, 1)])
    np.testing.assert_array_equal(G, np.eye(2))
