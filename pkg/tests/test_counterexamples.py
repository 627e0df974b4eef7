import numpy as np
import pytest

from specshift.counterexamples import (
    build,
    build_finite_defect,
    build_infinite_defect,
    build_synthesis_failure,
    certify,
    defect_table,
    perturbation_vectors,
    square_indices,
)
from specshift.spectral_core import SpectralData


def test_square_indices():
    np.testing.assert_array_equal(square_indices(20), [0, 3, 8, 15])


def test_build_arguments():
    with pytest.raises(ValueError):
        build_finite_defect(-1)
    with pytest.raises(ValueError):
        build_finite_defect(1, count=10)
    with pytest.raises(ValueError):
        build_finite_defect(1, q=1.0)
    with pytest.raises(ValueError):
        build_synthesis_failure(0)
    with pytest.raises(ValueError):
        build("nope")
    assert build("finite-defect", 2).recipe() == {"kind": "finite_defect", "q": 2.0, "count": 200, "N": 2}


def test_shifted_points_distinct_at_large_index():
    c = build_finite_defect(1, 2.0, 200)
    lam = c.Lambda
    # 2**200 + 1/2 is not representable but the offset is carried exactly
    assert lam.value[-1] == 2.0**200
    assert lam.off[-1] == 0.5


@pytest.mark.parametrize("N", [1, 2])
def test_finite_defect_certificate(N):
    c = build_finite_defect(N, 2.0, 100)
    cert = certify(c, truncs=(50, 100))
    assert all(r <= 1e-12 for r in cert["monomial_residuals"].values())
    assert len(cert["monomial_residuals"]) == N
    assert not cert["degree_N_gate"].converges
    assert cert["biorthogonal_defect"] == {50: N, 100: N}
    assert cert["kernel_defect"] == {50: 0, 100: 0}
    assert cert["dimension"] == N and cert["stable"]


def test_zero_defect_when_no_P():
    c = build_finite_defect(0, 2.0, 60)
    assert {k: v.dimension for k, v in defect_table(c, 2, (50, 60)).items()} == {50: 0, 60: 0}


def test_synthesis_failure_certificate():
    c = build_synthesis_failure(1, 2.0, 100)
    cert = certify(c, truncs=(50, 100))
    assert cert["mixed_defect"] == {50: 1, 100: 1}
    assert cert["all_kernels_defect"] == {50: 0, 100: 0}
    assert cert["all_biorthogonal_defect"] == {50: 0, 100: 0}
    assert set(np.unique(c.side)) == {1, 2}


def test_infinite_defect_certificate():
    c = build_infinite_defect(2.0, 60)
    cert = certify(c)
    assert max(cert["residuals"]) <= 1e-12
    assert cert["independent"]
    assert set(cert["kernel_defect"].values()) == {0}


def test_perturbation_vectors_realise_model():
    c = build_finite_defect(1, 2.0, 30)
    t, nu, a, b = perturbation_vectors(c, 20)
    d = SpectralData(t=t, nu=nu, a=a, b=b)
    from specshift.cdb_space import ModelSpace

    sp = ModelSpace.from_data(d)
    np.testing.assert_allclose(sp.log_mu, c.space.truncate(20).log_mu, atol=1e-12)
    assert perturbation_vectors(build_finite_defect(3, 3.0, 200)) is None
