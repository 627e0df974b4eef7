"""Acceptance criteria 1-10; a PASS/FAIL line per criterion is printed in the
terminal summary."""

import subprocess
import sys
import time

import numpy as np
import pytest

from specshift import cli
from specshift.cdb_space import (
    ModelFunction,
    ModelSpace,
    SpaceElement,
    biorthogonal_log_coeffs,
    element_eval,
    inner_product,
    kernel_coeffs,
    kernel_log_coeffs,
    norm,
    sample_norm,
)
from specshift.counterexamples import build, certify
from specshift.determinant import ContourSpec, beta_eval, eigenvalues
from specshift.krein import cos_pi_z, default_samples, delete_zero, krein_residual, volterra_model_check
from specshift.matrix_oracle import char_logdet, dense_eigs, match_spectra, truncate
from specshift.spectral_core import generate

from conftest import random_data, record

DATASETS = [("lacunary", s) for s in range(5)] + [("arithmetic", s) for s in range(5)]


def _region(dense):
    return ContourSpec.circle(0.0, 1.5 * float(np.abs(dense).max()) + 1.0)


@pytest.fixture(scope="module")
def spectra():
    out = {}
    for fam, seed in DATASETS:
        d = random_data(fam, seed, N=50)
        dense = dense_eigs(truncate(d)).eigenvalues
        t0 = time.perf_counter()
        eig = eigenvalues(d, _region(dense))
        out[(fam, seed)] = (d, dense, eig, time.perf_counter() - t0)
    return out


def test_criterion_1_contour_matches_dense(spectra):
    worst, slowest, ok = 0.0, 0.0, True
    for d, dense, eig, dt in spectra.values():
        mine = np.array([e.value for e in eig for _ in range(e.multiplicity)])
        if len(mine) != len(dense):
            ok = False
            continue
        worst = max(worst, match_spectra(mine, dense).max_distance)
        slowest = max(slowest, dt)
    ok = ok and worst <= 1e-8 and slowest <= 5.0
    record(1, ok, f"max distance {worst:.2e}, slowest {slowest:.2f} s over {len(spectra)} datasets")
    assert ok


def test_criterion_2_determinant_identity():
    rng = np.random.default_rng(2)
    worst = 0.0
    for fam in ("lacunary", "arithmetic"):
        d = random_data(fam, 11, N=50)
        op = truncate(d)
        for _ in range(10):
            eta = complex(rng.normal(), rng.normal()) * 2
            lhs = char_logdet(op, eta)
            rhs = np.log(beta_eval(d, eta).value) + np.sum(np.log(d.s - eta))
            worst = max(worst, abs(np.expm1(rhs - lhs)))
    record(2, worst <= 1e-8, f"max relative error {worst:.2e} at 20 points")
    assert worst <= 1e-8


def test_criterion_3_trace_identity(spectra):
    worst = 0.0
    for d, _dense, eig, _dt in spectra.values():
        total = sum(e.multiplicity * e.value for e in eig)
        trace = np.sum(d.s) + np.sum(d.a * np.conj(d.b) * d.nu)
        worst = max(worst, abs(total - trace) / abs(trace))
    record(3, worst <= 1e-9, f"max relative error {worst:.2e}")
    assert worst <= 1e-9


def _spaces():
    t = 2.0 ** np.arange(1, 41)
    return {
        "arithmetic": ModelSpace.from_data(generate("arithmetic", {"count": 100, "a_exp": -1.0, "b_exp": -1.5})),
        "lacunary": ModelSpace.from_mu(t, 1 / t),
        "finite_defect": build("finite_defect", 2, 2.0, 200).space,
    }


def test_criterion_4_reproducing_property():
    rng = np.random.default_rng(4)
    worst = 0.0
    for sp in _spaces().values():
        n = len(sp)
        for _ in range(20):
            f = SpaceElement((rng.normal(size=n) + 1j * rng.normal(size=n)) / np.arange(1, n + 1))
            lam = complex(*rng.uniform(-4, 4, size=2))
            k = kernel_coeffs(sp, lam)
            err = abs(inner_product(sp, f, k) - element_eval(sp, f, lam))
            # f and k_lambda both live in the stored space, so the tail is zero
            worst = max(worst, err / (norm(sp, f) * norm(sp, k)))
    record(4, worst <= 1e-9, f"max relative error {worst:.2e} over 3 spaces x 20 pairs")
    assert worst <= 1e-9


def test_criterion_5_biorthogonality():
    c = build("finite_defect", 1, 2.0, 200)
    sp, Gm = c.space, ModelFunction(c.G)
    lam = c.Lambda[np.arange(5)]
    B = np.empty((5, 5), dtype=complex)
    for j in range(5):
        g = SpaceElement(np.exp(biorthogonal_log_coeffs(sp, Gm, lam[j])))
        for i in range(5):
            k = SpaceElement(np.exp(kernel_log_coeffs(sp, lam[i])))
            B[i, j] = inner_product(sp, g, k)
    err = float(np.abs(B - np.eye(5)).max())
    record(5, err <= 1e-8, f"max |<g_j, k_i> - delta_ij| = {err:.2e}")
    assert err <= 1e-8


@pytest.fixture(scope="module")
def finite_defect_certs():
    t0 = time.perf_counter()
    certs = {(N, q): certify(build("finite_defect", N, q, 200)) for N in (1, 2, 3) for q in (2.0, 3.0)}
    return certs, time.perf_counter() - t0


def test_criterion_6_finite_defect(finite_defect_certs):
    certs, dt = finite_defect_certs
    worst = max(max(c["monomial_residuals"].values()) for c in certs.values())
    dims_ok = all(c["biorthogonal_defect"] == {50: N, 100: N, 200: N} for (N, _q), c in certs.items())
    divergent = all(not c["degree_N_gate"].converges for c in certs.values())
    ok = worst <= 1e-7 and dims_ok and divergent and dt <= 30.0
    record(6, ok, f"monomial residual {worst:.2e}, mixed_defect = N at 50/100/200, "
                  f"degree-N gate certified divergent, {dt:.1f} s")
    assert ok


@pytest.mark.xfail(strict=True, reason="sum |t^N|^2 mu_n has constant terms, so partial sums "
                   "double over a doubling of the prefix; a 10x growth ratio is unattainable")
def test_criterion_6_gate_growth(finite_defect_certs):
    certs, _ = finite_defect_certs
    ratio = min(c["degree_N_gate"].growth_ratio for c in certs.values())
    record("6 gate-growth", ratio >= 10.0, f"growth ratio {ratio:.3g} < 10 (strict xfail)",
           status="PASS" if ratio >= 10 else "XFAIL")
    assert ratio >= 10.0


def test_criterion_7_synthesis_failure():
    ok, parts = True, []
    for N in (1, 2):
        cert = certify(build("synthesis_failure", N, 2.0, 200))
        good = (set(cert["mixed_defect"].values()) == {N}
                and set(cert["all_kernels_defect"].values()) == {0}
                and set(cert["all_biorthogonal_defect"].values()) == {0}
                and len(cert["mixed_defect"]) == 3)
        ok &= good
        parts.append(f"N={N}: mixed {list(cert['mixed_defect'].values())}")
    record(7, ok, "; ".join(parts) + ", trivial partitions 0")
    assert ok


def test_criterion_8_krein():
    t0 = time.perf_counter()
    c = cos_pi_z(10_000)
    r = krein_residual(c, default_samples(c, 25, seed=0))
    dt = time.perf_counter() - t0
    d = delete_zero(c, 0)
    vol = [volterra_model_check(d, tr).residual for tr in (2500, 5000, 10_000)]
    stable = max(vol) - min(vol) <= 1e-3 * max(vol)
    ok = r.residual <= 5e-4 and dt <= 1.0 and min(vol) >= 1e-2 and stable
    record(8, ok, f"cos(pi z) residual {r.residual:.2e} in {dt:.2f} s; deleted-zero "
                  f"residuals {', '.join(f'{v:.3f}' for v in vol)}")
    assert ok


def test_criterion_9_parseval():
    rng = np.random.default_rng(9)
    worst = 0.0
    spaces = list(_spaces().values())
    for i in range(100):
        sp = spaces[i % len(spaces)]
        n = len(sp)
        f = SpaceElement(rng.normal(size=n) + 1j * rng.normal(size=n))
        worst = max(worst, abs(sample_norm(sp, f) ** 2 - norm(sp, f) ** 2) / norm(sp, f) ** 2)
    record(9, worst <= 1e-10, f"max relative error {worst:.2e} over 100 elements")
    assert worst <= 1e-10


def test_criterion_10_byte_identical_csv(tmp_path):
    data = str(tmp_path / "r.sd")
    from specshift.io import save_data

    save_data(data, random_data("lacunary", 0, N=30))
    runs = []
    for i in range(2):
        outs = {}
        for name, argv in {
            "eig": ["eig", "--input", data, "--oracle"],
            "krein": ["krein", "--trunc", "2000", "--samples", "10", "--seed", "7"],
        }.items():
            p = str(tmp_path / f"{name}{i}.csv")
            assert cli.main(argv + ["--out", p]) == 0
            outs[name] = open(p, "rb").read()
        # a separate interpreter as well, to rule out in-process state
        p = str(tmp_path / f"sub{i}.csv")
        subprocess.run([sys.executable, "-m", "specshift.cli", "krein", "--trunc", "2000",
                        "--samples", "10", "--seed", "7", "--out", p], check=True,
                       capture_output=True)
        outs["subprocess"] = open(p, "rb").read()
        runs.append(outs)
    ok = runs[0] == runs[1] and runs[0]["krein"] == runs[0]["subprocess"]
    record(10, ok, f"{len(runs[0])} CSV outputs identical across runs and processes")
    assert ok
