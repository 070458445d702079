import numpy as np
import pytest

from wgporo import spectrum
from wgporo.spectrum import (StructuralFailure, compute_infsup_beta, dense_schur_elasticity,
                             dense_schur_three_field, dense_schur_two_field,
                             infsup_singular_values, lemma_a1_suite)


def test_two_field_positive_storage_example(blocks2d):
    b = blocks2d(8, lam=1.4286, c0=1.0, dt=1e-3)
    rep = dense_schur_two_field(b)
    assert rep.passed
    ev = rep.eigenvalues
    assert ev[0] >= 1 - 1e-8 and ev[-1] <= 1.56
    prm = b.params
    assert rep.check("upper").bound == pytest.approx(1 + prm.alpha**2 * prm.eps / (prm.mu * prm.c0))


def test_two_field_zero_storage_factor(blocks2d):
    b = blocks2d(4, lam=1.4286, c0=0.0, dt=1e-3)
    prm = b.params
    Ared = spectrum.reduced_pressure_laplacian(b)
    expect = 1 + prm.eps * b.Mp.max() / (prm.mu * prm.dt * np.linalg.eigvalsh(Ared)[0])
    assert spectrum.two_field_factor(b) == pytest.approx(expect, rel=1e-12)
    assert dense_schur_two_field(b).passed


@pytest.mark.parametrize("dt", [1e-3, 1e-6])
def test_two_field_spread_vanishes_as_eps_goes_to_zero(blocks2d, dt):
    ev = dense_schur_two_field(blocks2d(8, lam=1.6667e6, c0=1.0, dt=dt)).eigenvalues
    assert ev[-1] - 1 <= 1e-3


def test_elasticity_structure_examples(blocks2d):
    b = blocks2d(4, lam=1.6667e3)
    rep = dense_schur_elasticity(b)
    assert rep.passed
    eps = b.params.eps
    assert abs(rep.eigenvalues[0] / eps - 1) <= 1e-6
    assert rep.check("count_below_half_gap").value == 1
    assert rep.eigenvalues[-1] <= 2 + eps
    assert rep.beta**2 <= 2


def test_infsup_beta_is_mesh_robust(blocks2d):
    betas = [compute_infsup_beta(blocks2d(n)) for n in (4, 8, 16)]
    assert min(betas) > 0
    assert 0.8 <= betas[1] / betas[0] <= 1.25
    assert max(betas) / min(betas) <= 1.25


def test_infsup_singular_values_match_dense_svd(blocks2d):
    b = blocks2d(4)
    A1 = b.A1.toarray()
    w, V = np.linalg.eigh(A1)
    A1_inv_half = V @ np.diag(w**-0.5) @ V.T
    X = np.diag(b.Mp**-0.5) @ b.Bc.toarray() @ A1_inv_half
    np.testing.assert_allclose(infsup_singular_values(b).singular_values,
                               np.linalg.svd(X, compute_uv=False), rtol=1e-10, atol=1e-12)


def test_extra_null_space_is_a_structural_failure(blocks2d, monkeypatch):
    b = blocks2d(4)
    real = spectrum.infsup_singular_values(b)
    s = real.singular_values.copy()
    s[-2] = 0.0
    fake = spectrum.InfSupResult(0.0, s, 2)
    monkeypatch.setattr(spectrum, "infsup_singular_values", lambda _b: fake)
    with pytest.raises(StructuralFailure):
        compute_infsup_beta(b)


@pytest.mark.parametrize("lam", [1.4286, 1.6667e3, 1.6667e6])
def test_three_field_bounds(blocks2d, lam):
    rep = dense_schur_three_field(blocks2d(4, lam=lam, c0=0.0, dt=1e-6))
    assert rep.check("S3_minus_lower_psd").passed
    assert rep.check("upper_minus_S3_psd").passed


def test_three_field_small_eps_limit(blocks2d):
    rep = dense_schur_three_field(blocks2d(8, lam=1.6667e6, c0=1.0, dt=1e-3))
    assert rep.check("eps_limit_spectrum").value <= 1e-4


@pytest.mark.parametrize("lam", [1.6667e3, 1.6667e6])
def test_three_field_outlier_and_cluster(blocks2d, lam):
    b = blocks2d(8, lam=lam, c0=0.0, dt=1e-6)
    ev = dense_schur_three_field(b).eigenvalues
    eps, beta = b.params.eps, compute_infsup_beta(b)
    assert np.sum(ev <= 10 * eps) == 1
    rest = ev[ev > 10 * eps]
    assert rest.min() >= beta**2 - 0.05 and rest.max() <= 2 + 10 * eps


def test_report_rows_have_csv_fields(blocks2d):
    rep = dense_schur_elasticity(blocks2d(4))
    rows = rep.rows()
    assert len(rows) == len(rep.checks)
    assert set(rows[0]) == set(spectrum.SPECTRUM_CSV_FIELDS)
    with pytest.raises(KeyError):
        rep.check("missing")


def test_lemma_suite():
    res = lemma_a1_suite(seed=0)
    assert res.trials == 50
    assert res.passed
    assert res.ideal_err <= 1e-10


def test_ideal_schur_gives_unit_spectrum():
    rng = np.random.default_rng(3)
    n, k = 8, 4
    A = spectrum._spd(rng, n)
    Bt = rng.standard_normal((n, k))
    C = rng.standard_normal((k, n))
    D = np.eye(k) * 0.3
    S = D + C @ np.linalg.solve(A, Bt)
    M = spectrum.block_triangular_product(A, Bt, C, D, S)
    I = np.eye(n + k)
    assert np.linalg.norm((M - I) @ (M - I), 2) <= 1e-10
