import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from tubalreg.datagen import gen_lowrank_coef
from tubalreg.errors import DimMismatch, NegativeWeight, SymmetryViolation
from tubalreg.penalty import KINDS, PenaltySpec
from tubalreg.tensor import (
    as_tensor3,
    dft3,
    fourier_singular_values,
    fro_norm,
    idft3,
    inner,
    spectral_penalty,
    t_identity,
    tprod,
    tsvd,
    ttnn,
    ttranspose,
    tubal_rank,
    wttnn,
)

dims = st.integers(1, 8)


def rand(shape, seed):
    return np.random.default_rng(seed).standard_normal(shape)


# dft3 / idft3 ---------------------------------------------------------------


def test_dft_length_one_is_identity():
    A = rand((3, 4, 1), 0)
    np.testing.assert_array_equal(dft3(A)[:, :, 0].real, A[:, :, 0])


def test_dft_of_constant_tubes():
    v = rand((3, 2), 1)
    A = np.repeat(v[:, :, None], 5, axis=2)
    F = dft3(A)
    np.testing.assert_allclose(F[:, :, 0], 5 * v, atol=1e-12)
    np.testing.assert_allclose(F[:, :, 1:], 0, atol=1e-12)


def test_dft_matches_naive_sum():
    A = rand((3, 3, 4), 2)
    np.testing.assert_allclose(dft3(A), oracles.naive_dft3(A), atol=1e-12)


def test_idft_zero_slices():
    assert np.all(idft3(np.zeros((2, 3, 4), dtype=complex)) == 0)


def test_idft_symmetrizes_small_violations():
    A = rand((4, 5, 3), 3)
    F = dft3(A)
    noisy = F + 1e-9 * (rand(F.shape, 4) + 1j * rand(F.shape, 5))
    out = idft3(noisy)
    assert out.dtype == float
    np.testing.assert_allclose(out, A, atol=1e-8)


def test_idft_rejects_asymmetric_slices():
    F = dft3(rand((3, 3, 4), 6))
    F[:, :, 1] += 1e-3
    with pytest.raises(SymmetryViolation):
        idft3(F)


@given(dims, dims, dims, st.integers(0, 2**31))
def test_round_trip(d1, d2, d3, seed):
    A = rand((d1, d2, d3), seed)
    np.testing.assert_allclose(idft3(dft3(A)), A, atol=1e-12 * max(1, np.abs(A).max()))


@given(dims, dims, dims, st.integers(0, 2**31))
def test_parseval(d1, d2, d3, seed):
    A = rand((d1, d2, d3), seed)
    lhs = np.sum(np.abs(dft3(A)) ** 2)
    assert abs(lhs - d3 * fro_norm(A) ** 2) <= 1e-10 * max(1.0, lhs)


# t-product ------------------------------------------------------------------


def test_tprod_identity():
    A = rand((3, 4, 5), 7)
    np.testing.assert_allclose(tprod(A, t_identity(4, 5)), A, atol=1e-12)


def test_tprod_single_slice_is_matmul():
    A, B = rand((3, 4), 8), rand((4, 2), 9)
    np.testing.assert_allclose(tprod(A, B)[:, :, 0], A @ B, atol=1e-12)


def test_tprod_matches_block_circulant():
    A, B = rand((3, 2, 4), 10), rand((2, 3, 4), 11)
    np.testing.assert_allclose(tprod(A, B), oracles.tprod_bcirc(A, B), atol=1e-12)


def test_tprod_frozen_values():
    B = np.arange(24, dtype=float).reshape(2, 3, 4) / 10
    C = np.arange(24, dtype=float).reshape(3, 2, 4)[::-1] / 7
    np.testing.assert_allclose(tprod(B, C).ravel()[:4], [5.34285714, 5.42857143, 5.34285714, 5.08571429], atol=1e-8)


def test_tprod_dim_mismatch():
    with pytest.raises(DimMismatch):
        tprod(rand((2, 3, 2), 0), rand((2, 3, 2), 1))
    with pytest.raises(DimMismatch):
        tprod(rand((2, 3, 2), 0), rand((3, 3, 4), 1))


@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 6), st.integers(0, 2**31))
def test_tprod_associative_and_bilinear(a, b, c, e, d3, seed):
    g = np.random.default_rng(seed)
    A, B, C = g.standard_normal((a, b, d3)), g.standard_normal((b, c, d3)), g.standard_normal((c, e, d3))
    np.testing.assert_allclose(tprod(tprod(A, B), C), tprod(A, tprod(B, C)), atol=1e-10)
    B2 = g.standard_normal((b, c, d3))
    np.testing.assert_allclose(tprod(A, 2 * B - B2), 2 * tprod(A, B) - tprod(A, B2), atol=1e-10)


# t-transpose ----------------------------------------------------------------


def test_ttranspose_single_slice():
    A = rand((3, 4), 12)
    np.testing.assert_array_equal(ttranspose(A)[:, :, 0], A.T)


def test_ttranspose_involution():
    A = rand((3, 4, 5), 13)
    np.testing.assert_array_equal(ttranspose(ttranspose(A)), A)


@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 6), st.integers(0, 2**31))
def test_ttranspose_reverses_products(a, b, c, d3, seed):
    g = np.random.default_rng(seed)
    A, B = g.standard_normal((a, b, d3)), g.standard_normal((b, c, d3))
    np.testing.assert_allclose(ttranspose(tprod(A, B)), tprod(ttranspose(B), ttranspose(A)), atol=1e-12)


# t-SVD ----------------------------------------------------------------------


def test_tsvd_zero():
    s = tsvd(np.zeros((3, 4, 2)))
    assert np.all(s.sigma == 0)
    assert tubal_rank(np.zeros((3, 4, 2))) == 0


def test_tsvd_identity():
    s = tsvd(t_identity(4, 3))
    np.testing.assert_allclose(s.sigma, 1.0, atol=1e-12)


@given(dims, dims, dims, st.integers(0, 2**31))
def test_tsvd_reconstruction_and_orthogonality(d1, d2, d3, seed):
    A = rand((d1, d2, d3), seed)
    s = tsvd(A)
    assert fro_norm(s.reconstruct() - A) <= 1e-10 * max(1.0, fro_norm(A))
    np.testing.assert_allclose(tprod(ttranspose(s.U), s.U), t_identity(d1, d3), atol=1e-10)
    np.testing.assert_allclose(tprod(ttranspose(s.V), s.V), t_identity(d2, d3), atol=1e-10)
    assert np.all(s.sigma >= 0)
    assert np.all(np.diff(s.sigma, axis=0) <= 1e-12)
    for j in range(1, d3):
        np.testing.assert_array_equal(s.sigma[:, j], s.sigma[:, d3 - j])
    np.testing.assert_allclose(s.sigma, oracles.slice_svals(A)[: s.sigma.shape[0]], atol=1e-10)


def test_tsvd_of_lowrank_product():
    B = gen_lowrank_coef(6, 7, 4, 2, seed=3)
    sig = tsvd(B).sigma
    assert np.all(sig[:2] > 1e-8)
    assert np.all(sig[2:] < 1e-10 * max(1.0, sig.max()))


# rank and norms -------------------------------------------------------------


def test_tubal_rank_identity_and_paper_construction():
    assert tubal_rank(t_identity(5, 3)) == 5
    assert tubal_rank(gen_lowrank_coef(20, 20, 3, 2, seed=0)) == 2


@pytest.mark.parametrize("seed", range(50))
def test_tubal_rank_of_products(seed):
    g = np.random.default_rng(seed)
    d1, d2, d3 = g.integers(2, 9, size=3)
    r = int(g.integers(1, 9))
    A = tprod(g.standard_normal((d1, r, d3)), g.standard_normal((r, d2, d3)))
    assert tubal_rank(A) == min(r, d1, d2)


def test_tubal_rank_bad_tolerance():
    with pytest.raises(ValueError):
        tubal_rank(np.ones((2, 2, 2)), rel_tol=0)


def test_ttnn_values():
    assert ttnn(np.zeros((3, 3, 2))) == 0
    assert ttnn(t_identity(4, 5)) == pytest.approx(4)
    A = np.random.default_rng(7).standard_normal((5, 5, 3))
    assert ttnn(A) == pytest.approx(oracles.ttnn_oracle(A), rel=1e-12)
    # frozen from the per-slice oracle
    assert ttnn(A) == pytest.approx(14.78764895326528, rel=1e-12)


def test_ttnn_two_slices_closed_form():
    A = rand((4, 3, 2), 21)
    expect = (np.linalg.norm(A[:, :, 0] + A[:, :, 1], "nuc") + np.linalg.norm(A[:, :, 0] - A[:, :, 1], "nuc")) / 2
    assert ttnn(A) == pytest.approx(expect, rel=1e-12)


def test_wttnn():
    A = rand((4, 5, 3), 14)
    sig = fourier_singular_values(A)
    assert wttnn(A, np.ones_like(sig)) == pytest.approx(ttnn(A))
    assert wttnn(A, np.zeros_like(sig)) == 0
    W = np.abs(rand(sig.shape, 15))
    expect = sum(W[:, j] @ oracles.slice_svals(A)[:, j] for j in range(3)) / 3
    assert wttnn(A, W) == pytest.approx(expect, rel=1e-12)
    with pytest.raises(NegativeWeight):
        wttnn(A, -W)
    with pytest.raises(DimMismatch):
        wttnn(A, W[:2])


def test_inner_and_norm():
    A = rand((3, 3, 2), 16)
    assert inner(A, np.zeros_like(A)) == 0
    assert fro_norm(t_identity(5, 4)) == pytest.approx(np.sqrt(5))
    assert fro_norm(A) == pytest.approx(np.sqrt(inner(A, A)))
    with pytest.raises(DimMismatch):
        inner(A, np.zeros((3, 3, 3)))


def test_as_tensor3_validation():
    assert as_tensor3(np.ones((2, 3))).shape == (2, 3, 1)
    with pytest.raises(DimMismatch):
        as_tensor3(np.ones(3))
    with pytest.raises(ValueError):
        as_tensor3(np.array([[np.nan]]))


# spectral penalty -------------------------------------------------------------


def test_spectral_penalty_examples():
    for kind in KINDS:
        assert spectral_penalty(np.zeros((3, 3, 2)), PenaltySpec(kind, 0.5)) == 0
    assert spectral_penalty(t_identity(6, 3), PenaltySpec("mcp", 1.0, 2.0)) == pytest.approx(0.75 * 6)
    A = rand((4, 4, 3), 17)
    assert spectral_penalty(A, PenaltySpec("ttnn", 0.3)) == pytest.approx(0.3 * ttnn(A))


@given(st.sampled_from(KINDS), st.floats(0.1, 3), st.floats(1.5, 6), st.integers(0, 2**31))
def test_spectral_penalty_envelope(kind, lam, gamma, seed):
    if kind == "scad":
        gamma += 1
    p = PenaltySpec(kind, lam, gamma)
    A = rand((4, 3, 3), seed)
    assert spectral_penalty(A, p) <= p.constants().c_rho_prime * ttnn(A) * (1 + 1e-12)


@given(st.sampled_from(KINDS), st.integers(0, 2**31))
def test_spectral_penalty_monotone_under_scaling(kind, seed):
    p = PenaltySpec(kind, 0.7)
    d = np.sort(np.abs(rand(4, seed)))[::-1]
    A = np.zeros((4, 4, 2))
    A[:, :, 0] = np.diag(d)
    vals = [spectral_penalty(c * A, p) for c in (0.5, 1.0, 2.0, 4.0)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
