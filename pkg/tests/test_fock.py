from math import comb, factorial

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from scipy.sparse.linalg import expm_multiply

from fluctlab import fock
from fluctlab.fock import (BogoliubovFrame, FockBasis, FockVector, LeakBudgetError, annihilation_operator,
                           apply_annihilation, apply_creation, bogoliubov, coherent_state, condensate_density,
                           creation_operator, reduced_density_1, second_quantize, trace_norm_distance, weyl)

from conftest import random_mode_vector, random_symmetric

complex_vec = st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=3, max_size=3).map(
    lambda xs: np.array([complex(a, b) for a, b in xs]))


def product_state(basis, f, n):
    """Occupation amplitudes of the normalized ``f^{(x)n}`` (``f`` a unit vector), from the multinomial formula."""
    amps = np.zeros(basis.dim, dtype=complex)
    for i, occ in enumerate(basis.occupations):
        if occ.sum() == n:
            multi = factorial(n) / np.prod([factorial(k) for k in occ])
            amps[i] = np.sqrt(multi) * np.prod(f**occ)
    return amps


def coherent_components(basis, f):
    """``exp(-||f||^2/2) prod f_i^{n_i} / sqrt(n_i!)`` per occupation vector."""
    fac = np.sqrt([np.prod([factorial(k) for k in occ]) for occ in basis.occupations])
    return np.exp(-0.5 * np.vdot(f, f).real) * np.prod(f[None, :] ** basis.occupations, axis=1) / fac


@pytest.mark.parametrize("M,n_max,dim", [(1, 2, 3), (2, 2, 6), (3, 4, 35), (4, 3, 35)])
def test_basis_dimensions(M, n_max, dim):
    b = FockBasis(M, n_max)
    assert b.dim == dim == sum(comb(n + M - 1, M - 1) for n in range(n_max + 1))


def test_basis_is_graded_bijection():
    b = FockBasis(3, 5)
    occ = [tuple(o) for o in b.occupations]
    assert len(set(occ)) == b.dim
    assert all(b.index[o] == i for i, o in enumerate(occ))
    assert np.all(np.diff(b.sector) >= 0)
    assert occ[:4] == [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
    assert [tuple(o) for o in FockBasis(3, 5).occupations] == occ


def test_dimension_cap():
    with pytest.raises(ValueError):
        FockBasis(6, 20, dim_cap=1000)
    with pytest.raises(ValueError):
        FockBasis(0, 2)


@given(complex_vec)
def test_annihilation_kills_vacuum(f):
    b = FockBasis(3, 4)
    assert np.all(apply_annihilation(f, b.vacuum()).amplitudes == 0)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_powers_of_creation_give_product_states(rng, n):
    b = FockBasis(3, 5)
    f = random_mode_vector(rng, 3)
    f /= np.linalg.norm(f)
    psi = b.vacuum()
    for _ in range(n):
        psi = apply_creation(f, psi)
    got = psi.amplitudes / np.sqrt(factorial(n))
    assert np.allclose(got, product_state(b, f, n), atol=1e-13)
    assert psi.leak == 0.0


def test_creation_bound_on_random_states(rng):
    b = FockBasis(3, 8)
    Np1 = np.sqrt(b.number_diagonal + 1)
    for _ in range(50):
        f = random_mode_vector(rng, 3)
        psi = b.random_state(rng, max_sector=7)
        lhs = np.linalg.norm(creation_operator(f, b) @ psi.amplitudes)
        assert lhs <= np.linalg.norm(f) * np.linalg.norm(Np1 * psi.amplitudes) * (1 + 1e-12)


def test_creation_from_top_sector_records_leak(rng):
    b = FockBasis(2, 3)
    top = b.basis_state((2, 1))
    out = apply_creation(np.array([1.0, 0.0]), top)
    assert np.all(out.amplitudes == 0)
    # a*_1 |2,1> = sqrt(3) |3,1>, all of it lost
    assert out.leak == pytest.approx(3.0)
    with pytest.raises(ValueError):
        apply_creation(np.ones(3), top)


@given(complex_vec, complex_vec)
def test_ccr_below_cutoff(f, g):
    b = FockBasis(3, 6)
    a_f, ad_g = annihilation_operator(f, b), creation_operator(g, b)
    low = b.low_sectors(b.n_max - 2)
    comm = (a_f @ ad_g - ad_g @ a_f).toarray()[low, low]
    assert np.abs(comm - np.vdot(f, g) * np.eye(comm.shape[0])).max() <= 1e-12
    a_g = annihilation_operator(g, b)
    assert abs(a_f @ a_g - a_g @ a_f).max() <= 1e-12
    ad_f = creation_operator(f, b)
    assert abs(ad_f @ ad_g - ad_g @ ad_f).max() <= 1e-12


def test_number_form_identity(rng):
    b = FockBasis(3, 6)
    N = b.number_operator()
    for _ in range(10):
        psi, phi = b.random_state(rng), b.random_state(rng)
        lhs = np.vdot(psi.amplitudes, N @ phi.amplitudes)
        rhs = sum(np.vdot(a @ psi.amplitudes, a @ phi.amplitudes) for a in b.annihilators)
        assert abs(lhs - rhs) <= 1e-12


def test_second_quantized_identity_is_number_operator():
    b = FockBasis(3, 5)
    dG = second_quantize(np.eye(3), b)
    assert abs(dG - b.number_operator()).max() <= 1e-14
    state = b.basis_state((2, 0, 3))
    assert np.allclose(dG @ state.amplitudes, 5 * state.amplitudes)


def test_second_quantized_bound(rng):
    b = FockBasis(3, 6)
    for _ in range(20):
        O = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        psi = b.random_state(rng)
        val = abs(psi.expect(second_quantize(O, b)))
        assert val <= np.linalg.norm(O, 2) * psi.number_expectation() * (1 + 1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_second_quantized_eigenvector_product(rng, n):
    b = FockBasis(3, 4)
    X = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    O = X + X.conj().T
    lam, vecs = np.linalg.eigh(O)
    # O f = lam f in the a*(f) = sum f_p a*_p convention
    f = vecs[:, 1]
    psi = product_state(b, f, n)
    assert np.allclose(second_quantize(O, b) @ psi, n * lam[1] * psi, atol=1e-12)
    with pytest.raises(ValueError):
        second_quantize(np.eye(2), b)


# -- Weyl -----------------------------------------------------------------------

def test_weyl_of_zero_is_identity(rng):
    b = FockBasis(3, 4)
    W = weyl(np.zeros(3), b)
    psi = b.random_state(rng)
    assert np.array_equal(W.apply(psi).amplitudes, psi.amplitudes)


@pytest.mark.parametrize("amp", [0.3, 0.6])
def test_coherent_state_components(rng, amp):
    b = FockBasis(3, 12)
    f = random_mode_vector(rng, 3)
    f *= amp / np.linalg.norm(f)
    psi = coherent_state(f, b)
    low = b.low_sectors(b.n_max - 2)
    assert np.abs(psi.amplitudes[low] - coherent_components(b, f)[low]).max() <= 1e-10
    assert psi.number_expectation() == pytest.approx(amp**2, abs=1e-8)


def test_coherent_number_and_density(rng):
    b = FockBasis(3, 24)
    phi = random_mode_vector(rng, 3)
    phi /= np.linalg.norm(phi)
    N = 3.0
    psi = coherent_state(np.sqrt(N) * phi, b)
    assert psi.number_expectation() == pytest.approx(N, abs=1e-8)
    gamma = reduced_density_1(psi)
    assert np.allclose(gamma, condensate_density(phi, N), atol=1e-8)
    assert np.linalg.matrix_rank(gamma, tol=1e-6) == 1


def test_weyl_shift_within_truncation_leak(rng):
    """Away from the cutoff the shift identity is exact; near it the error is bounded by the column leak."""
    b = FockBasis(3, 12)
    f = random_mode_vector(rng, 3)
    f *= 0.5 / np.linalg.norm(f)
    g = random_mode_vector(rng, 3)
    W = weyl(f, b).matrix()
    a_g = annihilation_operator(g, b).toarray()
    D = W.conj().T @ a_g @ W - a_g - np.vdot(g, f) * np.eye(b.dim)
    top = b.sector_slices[-1]
    col_leak = np.linalg.norm(W[top, :], axis=0)
    for n in range(b.n_max - 1):
        s = b.low_sectors(n)
        assert np.abs(D[s, s]).max() <= 1e-12 + 10 * np.linalg.norm(g) * col_leak[s].max()
    assert np.abs(D[b.low_sectors(2), b.low_sectors(2)]).max() <= 1e-10


def test_weyl_unitarity_and_budget(rng):
    b = FockBasis(3, 12)
    f = random_mode_vector(rng, 3)
    f *= 1.0 / np.linalg.norm(f)
    W = weyl(f, b)
    psi = b.random_state(rng)
    assert abs(W.apply(psi).norm() - 1.0) <= 1e-8
    assert W.unitarity_defect() <= 1e-8
    with pytest.raises(LeakBudgetError):
        weyl(3 * f, b)
    assert not fock.weyl_sizing_ok(1.3 * f, 12)


# -- Bogoliubov ---------------------------------------------------------------

def test_bogoliubov_of_zero(rng):
    b = FockBasis(3, 4)
    T, frame = bogoliubov(np.zeros((3, 3)), b)
    psi = b.random_state(rng)
    assert np.array_equal(T.apply(psi).amplitudes, psi.amplitudes)
    assert np.array_equal(frame.cosh_block, np.eye(3)) and not np.any(frame.sinh_block)


def test_bogoliubov_rejects_asymmetric():
    with pytest.raises(ValueError):
        bogoliubov(np.array([[0, 0.1, 0], [0, 0, 0], [0, 0, 0]]), FockBasis(3, 6))
    with pytest.raises(LeakBudgetError):
        bogoliubov(np.eye(3), FockBasis(3, 6))


@pytest.mark.parametrize("hs", [0.05, 0.3, 1.5])
def test_frame_canonicity_and_symmetry(rng, hs):
    fr = BogoliubovFrame.from_kernel(random_symmetric(rng, 4, hs))
    assert fr.canonicity_defect() <= 1e-10
    assert fr.symmetry_defect() <= 1e-10


def test_frame_series_matches_polar_oracle(rng):
    """cosh/sinh of K from the SVD-based polar form ``K = U diag(s) U^T`` (Takagi via eigen of K K*)."""
    K = random_symmetric(rng, 3, 0.8)
    fr = BogoliubovFrame.from_kernel(K)
    X = K @ K.conj()  # Hermitian, positive
    w, Q = np.linalg.eigh(X)
    r = np.sqrt(np.clip(w, 0, None))
    cosh = Q @ np.diag(np.cosh(r)) @ Q.conj().T
    sinhc = Q @ np.diag(np.where(r > 0, np.sinh(r) / np.where(r > 0, r, 1), 1.0)) @ Q.conj().T
    assert np.allclose(fr.cosh_block, cosh, atol=1e-12)
    assert np.allclose(fr.sinh_block, sinhc @ K, atol=1e-12)


def test_bogoliubov_conjugation_low_sectors(rng):
    b = FockBasis(3, 24)
    K = random_symmetric(rng, 3, 0.3)
    T, fr = bogoliubov(K, b)
    f = random_mode_vector(rng, 3)
    low = b.low_sectors(3)
    cols = np.eye(b.dim, low.stop, dtype=complex)
    TX = expm_multiply(T.generator, cols)
    lhs = expm_multiply(-T.generator, annihilation_operator(f, b) @ TX)[low]
    rhs = (annihilation_operator(fr.cosh_block @ f, b) + creation_operator(fr.sinh_block @ f.conj(), b)) @ cols
    assert np.abs(lhs - rhs[low]).max() <= 1e-6


def test_quasi_free_density_matches_frame(rng):
    b = FockBasis(3, 24)
    K = random_symmetric(rng, 3, 0.3)
    T, fr = bogoliubov(K, b)
    psi = T.apply(b.vacuum())
    assert np.allclose(reduced_density_1(psi), fr.one_body_density(), atol=1e-8)


# -- densities and distances -------------------------------------------------------

def test_reduced_density_properties(rng):
    b = FockBasis(3, 6)
    assert not np.any(reduced_density_1(b.vacuum()))
    for _ in range(10):
        psi = b.random_state(rng)
        g = reduced_density_1(psi)
        assert np.allclose(g, g.conj().T, atol=0)
        assert np.linalg.eigvalsh(g).min() >= -1e-12
        sector_sum = sum(n * w for n, w in enumerate(psi.sector_weights()))
        assert np.trace(g).real == pytest.approx(sector_sum, rel=1e-12)


def test_trace_norm_distance_oracles(rng):
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    A = A + A.conj().T
    assert trace_norm_distance(A, A) == 0.0
    e0, e1 = np.eye(3)[0], np.eye(3)[1]
    assert trace_norm_distance(np.outer(e0, e0), np.outer(e1, e1)) == pytest.approx(2.0, abs=1e-15)
    for _ in range(10):
        B = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        B = B + B.conj().T
        sv = np.linalg.svd(A - B, compute_uv=False).sum()
        assert abs(trace_norm_distance(A, B) - sv) <= 1e-12 * max(1.0, sv)
    with pytest.raises(ValueError):
        trace_norm_distance(np.eye(2), np.eye(3))


# -- serialization -------------------------------------------------------------------

def test_state_roundtrip_is_bit_exact(tmp_path, rng):
    b = FockBasis(3, 5)
    psi = b.random_state(rng)
    p = tmp_path / "state.bin"
    fock.write_state(p, psi)
    back = fock.read_state(p)
    assert back.basis.M == 3 and back.basis.n_max == 5
    assert back.amplitudes.tobytes() == psi.amplitudes.tobytes()
    raw = p.read_bytes()
    assert raw[:4] == b"FOCK" and len(raw) == 20 + 16 * b.dim
    p.write_bytes(b"JUNK" + raw[4:])
    with pytest.raises(ValueError):
        fock.read_state(p)


def test_sparse_triplet_roundtrip(tmp_path):
    b = FockBasis(2, 4)
    op = second_quantize(np.array([[1.0, 0.5j], [-0.5j, 2.0]]), b)
    p = tmp_path / "op.txt"
    fock.write_sparse_triplets(p, op)
    back = fock.read_sparse_triplets(p)
    assert abs(back - op).max() == 0
    assert isinstance(back, sp.csr_matrix)


def test_vector_validation():
    with pytest.raises(ValueError):
        FockVector(np.ones(5), FockBasis(2, 2))
