"""Truncated bosonic Fock space over a finite set of orthonormal modes.

States are amplitude vectors over occupation-number configurations
``(n_1, ..., n_M)`` with ``sum(n) <= n_max``.  Mode vectors ``f`` are
coefficient vectors in the mode basis; complex conjugation of a mode vector
is entrywise, which coincides with conjugation of the underlying function
because the torus mode basis used throughout the package is real.

Operators that leave the truncated space (creation from the top sector) are
assembled with those matrix elements dropped.  Anti-Hermitian combinations
such as ``a*(f) - a(f)`` stay exactly anti-Hermitian after truncation, so the
Weyl and Bogoliubov exponentials are exactly unitary on the truncated space;
the price is a reflection error near the cutoff, which is what the leak
diagnostics measure.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply
from scipy.stats import poisson

ORDERING_TAG = b"grlex\x00\x00\x00"
_MAGIC = b"FOCK"
DEFAULT_DIM_CAP = 250_000
WEYL_LEAK = 1e-8


class LeakBudgetError(ValueError):
    """Raised when the particle cutoff is too small for the requested amplitude."""


def fock_dimension(M: int, n_max: int) -> int:
    return sum(comb(n + M - 1, M - 1) for n in range(n_max + 1))


def _sector_states(M, n):
    # reverse-lexicographic within a sector: (n,0,..) first, (..,0,n) last
    if M == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _sector_states(M - 1, n - first):
            yield (first,) + rest


class FockBasis:
    """Occupation-number basis with total-particle cutoff, graded-lex ordered."""

    def __init__(self, M: int, n_max: int, dim_cap: int = DEFAULT_DIM_CAP):
        if M < 1:
            raise ValueError("mode count must be >= 1")
        if n_max < 0:
            raise ValueError("particle cutoff must be >= 0")
        dim = fock_dimension(M, n_max)
        if dim > dim_cap:
            raise ValueError(f"Fock dimension {dim} exceeds cap {dim_cap}")
        self.M = M
        self.n_max = n_max
        states = [s for n in range(n_max + 1) for s in _sector_states(M, n)]
        self.occupations = np.array(states, dtype=np.int64).reshape(dim, M)
        self.index = {s: i for i, s in enumerate(states)}
        self.sector = self.occupations.sum(axis=1)
        starts = np.searchsorted(self.sector, np.arange(n_max + 2))
        self.sector_slices = [slice(starts[n], starts[n + 1]) for n in range(n_max + 1)]

    @property
    def dim(self) -> int:
        return self.occupations.shape[0]

    def __len__(self):
        return self.dim

    def __repr__(self):
        return f"FockBasis(M={self.M}, n_max={self.n_max}, dim={self.dim})"

    def low_sectors(self, n: int) -> slice:
        """Index range covering all sectors with at most ``n`` particles."""
        n = min(n, self.n_max)
        return slice(0, self.sector_slices[n].stop)

    def vacuum(self) -> "FockVector":
        amps = np.zeros(self.dim, dtype=complex)
        amps[0] = 1.0
        return FockVector(amps, self)

    def basis_state(self, occupation) -> "FockVector":
        amps = np.zeros(self.dim, dtype=complex)
        amps[self.index[tuple(int(n) for n in occupation)]] = 1.0
        return FockVector(amps, self)

    def random_state(self, rng, max_sector=None) -> "FockVector":
        amps = rng.normal(size=self.dim) + 1j * rng.normal(size=self.dim)
        if max_sector is not None:
            amps[self.sector > max_sector] = 0.0
        amps /= np.linalg.norm(amps)
        return FockVector(amps, self)

    @cached_property
    def annihilators(self) -> list:
        """Sparse matrices of the mode annihilators ``a_p``."""
        ops = []
        for p in range(self.M):
            rows, cols, vals = [], [], []
            for j, occ in enumerate(self.occupations):
                n = occ[p]
                if n == 0:
                    continue
                target = list(occ)
                target[p] -= 1
                rows.append(self.index[tuple(target)])
                cols.append(j)
                vals.append(np.sqrt(n))
            ops.append(sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim), dtype=complex))
        return ops

    @cached_property
    def creators(self) -> list:
        return [a.conj().T.tocsr() for a in self.annihilators]

    @cached_property
    def number_diagonal(self) -> np.ndarray:
        return self.sector.astype(float)

    def number_operator(self) -> sp.csr_matrix:
        return sp.diags(self.number_diagonal).astype(complex).tocsr()


@dataclass
class FockVector:
    """Amplitudes over a :class:`FockBasis` plus the accumulated truncation leak.

    ``leak`` is the squared norm of amplitude that operators tried to push past
    the particle cutoff and that was discarded.
    """

    amplitudes: np.ndarray
    basis: FockBasis
    leak: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.basis.dim,):
            raise ValueError("amplitude vector does not match basis dimension")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def inner(self, other: "FockVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def sector_weights(self) -> np.ndarray:
        w = np.abs(self.amplitudes) ** 2
        return np.array([w[s].sum() for s in self.basis.sector_slices])

    def sector(self, n: int) -> np.ndarray:
        """Amplitudes of the ``n``-particle component, in basis order."""
        return self.amplitudes[self.basis.sector_slices[n]]

    def top_sector_weight(self) -> float:
        """Norm squared in the top sector, the usual proxy for truncation error."""
        return float(self.sector_weights()[-1])

    def expect(self, op) -> complex:
        return complex(np.vdot(self.amplitudes, op @ self.amplitudes))

    def number_expectation(self) -> float:
        return float(np.sum(self.basis.number_diagonal * np.abs(self.amplitudes) ** 2))

    def with_amplitudes(self, amps, extra_leak=0.0) -> "FockVector":
        return FockVector(amps, self.basis, self.leak + extra_leak)


def _check_mode_vector(f, basis):
    f = np.asarray(f, dtype=complex)
    if f.shape != (basis.M,):
        raise ValueError(f"mode vector has shape {f.shape}, expected ({basis.M},)")
    return f


def annihilation_operator(f, basis: FockBasis) -> sp.csr_matrix:
    """Sparse matrix of ``a(f) = sum_p conj(f_p) a_p``."""
    f = _check_mode_vector(f, basis)
    op = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for p, a in enumerate(basis.annihilators):
        if f[p] != 0:
            op = op + np.conj(f[p]) * a
    return op.tocsr()


def creation_operator(f, basis: FockBasis) -> sp.csr_matrix:
    """Sparse matrix of the truncated ``a*(f)``; the adjoint of :func:`annihilation_operator`."""
    return annihilation_operator(f, basis).conj().T.tocsr()


def apply_annihilation(f, psi: FockVector) -> FockVector:
    return psi.with_amplitudes(annihilation_operator(f, psi.basis) @ psi.amplitudes)


def apply_creation(f, psi: FockVector) -> FockVector:
    basis = psi.basis
    f = _check_mode_vector(f, basis)
    top = np.zeros(basis.dim, dtype=complex)
    top[basis.sector_slices[-1]] = psi.sector(basis.n_max)
    # ||a*(f) x||^2 = ||f||^2 ||x||^2 + ||a(f) x||^2, all of it above the cutoff for top-sector x
    a_top = annihilation_operator(f, basis) @ top
    lost = np.vdot(f, f).real * np.vdot(top, top).real + np.vdot(a_top, a_top).real
    return psi.with_amplitudes(creation_operator(f, basis) @ psi.amplitudes, extra_leak=lost)


def second_quantize(O, basis: FockBasis) -> sp.csr_matrix:
    """``dGamma(O) = sum_{pq} O_pq a*_p a_q`` for an ``M x M`` mode-basis matrix ``O``."""
    O = np.asarray(O, dtype=complex)
    if O.shape != (basis.M, basis.M):
        raise ValueError(f"one-body matrix has shape {O.shape}, expected {(basis.M, basis.M)}")
    op = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    cr, an = basis.creators, basis.annihilators
    for p in range(basis.M):
        for q in range(basis.M):
            if O[p, q] != 0:
                op = op + O[p, q] * (cr[p] @ an[q])
    return op.tocsr()


def pair_creation_operator(K, basis: FockBasis) -> sp.csr_matrix:
    """Truncated ``(1/2) sum_{pq} K_pq a*_p a*_q``."""
    K = np.asarray(K, dtype=complex)
    op = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    cr = basis.creators
    for p in range(basis.M):
        for q in range(basis.M):
            if K[p, q] != 0:
                op = op + (0.5 * K[p, q]) * (cr[p] @ cr[q])
    return op.tocsr()


def quadratic_operator(A, B, basis: FockBasis) -> sp.csr_matrix:
    """``dGamma(A) + (1/2) sum (B_pq a*_p a*_q + conj(B_pq) a_p a_q)``."""
    P = pair_creation_operator(B, basis)
    return (second_quantize(A, basis) + P + P.conj().T).tocsr()


class ExpOperator:
    """The unitary ``exp(G)`` for a sparse anti-Hermitian generator ``G``.

    Applied to vectors through the truncated-Taylor action of the exponential
    so large bases never need a dense matrix; :meth:`matrix` gives the dense
    exponential for small bases.
    """

    def __init__(self, generator: sp.spmatrix, basis: FockBasis):
        self.generator = generator.tocsr()
        self.basis = basis

    @property
    def H(self) -> "ExpOperator":
        return ExpOperator(-self.generator, self.basis)

    def apply(self, x):
        if isinstance(x, FockVector):
            return x.with_amplitudes(self.apply(x.amplitudes))
        if self.generator.nnz == 0:
            return np.array(x, dtype=complex, copy=True)
        return expm_multiply(self.generator, np.asarray(x, dtype=complex))

    __matmul__ = apply

    def matrix(self) -> np.ndarray:
        return scipy.linalg.expm(self.generator.toarray())

    def unitarity_defect(self, probe=None) -> float:
        """``| ||U x|| - ||x|| |`` on a probe vector (random by default)."""
        if probe is None:
            rng = np.random.default_rng(0)
            probe = rng.normal(size=self.basis.dim) + 1j * rng.normal(size=self.basis.dim)
            probe /= np.linalg.norm(probe)
        return abs(np.linalg.norm(self.apply(probe)) - np.linalg.norm(probe))


def weyl_sizing_ok(f, n_max: int, leak: float = WEYL_LEAK) -> bool:
    """Sizing rule ``n_max >= ||f||^2 + 6 ||f||`` plus an exact Poisson tail check.

    The six-sigma rule alone under-sizes small amplitudes, where the Poisson
    tail is much heavier than a Gaussian one, so the coherent-state weight at
    or above the cutoff is also required to be at most ``leak``.
    """
    nrm = float(np.linalg.norm(f))
    return n_max >= nrm**2 + 6 * nrm and poisson.sf(n_max - 1, nrm**2) <= leak


def weyl_cutoff(norm: float, leak: float = WEYL_LEAK) -> int:
    """Smallest particle cutoff accepted by :func:`weyl_sizing_ok` for amplitude ``norm``."""
    n = int(np.ceil(norm**2 + 6 * norm))
    while poisson.sf(n - 1, norm**2) > leak:
        n += 1
    return n


def weyl_generator(f, basis: FockBasis) -> sp.csr_matrix:
    c = creation_operator(f, basis)
    return (c - c.conj().T).tocsr()


def weyl(f, basis: FockBasis, check_budget: bool = True) -> ExpOperator:
    """Weyl operator ``W(f) = exp(a*(f) - a(f))`` on the truncated space."""
    f = _check_mode_vector(f, basis)
    if check_budget and not weyl_sizing_ok(f, basis.n_max):
        nrm = np.linalg.norm(f)
        raise LeakBudgetError(
            f"n_max={basis.n_max} too small for ||f||={nrm:.3g} under the {WEYL_LEAK:g} leak budget"
        )
    return ExpOperator(weyl_generator(f, basis), basis)


def coherent_state(f, basis: FockBasis, check_budget: bool = True) -> FockVector:
    return weyl(f, basis, check_budget).apply(basis.vacuum())


@dataclass
class BogoliubovFrame:
    """cosh/sinh blocks of a symmetric pair kernel ``K``.

    Under ``T(K)``: ``T* a(f) T = a(C f) + a*(S conj(f))``.
    """

    cosh_block: np.ndarray
    sinh_block: np.ndarray

    @classmethod
    def from_kernel(cls, K, tol=1e-17, max_terms=200):
        K = np.asarray(K, dtype=complex)
        X = K @ K.conj()
        M = K.shape[0]
        C = np.eye(M, dtype=complex)
        S = K.copy()
        termC, termS = np.eye(M, dtype=complex), K.copy()
        for n in range(1, max_terms):
            termC = termC @ X / ((2 * n - 1) * (2 * n))
            termS = X @ termS / ((2 * n) * (2 * n + 1))
            C += termC
            S += termS
            if max(np.abs(termC).max(), np.abs(termS).max()) < tol * max(1.0, np.abs(C).max()):
                break
        else:
            raise RuntimeError("cosh/sinh series did not converge")
        return cls(C, S)

    @classmethod
    def identity(cls, M):
        return cls(np.eye(M, dtype=complex), np.zeros((M, M), dtype=complex))

    def canonicity_defect(self) -> float:
        C, S = self.cosh_block, self.sinh_block
        M = C.shape[0]
        return float(np.abs(C @ C.conj().T - S @ S.conj().T - np.eye(M)).max())

    def symmetry_defect(self) -> float:
        P = self.sinh_block @ self.cosh_block.T
        return float(np.abs(P - P.T).max())

    def one_body_density(self) -> np.ndarray:
        """``gamma_ij = <a*_i a_j>`` of the quasi-free vacuum this frame defines."""
        S = self.sinh_block
        return S.conj() @ S.T


def bogoliubov_generator(K, basis: FockBasis) -> sp.csr_matrix:
    P = pair_creation_operator(K, basis)
    return (P - P.conj().T).tocsr()


def bogoliubov_sizing_ok(K, n_max: int) -> bool:
    """Heuristic budget for squeezed states: ``n_max >= 4||K||^2 + 12||K|| + 2`` (HS norm)."""
    hs = float(np.linalg.norm(K))
    return n_max >= 4 * hs**2 + 12 * hs + 2


def bogoliubov(K, basis: FockBasis, check_budget: bool = True, sym_tol: float = 1e-12):
    """Bogoliubov unitary ``T(K) = exp((1/2) sum (K a*a* - conj(K) a a))`` and its frame."""
    K = np.asarray(K, dtype=complex)
    if K.shape != (basis.M, basis.M):
        raise ValueError(f"kernel has shape {K.shape}, expected {(basis.M, basis.M)}")
    if np.abs(K - K.T).max() > sym_tol * max(1.0, np.abs(K).max()):
        raise ValueError("pair kernel must be symmetric")
    if check_budget and not bogoliubov_sizing_ok(K, basis.n_max):
        raise LeakBudgetError(f"n_max={basis.n_max} too small for ||K||_HS={np.linalg.norm(K):.3g}")
    return ExpOperator(bogoliubov_generator(K, basis), basis), BogoliubovFrame.from_kernel(K)


def annihilated_block(psi_amps, basis: FockBasis) -> np.ndarray:
    """Columns ``a_p psi`` for every mode ``p``."""
    return np.column_stack([a @ psi_amps for a in basis.annihilators])


def reduced_density_1(psi: FockVector) -> np.ndarray:
    """``gamma_ij = <psi, a*_i a_j psi>`` as an ``M x M`` Hermitian matrix."""
    Y = annihilated_block(psi.amplitudes, psi.basis)
    g = Y.conj().T @ Y
    return 0.5 * (g + g.conj().T)


def trace_norm_distance(A, B) -> float:
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"operators must be square and equal-shaped, got {A.shape} and {B.shape}")
    D = A - B
    D = 0.5 * (D + D.conj().T)
    return float(np.abs(np.linalg.eigvalsh(D)).sum())


def condensate_density(phi, N: float) -> np.ndarray:
    """Mode-basis kernel of ``N |phi><phi|`` in the ``<a*_i a_j>`` convention."""
    phi = np.asarray(phi, dtype=complex)
    return N * np.outer(phi.conj(), phi)


# -- serialization ----------------------------------------------------------

def write_state(path, psi: FockVector):
    """Binary dump: magic, M, n_max (uint32 LE), ordering tag, complex128 LE amplitudes."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", psi.basis.M, psi.basis.n_max))
        fh.write(ORDERING_TAG)
        fh.write(np.ascontiguousarray(psi.amplitudes, dtype="<c16").tobytes())


def read_state(path) -> FockVector:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ValueError("not a Fock state dump")
    M, n_max = struct.unpack("<II", data[4:12])
    if data[12:20] != ORDERING_TAG:
        raise ValueError(f"unknown basis ordering {data[12:20]!r}")
    basis = FockBasis(M, n_max)
    amps = np.frombuffer(data[20:], dtype="<c16").astype(complex)
    return FockVector(amps, basis)


def write_sparse_triplets(path, op):
    """Coordinate text dump, one ``row col re im`` line per stored entry."""
    coo = sp.coo_matrix(op)
    with open(path, "w") as fh:
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v.real)!r} {float(v.imag)!r}\n")


def read_sparse_triplets(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        shape = (int(header[2]), int(header[3]))
        rows, cols, vals = [], [], []
        for line in fh:
            r, c, re, im = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(re) + 1j * float(im))
    return sp.csr_matrix((vals, (rows, cols)), shape=shape, dtype=complex)
