"""Scaled many-body Hamiltonian in a torus mode basis, and its propagation.

``H = dGamma(-Laplacian) + (1/2) sum V_pqrs a*_p a*_q a_r a_s`` with
``V_pqrs = int int v(x-y) e_p(x) e_q(y) e_r(x) e_s(y)`` for the scaled pair
potential ``v = N^(d beta - 1) V(N^beta .)`` on the periodic box.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from . import fock
from .fock import FockBasis, FockVector
from .krylov import DENSE_THRESHOLD, KRYLOV_DIM, expmv
from .modes import TorusModes
from .potentials import RadialPotential


def symmetrize_tensor(V):
    """Impose ``V_pqrs = V_qpsr = V_rspq = V_rqps`` exactly (real modes)."""
    V = 0.5 * (V + V.transpose(1, 0, 3, 2))
    V = 0.5 * (V + V.transpose(2, 3, 0, 1))
    V = 0.5 * (V + V.transpose(2, 1, 0, 3))
    return V


def pair_kernel_tensor(modes: TorusModes, fourier) -> np.ndarray:
    """Mode matrix elements of the periodic pair kernel whose Fourier transform is ``fourier(|k|)``.

    Exact up to roundoff: every product of mode functions is a trigonometric
    polynomial resolved by ``modes.min_grid()``, and the convolution uses the
    continuum transform at lattice wavevectors (image summation).
    """
    d, L, M = modes.dim, modes.box_length, modes.M
    G = modes.min_grid()
    E = modes.evaluate(modes.grid_points(G))  # (G^d, M)
    shape = (G,) * d
    rho = (E[:, :, None] * E[:, None, :]).reshape(shape + (M, M))
    axes = tuple(range(d))
    k1 = 2 * np.pi * np.fft.fftfreq(G, d=L / G)
    kk = np.meshgrid(*([k1] * d), indexing="ij")
    kabs = np.sqrt(sum(k**2 for k in kk))
    uniq, inv = np.unique(np.round(kabs, 12), return_inverse=True)
    w_hat = np.asarray(fourier(uniq))[inv].reshape(shape)
    conv = np.fft.ifftn(np.fft.fftn(rho, axes=axes) * w_hat[(...,) + (None, None)], axes=axes).real
    dV = (L / G) ** d
    V = np.einsum("xpr,xqs->pqrs", rho.reshape(-1, M, M), conv.reshape(-1, M, M)) * dV
    return symmetrize_tensor(V)


def base_tensor(modes: TorusModes, V: RadialPotential, N: float, beta: float) -> np.ndarray:
    """Tensor of ``N^(d beta) V(N^beta x)``, the unit-mass kernel; the Hamiltonian uses it divided by ``N``."""
    s = float(N) ** beta
    return pair_kernel_tensor(modes, lambda q: V.fourier(np.asarray(q) / s, modes.dim))


def interaction_operator(V4, basis: FockBasis) -> sp.csr_matrix:
    M = basis.M
    cr, an = basis.creators, basis.annihilators
    pair_cr = [[cr[p] @ cr[q] for q in range(M)] for p in range(M)]
    op = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for r in range(M):
        for s in range(M):
            coeff = V4[:, :, r, s]
            if not np.any(coeff):
                continue
            left = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
            for p in range(M):
                for q in range(M):
                    if coeff[p, q] != 0:
                        left = left + (0.5 * coeff[p, q]) * pair_cr[p][q]
            op = op + left @ (an[r] @ an[s])
    return op.tocsr()


@dataclass
class ManyBodyHamiltonian:
    basis: FockBasis
    modes: TorusModes
    kinetic: np.ndarray  # one-body matrix of -Laplacian
    two_body_tensor: np.ndarray  # V_pqrs of the scaled potential
    scale_N: float
    beta: float
    dim: int
    kinetic_op: sp.csr_matrix
    interaction: sp.csr_matrix
    assembled: sp.csr_matrix

    @property
    def mean_field_tensor(self) -> np.ndarray:
        """``N V_pqrs``: the pair tensor seen by the condensate."""
        return self.scale_N * self.two_body_tensor

    def energy(self, psi: FockVector) -> float:
        return psi.expect(self.assembled).real

    def hermiticity_defect(self) -> float:
        D = self.assembled - self.assembled.conj().T
        return float(abs(D).max()) if D.nnz else 0.0

    def number_commutator_defect(self) -> float:
        n = self.basis.number_diagonal
        coo = self.assembled.tocoo()
        if coo.nnz == 0:
            return 0.0
        return float(np.max(np.abs(coo.data * (n[coo.row] - n[coo.col]))))


def assemble(basis: FockBasis, V: RadialPotential, N: float, beta: float, d: int = 1,
             box_length: float = 2 * np.pi) -> ManyBodyHamiltonian:
    if not 0 <= beta <= 1:
        raise ValueError("beta must lie in [0, 1]")
    modes = TorusModes(d, box_length, basis.M)
    V.check_nonnegative()
    kin = np.diag(modes.kinetic).astype(complex)
    tensor = base_tensor(modes, V, N, beta) / N
    K = fock.second_quantize(kin, basis)
    I = interaction_operator(tensor, basis)
    H = (K + I).tocsr()
    H = (0.5 * (H + H.conj().T)).tocsr()
    return ManyBodyHamiltonian(basis, modes, kin, tensor, N, beta, d, K, I, H)


def evolve_state(H: ManyBodyHamiltonian, psi0: FockVector, t: float, krylov_dim: int = KRYLOV_DIM,
                 tol: float = 1e-12, dense_threshold: int = DENSE_THRESHOLD) -> FockVector:
    """``exp(-i t H) psi0`` by adaptive Krylov substeps."""
    if psi0.basis is not H.basis and psi0.basis.dim != H.basis.dim:
        raise ValueError("state and Hamiltonian live on different bases")
    amps = expmv(H.assembled, psi0.amplitudes, t, m=krylov_dim, tol=tol, dense_threshold=dense_threshold)
    return psi0.with_amplitudes(amps)


# -- mean-field (beta = 0) pipeline -----------------------------------------

def cubic_term(T4, phi) -> np.ndarray:
    """``sum_qrs T_pqrs conj(phi_q) phi_r phi_s``."""
    return np.einsum("pqrs,q,r,s->p", T4, phi.conj(), phi, phi, optimize=True)


def galerkin_hartree(kinetic_diag, T4, phi0, t_eval, rtol=1e-12, atol=1e-14):
    """Mode-space Hartree flow ``i phi' = k^2 phi + sum T_pqrs conj(phi_q) phi_r phi_s``.

    ``T4`` is the unit-mass tensor (``ManyBodyHamiltonian.mean_field_tensor``).
    Returns the solver's dense output so the trajectory can be sampled anywhere.
    """
    kin = np.asarray(kinetic_diag, dtype=float)

    def rhs(t, y):
        phi = y[: len(kin)] + 1j * y[len(kin):]
        d = -1j * (kin * phi + cubic_term(T4, phi))
        return np.concatenate([d.real, d.imag])

    phi0 = np.asarray(phi0, dtype=complex)
    t_end = max(t_eval) if len(t_eval) else 0.0
    sol = solve_ivp(rhs, (0.0, max(t_end, 1e-12)), np.concatenate([phi0.real, phi0.imag]), method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True)
    M = len(kin)

    def phi_at(t):
        y = sol.sol(t)
        return y[:M] + 1j * y[M:]

    return phi_at


def mean_field_sizing(N: float, extra: int = 2) -> int:
    """Cutoff for ``W(sqrt(N) phi) Omega``: the Weyl sizing rule plus ``extra`` sectors of headroom."""
    return fock.weyl_cutoff(np.sqrt(N)) + extra


def mean_field_convergence(V: RadialPotential, phi0, N_sweep, t_grid, M: int = 3, box_length: float = 2 * np.pi,
                           n_max_extra: int = 2, leak_budget: float = 1e-6):
    """Trace-norm distance of the evolved coherent state's density to ``N |phi_t><phi_t|``.

    ``phi0`` are mode coefficients; ``phi_t`` follows the Galerkin Hartree flow
    on the same modes.  Returns a list of row dicts.
    """
    phi0 = np.asarray(phi0, dtype=complex)
    phi0 = phi0 / np.linalg.norm(phi0)
    times = sorted(float(t) for t in t_grid)
    rows = []
    for N in N_sweep:
        basis = FockBasis(M, mean_field_sizing(N, n_max_extra))
        H = assemble(basis, V, N, 0.0, 1, box_length)
        phi_at = galerkin_hartree(H.modes.kinetic, H.mean_field_tensor, phi0, times)
        psi = fock.coherent_state(np.sqrt(N) * phi0, basis)
        leak = psi.top_sector_weight()
        if leak > leak_budget:
            raise fock.LeakBudgetError(f"coherent state leak {leak:.2e} exceeds budget at N={N}")
        t_prev = 0.0
        for t in times:
            psi = evolve_state(H, psi, t - t_prev)
            t_prev = t
            gamma = fock.reduced_density_1(psi)
            dist = fock.trace_norm_distance(gamma, fock.condensate_density(phi_at(t), N))
            rows.append({"N": N, "t": t, "trace_distance": dist, "relative_distance": dist / N,
                         "leak": max(leak, psi.top_sector_weight())})
    return rows
