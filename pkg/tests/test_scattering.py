import numpy as np
import pytest
from scipy.optimize import brentq

from fluctlab.grid import GridField, gaussian_bump
from fluctlab.modes import TorusModes
from fluctlab.potentials import RadialPotential, smooth_bump, square_well, zero_potential
from fluctlab.scattering import (ModeKernel, build_kernel, decay_bound_sup, modified_coupling,
                                 scaled_potential, scaled_scattering_profile, solve_neumann_cell,
                                 solve_zero_energy)

WELLS = [(1.0, 1.0), (4.0, 0.5), (0.2, 2.0)]


def square_well_length(V0, R):
    kappa = np.sqrt(V0 / 2)
    return R - np.tanh(kappa * R) / kappa


@pytest.mark.parametrize("V0,R", WELLS)
def test_square_well_scattering_length(V0, R):
    sol = solve_zero_energy(square_well(V0, R), r_max=5 * R)
    assert sol.scattering_length == pytest.approx(square_well_length(V0, R), rel=1e-6)
    assert sol.asymptotic_length == pytest.approx(square_well_length(V0, R), rel=1e-6)


@pytest.mark.parametrize("V", [square_well(1.0, 1.0), smooth_bump(3.0, 0.7), smooth_bump(0.1, 2.0)])
def test_integral_identity_and_far_field_fit(V):
    sol = solve_zero_energy(V, r_max=10 * V.support_radius, resolution=8001)
    assert abs(8 * np.pi * sol.asymptotic_length - sol.potential_integral_f) <= 1e-8 * sol.potential_integral_f
    assert sol.fitted_length == pytest.approx(sol.potential_integral_f / (8 * np.pi), rel=1e-6)


def test_profile_bounds_and_omega():
    sol = solve_zero_energy(smooth_bump(5.0, 1.0), r_max=8.0)
    assert sol.f_values.min() >= 0.0 and sol.f_values.max() <= 1.0
    assert np.array_equal(sol.omega_values, 1.0 - sol.f_values)
    assert sol.f_values[-1] == pytest.approx(1 - sol.scattering_length / 8.0, rel=1e-8)


def test_free_scattering():
    sol = solve_zero_energy(zero_potential(), r_max=3.0)
    assert sol.scattering_length == 0.0
    assert np.all(sol.f_values == 1.0)
    prof = scaled_scattering_profile(zero_potential(), 100, 0.5)
    assert prof.scattering_length == 0.0


def test_scattering_input_errors():
    with pytest.raises(ValueError):
        solve_zero_energy(square_well(1.0, 1.0), r_max=0.5)
    with pytest.raises(ValueError):
        solve_zero_energy(RadialPotential(lambda r: -np.ones_like(r), 1.0), r_max=2.0)
    with pytest.raises(ValueError):
        scaled_scattering_profile(square_well(1.0, 1.0), 10, 1.2)


def test_scaled_potential_mass_scaling():
    V = smooth_bump(1.0, 1.0)
    for N, beta in [(10, 0.5), (100, 0.3)]:
        assert scaled_potential(V, N, beta, 3).integral(3) == pytest.approx(V.integral(3) / N, rel=1e-10)
        assert scaled_potential(V, N, beta, 1).integral(1) == pytest.approx(V.integral(1) / N, rel=1e-10)


def test_scaled_scattering_lengths_are_of_order_inverse_N():
    V = smooth_bump(0.5, 1.0)
    Na = [N * scaled_scattering_profile(V, N, 0.5).scattering_length for N in (10, 100, 1000)]
    assert max(Na) / min(Na) - 1 <= 0.02
    sups = [decay_bound_sup(scaled_scattering_profile(V, N, 0.5), N, 0.5) for N in (10, 100, 1000)]
    assert max(sups) / min(sups) - 1 <= 0.10


# -- cell problem --------------------------------------------------------------

def cell_eigenvalue_3d(v, Rs, ell):
    """Lowest eigenvalue for a 3D square well of height v and radius Rs in the cell of radius ell."""

    def resid(lam):
        q, k = np.sqrt(v / 2 - lam), np.sqrt(lam)
        u, du = np.sinh(q * Rs), q * np.cosh(q * Rs)
        s = ell - Rs
        ue = u * np.cos(k * s) + du * np.sin(k * s) / k
        due = -u * k * np.sin(k * s) + du * np.cos(k * s)
        return ell * due - ue

    return brentq(resid, 1e-14, min(v / 2, (4.49 / ell) ** 2) * (1 - 1e-12), xtol=1e-15, rtol=1e-14)


def cell_eigenvalue_1d(v, Rs, ell):
    def resid(lam):
        q, k = np.sqrt(v / 2 - lam), np.sqrt(lam)
        y, dy = np.cosh(q * Rs), q * np.sinh(q * Rs)
        s = ell - Rs
        return -y * k * np.sin(k * s) + dy * np.cos(k * s)

    return brentq(resid, 1e-14, min(v / 2, (np.pi / ell) ** 2) * (1 - 1e-12), xtol=1e-15, rtol=1e-14)


@pytest.mark.parametrize("N,beta,ell", [(10, 0.5, 1.0), (100, 0.3, 0.8), (1000, 0.5, 1.5)])
def test_square_well_cell_eigenvalues(N, beta, ell):
    V = square_well(1.0, 1.0)
    for dim, oracle in ((3, cell_eigenvalue_3d), (1, cell_eigenvalue_1d)):
        Vs = scaled_potential(V, N, beta, dim)
        expect = oracle(Vs.strength, Vs.support_radius, ell)
        cell = solve_neumann_cell(V, N, beta, ell, dim)
        assert cell.eigenvalue == pytest.approx(expect, rel=1e-8)
        assert cell.eigenvalue >= 0


@pytest.mark.parametrize("dim", [1, 3])
def test_cell_profile_is_one_outside_and_matches_at_edge(dim):
    cell = solve_neumann_cell(smooth_bump(1.0, 1.0), 50, 0.5, 1.0, dim)
    r = np.linspace(1.0, 3.0, 50)
    assert np.all(cell.f(r) == 1.0)
    assert cell.f(np.array([1.0 - 1e-9]))[0] == pytest.approx(1.0, abs=1e-8)
    h = 1e-5
    slope = (cell.f(np.array([1.0 - h]))[0] - cell.f(np.array([1.0 - 2 * h]))[0]) / h
    assert abs(slope) < 1e-3
    assert np.all((cell.f_values > 0) & (cell.f_values <= 1.0 + 1e-12))


def test_cell_eigenvalue_self_convergence():
    V = smooth_bump(1.0, 1.0)
    coarse = solve_neumann_cell(V, 100, 0.5, 1.0, 3, resolution=1001).eigenvalue
    fine = solve_neumann_cell(V, 100, 0.5, 1.0, 3, resolution=2001).eigenvalue
    assert abs(coarse - fine) <= 1e-6 * fine


def test_free_cell_and_errors():
    cell = solve_neumann_cell(zero_potential(), 10, 0.5, 1.0)
    assert cell.eigenvalue == 0.0 and np.all(cell.f_values == 1.0)
    with pytest.raises(ValueError):
        solve_neumann_cell(square_well(1.0, 1.0), 4, 0.5, 0.3)
    with pytest.raises(ValueError):
        solve_neumann_cell(square_well(1.0, 1.0), 4, 1.0, 2.0)


def test_modified_coupling_tends_to_integral():
    V = smooth_bump(0.5, 1.0)
    deficits = [V.integral(3) - modified_coupling(V, N, 0.5, 1.0) for N in (1e2, 1e3, 1e4)]
    assert all(d > 0 for d in deficits)
    assert deficits[0] > deficits[1] > deficits[2]


# -- kernels -------------------------------------------------------------------

@pytest.fixture(scope="module")
def phi():
    return gaussian_bump(64, 2 * np.pi, 0.9)


@pytest.fixture(scope="module")
def cell1d():
    return solve_neumann_cell(smooth_bump(1.0, 1.0), 8, 0.5, np.pi / 2, 1)


def test_zero_omega_gives_zero_kernel(phi):
    free = solve_neumann_cell(zero_potential(), 8, 0.5, 1.0, 1)
    k = build_kernel(phi, 8, "ell_midpoint", cell=free)
    assert np.all(k.kernel_matrix == 0) and k.hs_norm == 0
    k = build_kernel(phi, 8, "gp_product", omega=lambda r: np.zeros_like(r))
    assert np.all(k.kernel_matrix == 0)


def test_midpoint_kernel_vanishes_beyond_cell(phi, cell1d):
    k = build_kernel(phi, 8, "ell_midpoint", cell=cell1d)
    G = phi.points_per_axis
    steps = (np.arange(G)[None, :] - np.arange(G)[:, None] + G // 2) % G - G // 2
    far = np.abs(steps * phi.dx) > cell1d.ell
    assert np.all(k.grid_kernel[far] == 0)
    assert np.any(k.grid_kernel[~far] != 0)
    assert k.symmetry_defect() == 0.0


def test_gp_product_kernel_symmetry(phi):
    sol = solve_zero_energy(smooth_bump(1.0, 1.0), 20.0)
    k = build_kernel(phi, 8, "gp_product", omega=sol.omega)
    assert k.symmetry_defect() == 0.0
    assert np.isfinite(k.hs_norm) and k.hs_norm > 0


def test_kernel_hs_norm_stable_under_refinement(cell1d):
    norms = []
    for G in (64, 128, 256):
        norms.append(build_kernel(gaussian_bump(G, 2 * np.pi, 0.9), 8, "ell_midpoint", cell=cell1d).hs_norm)
    assert abs(norms[1] / norms[2] - 1) <= 0.01
    assert abs(norms[0] / norms[2] - 1) <= 0.01


def test_mode_kernel_matches_build_kernel(cell1d):
    modes = TorusModes(1, 2 * np.pi, 3)
    c = np.array([1.0, 0.5, 0.3j])
    c /= np.linalg.norm(c)
    G = 128
    field = GridField(modes.synthesize(c, modes.grid_points(G)), 2 * np.pi)
    K_build = build_kernel(field, 8, "ell_midpoint", modes=modes, cell=cell1d).kernel_matrix
    K_fast = ModeKernel(modes, 8, "ell_midpoint", G=G, cell=cell1d)(c)
    assert np.allclose(K_build, K_fast, atol=1e-12)
    assert np.allclose(K_fast, K_fast.T, atol=0)


def test_kernel_input_errors(phi, cell1d):
    with pytest.raises(ValueError):
        build_kernel(GridField(2 * phi.values, phi.box_length), 8, "ell_midpoint", cell=cell1d)
    with pytest.raises(ValueError):
        build_kernel(phi, 8, "ell_midpoint")
    with pytest.raises(ValueError):
        build_kernel(phi, 8, "gaussian")
