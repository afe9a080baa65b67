"""Zero-energy scattering, the Neumann cell problem, and pair-correlation kernels.

Radial conventions: in 3D the ODEs are written for ``u = r f``, so the
zero-energy equation ``(-Laplacian + V/2) f = 0`` becomes ``u'' = V u / 2``
with ``u(0) = 0``.  Outside the support ``u`` is affine, ``u = A (r - a0)``,
which fixes the scattering length by matching.  In 1D only the cell problem is
meaningful and is solved directly for the even profile ``f`` on ``[0, ell]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.integrate import solve_ivp

from .grid import GridField, minimal_image
from .modes import TorusModes
from .potentials import RadialPotential

RTOL = 1e-10
EIG_TOL = 1e-10


class ScatteringError(RuntimeError):
    """ODE integration or eigenvalue search failed to converge."""


def scaled_potential(V: RadialPotential, N: float, beta: float, dim: int = 3) -> RadialPotential:
    """``N^(dim*beta - 1) V(N^beta x)`` as a new radial potential."""
    s = float(N) ** beta
    amp = float(N) ** (dim * beta - 1)
    return RadialPotential(
        lambda r: V.profile(np.asarray(r) * s),
        V.support_radius / s,
        V.strength * amp,
        f"{V.name}[N={N},beta={beta},d={dim}]",
        tuple(k / s for k in V.kinks),
    )


@dataclass
class ScatteringSolution:
    radial_grid: np.ndarray
    f_values: np.ndarray
    scattering_length: float
    # far-field matching value u(R) = A (R - a0); the integral identity gives scattering_length
    asymptotic_length: float
    fitted_length: float
    potential_integral_f: float
    support_radius: float
    _inner: Optional[Callable] = field(default=None, repr=False)
    _amplitude: float = 1.0

    @property
    def omega_values(self) -> np.ndarray:
        return 1.0 - self.f_values

    def f(self, r) -> np.ndarray:
        r = np.abs(np.asarray(r, dtype=float))
        out = 1.0 - self.asymptotic_length / np.where(r > 0, r, 1.0)
        if self._inner is not None:
            inside = r <= self.support_radius
            if np.any(inside):
                ri = r[inside]
                u = self._inner(ri)[0]
                with np.errstate(invalid="ignore", divide="ignore"):
                    fi = np.where(ri > 0, u / np.where(ri > 0, ri, 1.0), 1.0) / self._amplitude
                out = np.array(out, dtype=float)
                out[inside] = fi
        return out

    def omega(self, r) -> np.ndarray:
        return 1.0 - self.f(r)

    def summary(self) -> dict:
        return {"a0": self.scattering_length, "a0_far_field": self.asymptotic_length}


def _free_solution(r_max, resolution, support):
    grid = np.linspace(0.0, r_max, resolution)
    return ScatteringSolution(grid, np.ones_like(grid), 0.0, 0.0, 0.0, 0.0, support)


def solve_zero_energy(V: RadialPotential, r_max: float, resolution: int = 2001, rtol: float = RTOL) -> ScatteringSolution:
    """Radial solution of ``(-Laplacian + V/2) f = 0`` in 3D with ``f -> 1`` at infinity."""
    V.check_nonnegative()
    R = V.support_radius
    if not r_max > R:
        raise ValueError(f"r_max={r_max} must exceed the support radius {R}")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if V.is_zero:
        return _free_solution(r_max, resolution, R)

    def rhs(r, y):
        u, du, _ = y
        v = V(r)
        return [du, 0.5 * v * u, r * v * u]

    sol = solve_ivp(rhs, (0.0, R), [0.0, 1.0, 0.0], method="DOP853", rtol=rtol, atol=1e-14 * R,
                    dense_output=True, max_step=R / 64)
    if sol.status != 0:
        raise ScatteringError(f"zero-energy integration failed: {sol.message}")
    uR, duR, I = sol.y[:, -1]
    A = duR
    a_match = R - uR / duR
    int_Vf = 4 * np.pi * I / A
    a_int = int_Vf / (8 * np.pi)

    grid = np.linspace(0.0, r_max, resolution)
    out = ScatteringSolution(grid, np.empty_like(grid), a_int, a_match, np.nan, int_Vf, R,
                             _inner=sol.sol, _amplitude=A)
    out.f_values = out.f(grid)
    outer = grid[grid > R]
    if len(outer) >= 2:
        w = 1.0 / outer
        out.fitted_length = float(np.sum((1.0 - out.f_values[grid > R]) * w) / np.sum(w * w))
    else:
        out.fitted_length = a_match
    return out


def scaled_scattering_profile(V: RadialPotential, N: float, beta: float, r_max_factor: float = 20.0,
                              resolution: int = 4001, rtol: float = RTOL) -> ScatteringSolution:
    """Zero-energy solution for the scaled potential ``N^(3 beta - 1) V(N^beta x)``."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if N < 2:
        raise ValueError("N must be >= 2")
    Vs = scaled_potential(V, N, beta, 3)
    return solve_zero_energy(Vs, r_max_factor * Vs.support_radius, resolution, rtol)


def decay_bound_sup(sol: ScatteringSolution, N: float, beta: float) -> float:
    """``sup_x N (|x| + N^-beta) (1 - f)(x)`` over the solution grid."""
    r = sol.radial_grid
    return float(np.max(N * (r + float(N) ** (-beta)) * (1.0 - sol.f_values)))


@dataclass
class NeumannCell:
    ell: float
    eigenvalue: float
    radial_grid: np.ndarray
    f_values: np.ndarray
    scale_N: float
    beta: float
    dim: int
    support_radius: float
    coupling_integral: float  # int v_N f over the cell, v_N the scaled potential
    _inner: Optional[Callable] = field(default=None, repr=False)
    _norm: float = 1.0
    _edge: tuple = (1.0, 0.0)

    def f(self, r) -> np.ndarray:
        r = np.abs(np.asarray(r, dtype=float))
        out = np.ones_like(r)
        if self._inner is None:
            return out
        Rs = self.support_radius
        k = np.sqrt(self.eigenvalue)
        mid = (r > Rs) & (r < self.ell)
        s = r[mid] - Rs
        y0, dy0 = self._edge
        if k > 0:
            y = y0 * np.cos(k * s) + dy0 * np.sin(k * s) / k
        else:
            y = y0 + dy0 * s
        if self.dim == 3:
            y = y / r[mid]
        out[mid] = y / self._norm
        inside = r <= Rs
        if np.any(inside):
            ri = r[inside]
            y = self._inner(ri)[0]
            if self.dim == 3:
                with np.errstate(invalid="ignore", divide="ignore"):
                    y = np.where(ri > 0, y / np.where(ri > 0, ri, 1.0), self._inner(0.0)[1])
            out[inside] = y / self._norm
        return out

    def omega(self, r) -> np.ndarray:
        return 1.0 - self.f(r)

    @property
    def omega_values(self) -> np.ndarray:
        return 1.0 - self.f_values

    def summary(self) -> dict:
        return {"lambda": self.eigenvalue, "N": self.scale_N, "beta": self.beta, "ell": self.ell}


def _cell_interior(Vs, lam, dim, rtol, max_step, with_integral=False):
    Rs = Vs.support_radius
    if dim == 3:
        def rhs(r, y):
            v = Vs(r)
            d = [y[1], (0.5 * v - lam) * y[0]]
            if with_integral:
                d.append(r * v * y[0])
            return d
        y0 = [0.0, 1.0]
    else:
        def rhs(r, y):
            v = Vs(r)
            d = [y[1], (0.5 * v - lam) * y[0]]
            if with_integral:
                d.append(v * y[0])
            return d
        y0 = [1.0, 0.0]
    if with_integral:
        y0 = y0 + [0.0]
    sol = solve_ivp(rhs, (0.0, Rs), y0, method="DOP853", rtol=rtol, atol=1e-14, dense_output=with_integral,
                    max_step=max_step)
    if sol.status != 0:
        raise ScatteringError(f"cell integration failed: {sol.message}")
    return sol


def _exterior(y0, dy0, lam, s):
    k = np.sqrt(lam)
    if k > 0:
        return y0 * np.cos(k * s) + dy0 * np.sin(k * s) / k, -y0 * k * np.sin(k * s) + dy0 * np.cos(k * s)
    return y0 + dy0 * s, dy0


def solve_neumann_cell(V: RadialPotential, N: float, beta: float, ell: float, dim: int = 3,
                       resolution: int = 2001, rtol: float = RTOL, eig_tol: float = EIG_TOL) -> NeumannCell:
    """Lowest eigenpair of ``[-Laplacian + v_N/2] f = lambda f`` on the ball ``|x| <= ell``.

    ``v_N = N^(dim*beta - 1) V(N^beta x)``; Neumann condition at ``|x| = ell``,
    normalized to ``f = 1`` there and continued by 1 outside.  ``resolution``
    sets the interior step cap (``support / resolution``) and the output grid.
    """
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1)")
    if dim not in (1, 3):
        raise ValueError("dim must be 1 or 3")
    V.check_nonnegative()
    Vs = scaled_potential(V, N, beta, dim)
    Rs = Vs.support_radius
    if not ell > Rs:
        raise ValueError(f"ell={ell} lies inside the scaled potential support {Rs}")
    grid = np.linspace(0.0, ell, resolution)
    if V.is_zero:
        return NeumannCell(ell, 0.0, grid, np.ones_like(grid), N, beta, dim, Rs, 0.0)
    max_step = Rs / max(resolution // 16, 8)

    def residual(lam):
        sol = _cell_interior(Vs, lam, dim, rtol, max_step)
        y, dy = _exterior(sol.y[0, -1], sol.y[1, -1], lam, ell - Rs)
        return ell * dy - y if dim == 3 else dy

    volume = 4 * np.pi * ell**3 / 3 if dim == 3 else 2 * ell
    cell_int = Vs.integral(dim)
    lam_hi = 0.5 * cell_int / volume * (1 + 1e-6) + 1e-300
    first_excited = (4.4934094579 / ell) ** 2 if dim == 3 else (np.pi / ell) ** 2
    f0 = residual(0.0)
    fh = residual(lam_hi)
    tries = 0
    while np.sign(fh) == np.sign(f0):
        lam_hi *= 1.5
        tries += 1
        if lam_hi > first_excited or tries > 200:
            raise ScatteringError("could not bracket the lowest cell eigenvalue")
        fh = residual(lam_hi)
    lam = optimize.brentq(residual, 0.0, lam_hi, xtol=eig_tol * 1e-3 * max(lam_hi, 1e-300), rtol=1e-15,
                          maxiter=500)

    sol = _cell_interior(Vs, lam, dim, rtol, max_step, with_integral=True)
    y0, dy0, I = sol.y[:, -1]
    y_ell, _ = _exterior(y0, dy0, lam, ell - Rs)
    norm = y_ell / ell if dim == 3 else y_ell
    coupling = (4 * np.pi * I if dim == 3 else 2 * I) / norm
    cell = NeumannCell(ell, float(lam), grid, np.empty_like(grid), N, beta, dim, Rs, float(coupling),
                       _inner=sol.sol, _norm=norm, _edge=(y0, dy0))
    cell.f_values = cell.f(grid)
    return cell


def modified_coupling(V: RadialPotential, N: float, beta: float, ell: float, dim: int = 3, **kw) -> float:
    """``int N^(dim*beta) V(N^beta x) f_{N,ell}(x) dx``, which tends to ``int V`` as ``N`` grows."""
    cell = solve_neumann_cell(V, N, beta, ell, dim, **kw)
    return float(N) * cell.coupling_integral


# -- correlation kernels ----------------------------------------------------

@dataclass
class CorrelationKernel:
    kernel_matrix: np.ndarray  # mode-basis pair matrix K_pq
    variant: str
    hs_norm: float  # continuum Hilbert-Schmidt norm from the grid samples
    grid_kernel: Optional[np.ndarray] = field(default=None, repr=False)

    def symmetry_defect(self) -> float:
        out = float(np.abs(self.kernel_matrix - self.kernel_matrix.T).max())
        if self.grid_kernel is not None:
            out = max(out, float(np.abs(self.grid_kernel - self.grid_kernel.T).max()))
        return out


VARIANTS = ("gp_product", "ell_midpoint")


def _check_normalized(phi: GridField, tol=1e-8):
    if abs(phi.norm() - 1.0) > tol:
        raise ValueError(f"phi must be normalized, ||phi|| = {phi.norm():.12g}")


def build_kernel(phi: GridField, N: float, variant: str, *, modes: Optional[TorusModes] = None,
                 omega: Optional[Callable] = None, cell: Optional[NeumannCell] = None) -> CorrelationKernel:
    """Pair-correlation kernel sampled on the grid of ``phi`` and projected onto ``modes``.

    ``gp_product``: ``k(x,y) = -N omega(N(x-y)) phi(x) phi(y)`` with ``omega``
    a radial profile (``ScatteringSolution.omega``).  ``ell_midpoint``:
    ``k(x,y) = -N omega_cell(x-y) phi((x+y)/2)^2`` with ``omega_cell`` from
    ``cell``.  Differences are taken as minimal periodic images, and the
    midpoint is ``x + (y-x)/2`` along that image.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown kernel variant {variant!r}")
    if phi.dimension != 1:
        raise ValueError("kernels are built for 1D fields only")
    _check_normalized(phi)
    G = phi.points_per_axis
    L = phi.box_length
    x = phi.axis()
    steps = (np.arange(G)[None, :] - np.arange(G)[:, None] + G // 2) % G - G // 2  # j - i, minimal image
    d = steps * phi.dx
    if variant == "gp_product":
        if omega is None:
            raise ValueError("gp_product needs an omega profile")
        k = -N * omega(N * np.abs(d)) * np.outer(phi.values, phi.values)
    else:
        if cell is None:
            raise ValueError("ell_midpoint needs NeumannCell data")
        fine = phi.refined(2).values
        mid = (2 * np.arange(G)[:, None] + steps) % (2 * G)
        k = -N * cell.omega(np.abs(d)) * fine[mid] ** 2
    k = 0.5 * (k + k.T)
    hs = float(np.sqrt(np.sum(np.abs(k) ** 2)) * phi.dx)
    if modes is None:
        modes = TorusModes(1, L, 3)
    E = modes.evaluate(x)
    K = E.T @ k @ E * phi.dx**2
    K = 0.5 * (K + K.T)
    return CorrelationKernel(K, variant, hs, k)


class ModeKernel:
    """Fast ``phi -> K`` map for mode-space trajectories (same quadrature as :func:`build_kernel`).

    ``phi`` is a coefficient vector in ``modes``; the field is evaluated
    exactly at grid points and periodic midpoints from its mode expansion.
    """

    def __init__(self, modes: TorusModes, N: float, variant: str, G: int = 128,
                 omega: Optional[Callable] = None, cell: Optional[NeumannCell] = None):
        if modes.dim != 1:
            raise ValueError("mode kernels are 1D only")
        self.modes, self.N, self.variant, self.G = modes, N, variant, G
        L = modes.box_length
        dx = L / G
        x = np.arange(G) * dx
        steps = (np.arange(G)[None, :] - np.arange(G)[:, None] + G // 2) % G - G // 2
        d = steps * dx
        self.E = modes.evaluate(x)  # (G, M)
        self.dx = dx
        if variant == "gp_product":
            if omega is None:
                raise ValueError("gp_product needs an omega profile")
            self.weights = -N * omega(N * np.abs(d))
        elif variant == "ell_midpoint":
            if cell is None:
                raise ValueError("ell_midpoint needs NeumannCell data")
            self.weights = -N * cell.omega(np.abs(d))
            mid = minimal_image(x[:, None] + 0.5 * d, L) % L
            self.E_mid = modes.evaluate(mid.reshape(-1)).reshape(G, G, modes.M)
        else:
            raise ValueError(f"unknown kernel variant {variant!r}")

    def grid_kernel(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=complex)
        if self.variant == "gp_product":
            vals = self.E @ phi
            k = self.weights * np.outer(vals, vals)
        else:
            k = self.weights * (self.E_mid @ phi) ** 2
        return 0.5 * (k + k.T)

    def __call__(self, phi) -> np.ndarray:
        k = self.grid_kernel(phi)
        K = self.E.T @ k @ self.E * self.dx**2
        return 0.5 * (K + K.T)
