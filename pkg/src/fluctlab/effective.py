"""One-particle effective equations on the periodic box.

Strang split-step spectral integration for the Hartree, cubic NLS,
Gross-Pitaevskii and modified (N-dependent) variants, the associated energy
functionals and a normalized descent for their minimizers.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .grid import GridField, minimal_image
from .potentials import RadialPotential

log = logging.getLogger(__name__)

VARIANTS = ("hartree", "cubic_nls", "gross_pitaevskii", "modified_gp", "modified_nls")
LOCAL_VARIANTS = ("cubic_nls", "gross_pitaevskii")
CONVENTIONS = ("paper_functional", "conserved")
OVERFLOW_GUARD = 1e8


class GridMismatchError(ValueError):
    pass


class BlowUpError(FloatingPointError):
    pass


class IterationCapError(RuntimeError):
    pass


@dataclass
class EffectiveEquationSpec:
    """Which nonlinearity drives the flow.

    Local variants use ``coupling * |phi|^2``; the others convolve
    ``|phi|^2`` with ``convolution_kernel`` (samples of an even function on
    the simulation grid, origin at index 0).
    """

    variant: str
    coupling: Optional[float] = None
    convolution_kernel: Optional[np.ndarray] = field(default=None, repr=False)
    scale_N: Optional[float] = None
    beta: Optional[float] = None
    ell: Optional[float] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant in LOCAL_VARIANTS:
            if self.coupling is None:
                raise ValueError(f"{self.variant} needs a scalar coupling")
            if self.convolution_kernel is not None:
                raise ValueError(f"{self.variant} is local; drop the convolution kernel")
        else:
            if self.convolution_kernel is None:
                raise ValueError(f"{self.variant} needs a convolution kernel")
            self.convolution_kernel = np.asarray(self.convolution_kernel, dtype=float)
        if self.variant.startswith("modified") and self.scale_N is None:
            raise ValueError("modified variants record the scale N")

    @property
    def is_local(self) -> bool:
        return self.variant in LOCAL_VARIANTS

    def check_grid(self, phi: GridField):
        if not self.is_local and self.convolution_kernel.shape != phi.values.shape:
            raise GridMismatchError(
                f"kernel sampled on {self.convolution_kernel.shape}, field on {phi.values.shape}")

    def kernel_integral(self, phi: GridField) -> float:
        return float(np.sum(self.convolution_kernel) * phi.cell_volume)

    @property
    def quartic_coefficient(self) -> float:
        """Scalar multiplying ``int |phi|^4`` in the functional as printed."""
        if self.coupling is not None:
            return float(self.coupling)
        raise ValueError("paper_functional needs a scalar coupling; set `coupling` (int V) on the spec")


# -- kernels ----------------------------------------------------------------

def sample_radial(fn, G: int, box_length: float, dimension: int = 1) -> np.ndarray:
    """``fn(|x|)`` at grid points, with ``x`` the minimal-image displacement from the origin."""
    x = minimal_image(np.arange(G) * box_length / G, box_length)
    if dimension == 1:
        r = np.abs(x)
    else:
        X = np.meshgrid(x, x, x, indexing="ij")
        r = np.sqrt(sum(xi**2 for xi in X))
    return np.asarray(fn(r), dtype=float)


def kernel_from_fourier(w_hat, G: int, box_length: float, dimension: int = 1) -> np.ndarray:
    """Grid samples of the periodized radial kernel whose continuum transform is ``w_hat(|k|)``.

    The samples are band-limited (their DFT reproduces ``w_hat`` at the grid
    wavenumbers), so spectral convolution with them sums all periodic images
    without aliasing a narrow kernel.
    """
    k1 = 2 * np.pi * np.fft.fftfreq(G, d=box_length / G)
    kk = np.meshgrid(*([k1] * dimension), indexing="ij")
    kabs = np.sqrt(sum(k**2 for k in kk))
    uniq, inv = np.unique(np.round(kabs, 12), return_inverse=True)
    vals = np.asarray(w_hat(uniq), dtype=float)[inv].reshape(kabs.shape)
    dV = (box_length / G) ** dimension
    return np.fft.ifftn(vals).real / dV


def scaled_kernel(V: RadialPotential, N: float, beta: float, G: int, box_length: float,
                  dimension: int = 1) -> np.ndarray:
    """Periodized ``N^(d beta) V(N^beta x)`` (mean-field to NLS kernel)."""
    s = float(N) ** beta
    return kernel_from_fourier(lambda q: V.fourier(q / s, dimension), G, box_length, dimension)


def _radial_product(V: RadialPotential, s: float, dimension: int, g) -> RadialPotential:
    return RadialPotential(lambda r: s**dimension * V(s * r) * g(r), V.support_radius / s, 1.0, "kernel")


def modified_nls_kernel(V: RadialPotential, N: float, beta: float, ell: float, G: int, box_length: float,
                        dimension: int = 1, cell=None) -> np.ndarray:
    """Periodized ``N^(d beta) V(N^beta x) f_{N,ell}(x)``."""
    from .scattering import solve_neumann_cell

    if cell is None:
        cell = solve_neumann_cell(V, N, beta, ell, dimension)
    w = _radial_product(V, float(N) ** beta, dimension, cell.f)
    return kernel_from_fourier(lambda q: w.fourier(q, dimension), G, box_length, dimension)


def modified_gp_kernel(V: RadialPotential, N: float, G: int, box_length: float, solution=None) -> np.ndarray:
    """Periodized ``N^3 V(N x) f(N x)`` in 3D, ``f`` the zero-energy scattering solution."""
    from .scattering import solve_zero_energy

    if solution is None:
        solution = solve_zero_energy(V, r_max=2 * V.support_radius)
    w = _radial_product(V, float(N), 3, lambda r: solution.f(N * r))
    return kernel_from_fourier(lambda q: w.fourier(q, 3), G, box_length, 3)


def make_spec(variant: str, V: RadialPotential, G: int, box_length: float, dimension: int = 1,
              N: Optional[float] = None, beta: float = 0.0, ell: Optional[float] = None,
              coupling: Optional[float] = None) -> EffectiveEquationSpec:
    """Build a spec from a pair potential with the conventional couplings and kernels."""
    if variant == "cubic_nls":
        return EffectiveEquationSpec(variant, coupling=V.integral(dimension) if coupling is None else coupling)
    if variant == "gross_pitaevskii":
        if coupling is None:
            from .scattering import solve_zero_energy
            coupling = 8 * np.pi * solve_zero_energy(V, r_max=2 * V.support_radius).scattering_length
        return EffectiveEquationSpec(variant, coupling=coupling)
    int_V = V.integral(dimension)
    if variant == "hartree":
        ker = scaled_kernel(V, 1.0 if N is None else N, beta, G, box_length, dimension)
        return EffectiveEquationSpec(variant, coupling=int_V, convolution_kernel=ker, scale_N=N, beta=beta)
    if N is None:
        raise ValueError(f"{variant} needs N")
    if variant == "modified_nls":
        if ell is None:
            raise ValueError("modified_nls needs ell")
        ker = modified_nls_kernel(V, N, beta, ell, G, box_length, dimension)
        return EffectiveEquationSpec(variant, coupling=int_V, convolution_kernel=ker, scale_N=N, beta=beta, ell=ell)
    if dimension != 3:
        raise ValueError("modified_gp uses the 3D scattering solution")
    ker = modified_gp_kernel(V, N, G, box_length)
    return EffectiveEquationSpec(variant, coupling=int_V, convolution_kernel=ker, scale_N=N, beta=1.0)


# -- flow -------------------------------------------------------------------

class _Stepper:
    def __init__(self, spec: EffectiveEquationSpec, phi: GridField):
        spec.check_grid(phi)
        self.spec = spec
        self.k2 = phi.k_squared()
        self.dV = phi.cell_volume
        self.kernel_hat = None if spec.is_local else np.fft.fftn(spec.convolution_kernel) * self.dV

    def potential(self, values) -> np.ndarray:
        rho = np.abs(values) ** 2
        if self.spec.is_local:
            return self.spec.coupling * rho
        return np.fft.ifftn(self.kernel_hat * np.fft.fftn(rho)).real

    def nonlinear(self, values, tau):
        peak = np.max(np.abs(values))
        if not np.isfinite(peak) or peak > OVERFLOW_GUARD:
            raise BlowUpError(f"field amplitude {peak:.3e} exceeded the overflow guard")
        return values * np.exp(-1j * tau * self.potential(values))

    def kinetic(self, values, phase):
        return np.fft.ifftn(phase * np.fft.fftn(values))


@dataclass
class Trajectory:
    times: np.ndarray
    fields: list

    def masses(self) -> np.ndarray:
        return np.array([f.norm() ** 2 for f in self.fields])

    def to_csv(self, path):
        write_trajectory_csv(path, self)


def _sample_steps(sample_times, t_final, dt, n_steps):
    if sample_times is None:
        return {0: 0.0, n_steps: t_final}
    out = {}
    for t in sample_times:
        k = int(round(t / dt))
        if not 0 <= k <= n_steps or abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"sample time {t} is not a step multiple within [0, t_final]")
        out[k] = float(t)
    return out


def evolve(spec: EffectiveEquationSpec, phi0: GridField, t_final: float, dt: float,
           sample_times: Optional[Sequence[float]] = None, norm_tol: float = 1e-8) -> Trajectory:
    """Strang split-step flow: half nonlinear, full kinetic, half nonlinear.

    The nonlinear substep is solved exactly (it leaves ``|phi|`` unchanged).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if abs(phi0.norm() - 1.0) > norm_tol:
        raise ValueError("initial field is not normalized")
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError("t_final must be an integer number of steps")
    wanted = _sample_steps(sample_times, t_final, dt, n_steps)
    st = _Stepper(spec, phi0)
    phase = np.exp(-1j * dt * st.k2)
    psi = phi0.values.copy()
    times, fields = [], []

    def emit(t):
        times.append(t)
        fields.append(GridField(psi.copy(), phi0.box_length, phi0.dimension))

    if 0 in wanted:
        emit(wanted[0])
    for n in range(1, n_steps + 1):
        psi = st.nonlinear(psi, 0.5 * dt)
        psi = st.kinetic(psi, phase)
        psi = st.nonlinear(psi, 0.5 * dt)
        if n in wanted:
            emit(wanted[n])
    return Trajectory(np.array(times), fields)


# -- energies ----------------------------------------------------------------

def _kinetic_energy(phi: GridField) -> float:
    spec = np.fft.fftn(phi.values)
    return float(np.sum(phi.k_squared() * np.abs(spec) ** 2) * phi.cell_volume / phi.values.size)


def energy(phi: GridField, spec: EffectiveEquationSpec, convention: str = "conserved") -> float:
    """``paper_functional``: ``int |grad phi|^2 + g int |phi|^4`` with ``g`` the spec coupling.

    ``conserved``: the Hamiltonian of the flow, ``int |grad phi|^2 + (g/2) int |phi|^4``
    for local variants and ``int |grad phi|^2 + (1/2) int int w(x-y) |phi(x)|^2 |phi(y)|^2``
    for convolution variants.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    spec.check_grid(phi)
    kin = _kinetic_energy(phi)
    rho = np.abs(phi.values) ** 2
    if convention == "paper_functional":
        return kin + spec.quartic_coefficient * float(np.sum(rho**2) * phi.cell_volume)
    if spec.is_local:
        return kin + 0.5 * spec.coupling * float(np.sum(rho**2) * phi.cell_volume)
    pot = _Stepper(spec, phi).potential(phi.values)
    return kin + 0.5 * float(np.sum(pot * rho) * phi.cell_volume)


def energy_gradient(phi: GridField, spec: EffectiveEquationSpec, convention: str = "conserved") -> np.ndarray:
    """``g`` with ``dE = 2 Re int conj(g) dphi``: the derivative with respect to ``conj(phi)``."""
    lap = np.fft.ifftn(phi.k_squared() * np.fft.fftn(phi.values))
    rho = np.abs(phi.values) ** 2
    if convention == "paper_functional":
        return lap + 2 * spec.quartic_coefficient * rho * phi.values
    if spec.is_local:
        return lap + spec.coupling * rho * phi.values
    return lap + _Stepper(spec, phi).potential(phi.values) * phi.values


@dataclass
class MinimizationResult:
    field: GridField
    energies: np.ndarray
    gradient_norm: float
    iterations: int


def _inner(a, b, dV):
    return np.sum(np.conj(a) * b) * dV


def minimize_energy(spec: EffectiveEquationSpec, init: GridField, tol: float = 1e-8,
                    convention: str = "paper_functional", max_iter: int = 5000, step: float = 1.0,
                    armijo: float = 1e-4) -> MinimizationResult:
    """Preconditioned projected-gradient descent on the unit sphere with Armijo backtracking.

    Every accepted step lowers the energy, so the recorded sequence is
    nonincreasing.  Stops once the tangential gradient has L2 norm ``<= tol``.
    """
    if (spec.coupling or 0.0) < 0 or (not spec.is_local and np.any(spec.convolution_kernel < 0)):
        raise ValueError("attractive couplings are not supported")
    if abs(init.norm() - 1.0) > 1e-8:
        raise ValueError("initial field is not normalized")
    dV = init.cell_volume
    precond = 1.0 / (1.0 + init.k_squared())
    phi = init
    E = energy(phi, spec, convention)
    energies = [E]
    tau = step
    for it in range(max_iter):
        g = energy_gradient(phi, spec, convention)
        mu = _inner(phi.values, g, dV).real
        tangent = g - mu * phi.values
        gnorm = float(np.sqrt(_inner(tangent, tangent, dV).real))
        if gnorm <= tol:
            return MinimizationResult(phi, np.array(energies), gnorm, it)
        d = -np.fft.ifftn(precond * np.fft.fftn(tangent))
        d = d - _inner(phi.values, d, dV).real * phi.values
        slope = 2 * _inner(g, d, dV).real
        if slope >= 0:
            d, slope = -tangent, -2 * gnorm**2
        tau = min(1.0, 2 * tau)
        while True:
            trial = GridField(phi.values + tau * d, phi.box_length, phi.dimension).normalized()
            E_trial = energy(trial, spec, convention)
            if E_trial <= E + armijo * tau * slope:
                break
            tau *= 0.5
            if tau < 1e-16:
                # no representable decrease left: the energy is flat to roundoff here
                return MinimizationResult(phi, np.array(energies), gnorm, it)
        phi, E = trial, E_trial
        energies.append(E)
    raise IterationCapError(f"minimize_energy did not reach tol={tol} in {max_iter} iterations")


# -- io ------------------------------------------------------------------------

def write_trajectory_csv(path, traj: Trajectory):
    """Rows ``t, index, re, im`` with the flat (C-order) grid index."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "index", "re", "im"])
        for t, f in zip(traj.times, traj.fields):
            flat = f.values.reshape(-1)
            for i, z in enumerate(flat):
                w.writerow([repr(float(t)), i, repr(float(z.real)), repr(float(z.imag))])
