"""Spherically symmetric, compactly supported, nonnegative pair potentials."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate


@dataclass(frozen=True)
class RadialPotential:
    """``strength * profile(r)``, zero for ``r > support_radius``."""

    profile: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    strength: float = 1.0
    name: str = "custom"
    # interior points where the profile is not smooth (quadrature breakpoints)
    kinks: tuple = ()

    def __post_init__(self):
        if not (np.isfinite(self.support_radius) and self.support_radius > 0):
            raise ValueError("support radius must be positive and finite")

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        out = self.strength * np.asarray(self.profile(r), dtype=float)
        return np.where(r > self.support_radius, 0.0, out)

    @property
    def is_zero(self) -> bool:
        return self.strength == 0.0

    def check_nonnegative(self, samples: int = 2001):
        r = np.linspace(0.0, self.support_radius, samples)
        if np.any(self(r) < 0):
            raise ValueError(f"potential {self.name!r} is negative somewhere; attractive potentials are unsupported")

    def _quad(self, fn):
        pts = [p for p in self.kinks if 0 < p < self.support_radius] or None
        val, _ = integrate.quad(fn, 0.0, self.support_radius, points=pts, epsabs=1e-15, epsrel=1e-13, limit=400)
        return val

    def integral(self, dim: int = 3) -> float:
        """``int V(x) dx`` over R^dim."""
        if self.is_zero:
            return 0.0
        if dim == 3:
            return 4 * np.pi * self._quad(lambda r: self(r) * r * r)
        if dim == 1:
            return 2 * self._quad(self.__call__)
        raise ValueError("dim must be 1 or 3")

    def fourier(self, q, dim: int = 3) -> np.ndarray:
        """``int V(x) exp(-i q.x) dx`` as a function of ``|q|``."""
        q = np.atleast_1d(np.abs(np.asarray(q, dtype=float)))
        out = np.empty_like(q)
        with warnings.catch_warnings():
            # far tails are roundoff-level; quad reports them as tolerance misses
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            self._fourier_into(q, dim, out)
        return out

    def _fourier_into(self, q, dim, out):
        for i, qi in enumerate(q):
            if self.is_zero:
                out[i] = 0.0
            elif dim == 1:
                out[i] = 2 * self._quad(lambda r: self(r) * np.cos(qi * r))
            elif dim == 3:
                out[i] = 4 * np.pi * self._quad(lambda r: self(r) * r * r * np.sinc(qi * r / np.pi))
            else:
                raise ValueError("dim must be 1 or 3")


def zero_potential(support_radius: float = 1.0) -> RadialPotential:
    return RadialPotential(lambda r: np.zeros_like(r), support_radius, 0.0, "zero")


def square_well(V0: float, R: float) -> RadialPotential:
    """Constant ``V0`` on ``r <= R``."""
    return RadialPotential(lambda r: np.ones_like(r), R, V0, "square_well")


def smooth_bump(V0: float, R: float) -> RadialPotential:
    """C-infinity bump ``V0 exp(1 - 1/(1 - (r/R)^2))`` supported on ``r < R``."""

    def profile(r):
        s = np.clip(np.asarray(r) / R, 0.0, 1.0)
        with np.errstate(divide="ignore", over="ignore"):
            inner = 1.0 - 1.0 / np.where(s < 1.0, 1.0 - s * s, np.inf)
            return np.where(s < 1.0, np.exp(inner), 0.0)

    return RadialPotential(profile, R, V0, "smooth_bump")


def from_config(spec: dict) -> RadialPotential:
    kind = spec.get("kind", "smooth_bump")
    if kind == "zero":
        return zero_potential(float(spec.get("range", 1.0)))
    V0 = float(spec["strength"])
    R = float(spec["range"])
    if kind == "square_well":
        return square_well(V0, R)
    if kind == "smooth_bump":
        return smooth_bump(V0, R)
    raise ValueError(f"unknown potential kind {kind!r}")
