"""Complex fields on a uniform periodic grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GridField:
    """Samples of a complex field on ``[0, L)^d`` with ``G`` points per axis."""

    values: np.ndarray
    box_length: float
    dimension: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.dimension not in (1, 3):
            raise ValueError("dimension must be 1 or 3")
        if self.values.ndim != self.dimension or len(set(self.values.shape)) != 1:
            raise ValueError(f"values must be a cubic {self.dimension}-d array, got shape {self.values.shape}")
        G = self.values.shape[0]
        if G & (G - 1):
            raise ValueError(f"grid size {G} is not a power of two")

    @property
    def points_per_axis(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return self.box_length / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dimension

    def axis(self) -> np.ndarray:
        return np.arange(self.points_per_axis) * self.dx

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.cell_volume))

    def normalized(self) -> "GridField":
        return GridField(self.values / self.norm(), self.box_length, self.dimension)

    def wavenumbers(self):
        """Angular wavenumber arrays broadcastable against ``values``."""
        k = 2 * np.pi * np.fft.fftfreq(self.points_per_axis, d=self.dx)
        if self.dimension == 1:
            return (k,)
        return tuple(np.meshgrid(k, k, k, indexing="ij"))

    def k_squared(self) -> np.ndarray:
        return sum(ki**2 for ki in self.wavenumbers())

    def refined(self, factor: int = 2) -> "GridField":
        """Trigonometric interpolation onto a grid ``factor`` times finer (exact for band-limited fields)."""
        G = self.points_per_axis
        Gf = G * factor
        spec = np.fft.fftn(self.values)
        pad = np.zeros((Gf,) * self.dimension, dtype=complex)
        idx = np.fft.fftfreq(G, d=1.0 / G).astype(int)
        if self.dimension == 1:
            pad[idx] = spec
            # split the Nyquist bin so the interpolant stays real for real input
            pad[-G // 2] = 0.5 * spec[G // 2]
            pad[G // 2] = 0.5 * spec[G // 2]
        else:
            ii = np.ix_(idx, idx, idx)
            pad[ii] = spec
        return GridField(np.fft.ifftn(pad) * factor**self.dimension, self.box_length, self.dimension)


def minimal_image(d, L):
    """Map displacements into ``[-L/2, L/2)``."""
    return (np.asarray(d) + 0.5 * L) % L - 0.5 * L


def gaussian_bump(G: int, box_length: float, width: float, center=None, momentum: float = 0.0, dimension: int = 1):
    """Normalized periodic Gaussian bump with optional phase gradient."""
    x = np.arange(G) * box_length / G
    c = 0.5 * box_length if center is None else center
    if dimension == 1:
        r2 = minimal_image(x - c, box_length) ** 2
        vals = np.exp(-r2 / (2 * width**2)) * np.exp(1j * momentum * x)
    else:
        X = np.meshgrid(x, x, x, indexing="ij")
        r2 = sum(minimal_image(xi - c, box_length) ** 2 for xi in X)
        vals = np.exp(-r2 / (2 * width**2)) * np.exp(1j * momentum * X[0])
    return GridField(vals, box_length, dimension).normalized()
