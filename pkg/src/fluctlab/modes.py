"""Real orthonormal plane-wave modes on the periodic box ``[0, L)^d``.

Mode 0 is the constant; further modes come in ``cos``/``sin`` pairs ordered by
``|k|^2``.  Real modes keep the complex conjugate of a function equal to the
entrywise conjugate of its coefficient vector, which the Bogoliubov formulas
rely on.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


def _half_space_vectors(d, radius):
    out = []
    for n in itertools.product(range(-radius, radius + 1), repeat=d):
        n = np.array(n)
        nz = np.nonzero(n)[0]
        if len(nz) == 0 or n[nz[0]] < 0:
            continue
        out.append(tuple(int(v) for v in n))
    out.sort(key=lambda v: (sum(c * c for c in v), tuple(-c for c in v)))
    return out


@dataclass(frozen=True)
class TorusModes:
    dim: int
    box_length: float
    M: int

    def __post_init__(self):
        if self.dim not in (1, 3):
            raise ValueError("torus dimension must be 1 or 3")
        if self.M < 1:
            raise ValueError("need at least one mode")

    @property
    def labels(self):
        """``(kind, n)`` for each mode, ``kind`` in {'const', 'cos', 'sin'}."""
        labels = [("const", (0,) * self.dim)]
        radius = 1
        while True:
            vecs = _half_space_vectors(self.dim, radius)
            if 1 + 2 * len(vecs) >= self.M or radius > 64:
                break
            radius += 1
        for n in vecs:
            labels.append(("cos", n))
            labels.append(("sin", n))
        return labels[: self.M]

    @property
    def wavevectors(self) -> np.ndarray:
        return np.array([n for _, n in self.labels], dtype=float) * (2 * np.pi / self.box_length)

    @property
    def kinetic(self) -> np.ndarray:
        """Eigenvalues of ``-Laplacian`` on each mode."""
        return (self.wavevectors**2).sum(axis=1)

    @property
    def max_index(self) -> int:
        return max(max(abs(c) for c in n) for _, n in self.labels)

    def evaluate(self, points) -> np.ndarray:
        """Mode functions at ``points`` (shape ``(P, d)`` or ``(P,)`` in 1D), shape ``(P, M)``."""
        x = np.asarray(points, dtype=float)
        if self.dim == 1:
            x = x.reshape(-1, 1)
        L = self.box_length
        vol = L**self.dim
        cols = []
        for kind, n in self.labels:
            if kind == "const":
                cols.append(np.full(x.shape[0], 1 / np.sqrt(vol)))
                continue
            arg = x @ (np.array(n, dtype=float) * 2 * np.pi / L)
            trig = np.cos if kind == "cos" else np.sin
            cols.append(np.sqrt(2 / vol) * trig(arg))
        return np.column_stack(cols)

    def grid_points(self, G: int) -> np.ndarray:
        x1 = np.arange(G) * (self.box_length / G)
        if self.dim == 1:
            return x1
        X = np.stack(np.meshgrid(x1, x1, x1, indexing="ij"), axis=-1)
        return X.reshape(-1, 3)

    def min_grid(self) -> int:
        """Smallest power-of-two grid exact for products of four mode functions."""
        G = 8
        while G < 4 * self.max_index + 2:
            G *= 2
        return G

    def project(self, values, G: int) -> np.ndarray:
        """Coefficients ``<e_p, f>`` of grid samples ``values`` (flattened ``G^d`` array)."""
        E = self.evaluate(self.grid_points(G))
        dV = (self.box_length / G) ** self.dim
        return E.T @ np.asarray(values).reshape(-1) * dV

    def synthesize(self, coeffs, points) -> np.ndarray:
        return self.evaluate(points) @ np.asarray(coeffs)
