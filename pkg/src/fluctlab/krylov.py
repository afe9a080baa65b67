"""Krylov-subspace action of ``exp(-i t H)`` for sparse Hermitian ``H``."""
from __future__ import annotations

import logging

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)

KRYLOV_DIM = 30
DENSE_THRESHOLD = 200


class KrylovBreakdown(RuntimeError):
    pass


def _arnoldi(H, v, m):
    n = v.shape[0]
    beta = np.linalg.norm(v)
    V = np.zeros((n, m + 1), dtype=complex)
    T = np.zeros((m + 1, m), dtype=complex)
    V[:, 0] = v / beta
    for j in range(m):
        w = H @ V[:, j]
        for _ in range(2):  # reorthogonalize once; m is small
            h = V[:, : j + 1].conj().T @ w
            w = w - V[:, : j + 1] @ h
            T[: j + 1, j] += h
        T[j + 1, j] = np.linalg.norm(w)
        if T[j + 1, j] < 1e-13 * max(1.0, np.abs(T[: j + 1, j]).max()):
            return V[:, : j + 1], T[: j + 1, : j + 1], 0.0, beta, True
        V[:, j + 1] = w / T[j + 1, j]
    return V[:, :m], T[:m, :m], T[m, m - 1].real, beta, False


def expmv(H, v, t, m=KRYLOV_DIM, tol=1e-12, dense_threshold=DENSE_THRESHOLD, max_substeps=100000):
    """``exp(-i t H) v`` with adaptive substeps.

    Each substep keeps the standard a-posteriori error estimate
    ``beta h_{m+1,m} |[exp(-i tau T_m) e_1]_m|`` below ``tol * tau / |t|``.
    """
    v = np.asarray(v, dtype=complex)
    if t == 0 or not np.any(v):
        return v.copy()
    n = v.shape[0]
    m = min(m, n)
    w = v.copy()
    remaining = abs(t)
    sign = np.sign(t)
    tau = remaining
    substeps = 0
    while remaining > 0:
        V, T, h_next, beta, happy = _arnoldi(H, w, m)
        if happy:
            E = scipy.linalg.expm(-1j * sign * remaining * T)
            return beta * (V @ E[:, 0])
        tau = min(tau, remaining)
        while True:
            E = scipy.linalg.expm(-1j * sign * tau * T)
            err = beta * h_next * abs(E[-1, 0])
            if err <= tol * tau / abs(t) or tau < 1e-14 * abs(t):
                break
            tau *= 0.5
        if err > tol * tau / abs(t):
            if n <= dense_threshold:
                log.warning("Krylov substep collapsed; falling back to dense exponential")
                Hd = H.toarray() if hasattr(H, "toarray") else np.asarray(H)
                return scipy.linalg.expm(-1j * sign * remaining * Hd) @ w
            raise KrylovBreakdown("Krylov substep size collapsed")
        w = beta * (V @ E[:, 0])
        remaining -= tau
        if remaining < 1e-15 * abs(t):
            remaining = 0.0
        substeps += 1
        if substeps > max_substeps:
            raise KrylovBreakdown("too many Krylov substeps")
        if err < 0.1 * tol * tau / abs(t):
            tau *= 2.0
    return w
