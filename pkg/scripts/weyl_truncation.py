"""Weyl-shift defect W* a(g) W - a(g) - <g, f> restricted to sectors <= n, per amplitude ||f||.

Shows where the truncated (exactly unitary) Weyl operator stops obeying the
shift identity, and the Poisson tail that sets the cutoff rule.
"""
import argparse

import numpy as np
from scipy.stats import poisson

from fluctlab.fock import FockBasis, annihilation_operator, weyl


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-max", type=int, default=12)
    ap.add_argument("--amplitudes", type=float, nargs="+", default=[0.1, 0.3, 0.5, 0.7, 1.0])
    args = ap.parse_args()
    b = FockBasis(3, args.n_max)
    rng = np.random.default_rng(0)
    g = rng.normal(size=3) + 1j * rng.normal(size=3)
    a_g = annihilation_operator(g, b).toarray()
    print("amplitude,poisson_tail," + ",".join(f"sectors<={n}" for n in range(b.n_max + 1)))
    for amp in args.amplitudes:
        f = rng.normal(size=3) + 1j * rng.normal(size=3)
        f *= amp / np.linalg.norm(f)
        W = weyl(f, b, check_budget=False).matrix()
        D = W.conj().T @ a_g @ W - a_g - np.vdot(g, f) * np.eye(b.dim)
        errs = [np.abs(D[b.low_sectors(n), b.low_sectors(n)]).max() for n in range(b.n_max + 1)]
        tail = poisson.sf(b.n_max - 1, amp**2)
        print(f"{amp},{tail:.2e}," + ",".join(f"{e:.1e}" for e in errs))


if __name__ == "__main__":
    main()
