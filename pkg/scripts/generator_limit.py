"""Extracted quadratic coefficients (A, B) at one time for increasing N.

Prints successive differences so one can judge whether the coefficients
settle as N grows.  Nothing is asserted.
"""
import argparse

import numpy as np

from fluctlab import fluctuations as fl
from fluctlab.config import load_config
from fluctlab.experiments import fluctuation_setup


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/fluctuation_norm.toml")
    ap.add_argument("--t", type=float, default=0.5)
    ap.add_argument("--N", type=float, nargs="+", default=[2, 4, 8, 16])
    args = ap.parse_args()
    cfg = load_config(args.config)
    prev = None
    print("N,phase,norm_A,norm_B,diff_A,diff_B")
    for N in args.N:
        H, traj = fluctuation_setup(cfg, N)
        d = fl.extract_generator(H, traj, args.t, cfg.fd_step, with_residual=False)
        dA = dB = float("nan")
        if prev is not None:
            dA = np.linalg.norm(d.dGamma_block - prev.dGamma_block)
            dB = np.linalg.norm(d.pair_block - prev.pair_block)
        print(f"{N:g},{d.phase!r},{np.linalg.norm(d.dGamma_block)!r},{np.linalg.norm(d.pair_block)!r},{dA!r},{dB!r}")
        prev = d


if __name__ == "__main__":
    main()
