"""Write a sample CSV of a random spline from a config's basis, for ``rksampling reconstruct``.

Usage: python scripts/make_samples.py CONFIG OUT.csv [--seed S]

Points are drawn from the config's density; values come from a function
of the basis with standard normal coefficients, so recovery is exact.
"""

import argparse

import numpy as np

from rksampling.config import load_config
from rksampling.experiment import build_density, build_subspace
from rksampling.sampling import draw_samples


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("config")
    parser.add_argument("out")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    cfg = load_config(args.config)
    basis = build_subspace(cfg)
    samples = draw_samples(build_density(cfg), cfg.sampling.n, args.seed)
    c = np.random.default_rng(args.seed).standard_normal(basis.dim)
    values = basis.synthesize(c)(samples.points)
    header = ",".join([f"x_{i}" for i in range(basis.d)] + ["value"])
    np.savetxt(args.out, np.column_stack([samples.points, values]), delimiter=",", header=header,
               comments="", fmt="%.17g")
    np.savetxt(args.out + ".truth", c, fmt="%.17g")


if __name__ == "__main__":
    main()
