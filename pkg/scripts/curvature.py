"""Recover the contraction rate from transported point clouds."""
import argparse

from markov_w1 import experiments as ex
from markov_w1.kernels import GaussianAR, UniformContraction


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--m", type=int, default=1000)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args()

    line = [(-10.0, 10.0), (-5.0, 5.0)]
    square = [((-5.0, -5.0), (5.0, 5.0)), ((-5.0, 5.0), (5.0, -5.0))]
    cases = [(GaussianAR(a=a, sigma=1.0), line, a) for a in (0.3, 0.5, 0.8)]
    cases += [(UniformContraction(kappa=k, dim=2), square, k) for k in (0.3, 0.5)]
    for kernel, pairs, kappa in cases:
        est = ex.estimate_contraction(kernel, pairs, args.steps, args.m, seed=args.seed)
        print(f"{type(kernel).__name__:<20} kappa {kappa:.2f}  estimate {est.kappa_hat:.4f}")


if __name__ == "__main__":
    main()
