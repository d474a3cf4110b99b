"""Empirical W1 rate for the Gaussian AR(1) chain in one dimension.

    python3 scripts/rate_d1.py --reps 50 --out results/rate_d1
"""
import argparse

from markov_w1 import experiments as ex
from markov_w1.kernels import GaussianAR


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--max-power", type=int, default=14)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default="results/rate_d1")
    args = p.parse_args()

    config = {"kernel": GaussianAR(a=args.a, sigma=1.0), "n_grid": [2**j for j in range(7, args.max_power + 1)],
              "reps": args.reps, "w1_method": "exact_1d", "seed": args.seed}
    fit, record = ex.run_experiment("rate", config)
    json_path, csv_path = record.save(args.out)
    print(f"slope {fit.slope:.4f}  95% CI ({fit.slope_ci[0]:.4f}, {fit.slope_ci[1]:.4f})  "
          f"theory {-ex.theory_exponent(1, 10.0):.3f}  below curve: {fit.dominated}")
    for n, w, c in zip(fit.n_grid, fit.mean_w1, fit.bound_curve):
        print(f"  n={n:6d}  mean W1 {w:.5f}  curve {c:.5f}")
    print(f"wrote {json_path} and {csv_path}")


if __name__ == "__main__":
    main()
