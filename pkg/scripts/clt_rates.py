"""Kolmogorov distance of normalised sums to the Gaussian as N grows."""
import argparse
import math

from iunorm.coeffs import parse_model
from iunorm.verify import clt_error


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--models", default="rademacher,two-point:2,uniform-sym")
    ap.add_argument("--ns", default="64,256,1024,4096")
    ap.add_argument("--dim", type=int, default=1)
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=0xC0FFEE)
    args = ap.parse_args()

    print("model,N,d_N,d_4N,ratio,sqrtN_d_N,exact")
    for name in args.models.split(","):
        model = parse_model(name)
        for n in map(int, args.ns.split(",")):
            s = clt_error(model, n, args.dim, args.seed, args.trials).statistics
            print(f"{model.label},{n},{s['d_N']},{s['d_4N']},{s['ratio']},"
                  f"{math.sqrt(n) * s['d_N']},{s['exact']}")


if __name__ == "__main__":
    main()
