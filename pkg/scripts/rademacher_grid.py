"""Mean m-uniform norm of Rademacher sums over an (n, m) grid, normalised two ways."""
import argparse
import csv
import math
import sys

from iunorm.coeffs import parse_model
from iunorm.mc import estimate_expected_norms
from iunorm.norms import NormKind, integral_uniform
from iunorm.systems import sampled_rademacher_system


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kmin", type=int, default=6)
    ap.add_argument("--kmax", type=int, default=10)
    ap.add_argument("--cells", type=int, default=16384)
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--coeffs", default="rademacher")
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=0xC0FFEE)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    model = parse_model(args.coeffs)
    out = csv.writer(sys.stdout)
    out.writerow(["n", "m", "mean", "stderr", "ratio_log", "ratio_square_function"])
    for k in range(args.kmin, args.kmax + 1):
        n = 2**k
        system = sampled_rademacher_system(n, args.cells, args.seed + n)
        ms = [2**j for j in range(1, k + 1)]
        ests = estimate_expected_norms(system, model, [NormKind.integral_uniform(m) for m in ms],
                                       args.trials, args.seed, threads=args.threads)
        square = system.square_function()
        for m, est in zip(ms, ests):
            log_gain = math.sqrt(1 + math.log(m))
            out.writerow([n, m, est.mean, est.stderr, est.mean / (math.sqrt(n) * log_gain),
                          est.mean / (integral_uniform(square, m) * log_gain)])


if __name__ == "__main__":
    main()
