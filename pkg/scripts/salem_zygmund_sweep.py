"""Expected sup norm of random trigonometric polynomials against n log n."""
import argparse
import csv
import math
import sys

from iunorm.coeffs import parse_model
from iunorm.mc import estimate_expected_norm, scaling_fit
from iunorm.norms import NormKind
from iunorm.systems import trig_system


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kmin", type=int, default=6)
    ap.add_argument("--kmax", type=int, default=12)
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--coeffs", default="rademacher")
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=0xC0FFEE)
    args = ap.parse_args()

    model = parse_model(args.coeffs)
    out = csv.writer(sys.stdout)
    out.writerow(["n", "mean", "stderr", "mean_over_sqrt_nlogn"])
    pts = []
    for k in range(args.kmin, args.kmax + 1):
        n = 2**k
        est = estimate_expected_norm(trig_system(n, symmetric=True), model, None,
                                     NormKind.lp(math.inf), args.trials, args.seed)
        x = n * math.log(n)
        pts.append((x, est.mean))
        out.writerow([n, est.mean, est.stderr, est.mean / math.sqrt(x)])
    fit = scaling_fit(pts, "n ln n")
    print(f"# exponent {fit.exponent:.4f}  r2 {fit.r_squared:.5f}", file=sys.stderr)


if __name__ == "__main__":
    main()
