"""Fitted exponent p of the sign condition for the mixed Rademacher/indicator system."""
import argparse
import json

from iunorm.systems import fit_condition_exponent, mixed_system


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--qs", default="0.4,0.5,0.55")
    ap.add_argument("--ns", default="8,10,12,14,16,18,20")
    ap.add_argument("--condition", default="d", choices=("b", "b'", "d", "d'"))
    ap.add_argument("--budget", type=int, default=1000)
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=0xC0FFEE)
    args = ap.parse_args()

    ns = [int(v) for v in args.ns.split(",")]
    for q in map(float, args.qs.split(",")):
        fit = fit_condition_exponent(lambda n: mixed_system(n, q), ns, args.condition,
                                     args.budget, args.seed)
        print(json.dumps({"q": q, **fit.to_json()}))


if __name__ == "__main__":
    main()
