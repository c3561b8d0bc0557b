"""Scan the exact one-step drift of the sum of squared correlations.

Every configuration with drift below -tol is written out as a finding.

    python scripts/dprime_scan.py --configs 10000 --out dprime_findings.json
"""

import argparse
import json

from polarsim.lab import dprime_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--configs", type=int, default=10 ** 4)
    ap.add_argument("--max-n", type=int, default=8)
    ap.add_argument("--max-d", type=int, default=5)
    ap.add_argument("--alpha", type=float, nargs="+", default=[1.0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=1e-12)
    ap.add_argument("--out", default="dprime_findings.json")
    args = ap.parse_args()

    results = []
    for alpha in args.alpha:
        scan = dprime_scan(args.configs, (2, args.max_n), (2, args.max_d), alpha, args.seed,
                           args.tol)
        print(f"alpha={alpha:g}: {scan.configs} configs, min drift {scan.min_drift:.3e}, "
              f"findings {len(scan.findings)}")
        results.append({"alpha": alpha, **scan.to_json()})
    with open(args.out, "w") as fh:
        json.dump(results, fh)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
