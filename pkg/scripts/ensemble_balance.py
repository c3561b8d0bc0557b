"""How balanced are the two opinion groups at polarization?

Runs n=100 agents from uniform starts until polarized and reports the
median fraction held by the smaller group.

    python scripts/ensemble_balance.py --runs 100 --jobs 4
"""

import argparse
import json

import numpy as np

from polarsim.analysis import split_sizes
from polarsim.dynamics import ProcessParams, StopCriteria, run_ensemble, sample_initial
from polarsim.geometry import UpdateRule


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--max-steps", type=int, default=10 ** 7)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    inits = [sample_initial(args.n, args.d, seed=args.seed + 1 + k) for k in range(args.runs)]
    p = ProcessParams(args.n, args.d, UpdateRule.linear(args.alpha), seed=args.seed,
                      sample_every=10 ** 5,
                      stop=StopCriteria(polarization_tol=1e-6, max_steps=args.max_steps))
    res = run_ensemble(p, inits, jobs=args.jobs)
    pol = [r for r in res if r.reason == "polarized"]
    fracs = [min(split_sizes(r.final)) / args.n for r in pol]
    print(json.dumps({
        "runs": args.runs, "polarized": len(pol),
        "median_min_group_fraction": float(np.median(fracs)) if fracs else None,
        "quartiles": [float(q) for q in np.quantile(fracs, [0.25, 0.75])] if fracs else None,
        "median_steps": float(np.median([r.steps for r in pol])) if pol else None,
    }, indent=2))


if __name__ == "__main__":
    main()
