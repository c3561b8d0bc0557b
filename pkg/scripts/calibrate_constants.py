"""Calibrate the constants that are only known to exist.

Scans (eps, T) for block checks with no deterministic violations and
drifts of the right sign, estimates the cross-cluster activation rate at
each candidate, and picks the C_tilde multiple for the two-chain process.
Prints a table; with --write, stores the chosen profile in constants.json.

    python scripts/calibrate_constants.py --eps 1e-5 1e-4 --T 20 30 --blocks 300
"""

import argparse
import json
import math
import time
from importlib import resources

import numpy as np

from polarsim import constants as K
from polarsim.analysis import potentials
from polarsim.dynamics import ProcessParams, StopCriteria, run_ensemble, sample_inactive
from polarsim.geometry import UpdateRule
from polarsim.lab import BlockCheckParams, calibrate_c_tilde, verify_block_properties


def activation_rate(n, d, alpha, eps, eps1, T, runs, seed):
    rng = np.random.default_rng(seed)
    inits, parts = zip(*(sample_inactive(n, d, 2, eps, eps, rng) for _ in range(runs)))
    p = ProcessParams(n, d, UpdateRule.linear(alpha), seed=seed, sample_every=10 ** 9,
                      stop=StopCriteria(activity=(eps, eps1, T), max_steps=10 ** 6))
    res = run_ensemble(p, list(inits))
    ok = sum(r.reason == "active" and potentials(r.final, P).Q1 > -math.log(eps1)
             for r, P in zip(res, parts))
    return ok / runs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=6)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-5, 1e-4])
    ap.add_argument("--eps1", type=float, default=3e-3)
    ap.add_argument("--T", type=int, nargs="+", default=[10, 20, 30])
    ap.add_argument("--blocks", type=int, default=300)
    ap.add_argument("--replicas", type=int, default=1000)
    ap.add_argument("--runs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--write", action="store_true", help="store the best profile")
    args = ap.parse_args()

    print("eps       T   C       viol  P0-drift   P1-drift   activation  secs")
    best = None
    for eps in args.eps:
        for T in args.T:
            t0 = time.time()
            rep = verify_block_properties(BlockCheckParams(
                args.n, args.d, args.alpha, eps, args.eps1, T, blocks=args.blocks,
                replicas=args.replicas, deep_fraction=0.5, seed=args.seed))
            act = activation_rate(args.n, args.d, args.alpha, eps, args.eps1, T, args.runs,
                                  args.seed)
            ok = not rep.deterministic_violations and rep.drift_ok_fraction >= 0.99
            print(f"{eps:<9.0e} {T:<3d} {rep.C:<7.2f} {len(rep.deterministic_violations):<5d} "
                  f"{rep.p0_drift_ok:>4d}/{rep.p0_drift_probed:<5d} "
                  f"{rep.p1_drift_ok:>4d}/{rep.p1_drift_probed:<5d} {act:<11.3f} "
                  f"{time.time() - t0:.1f}")
            if ok and act >= 0.7 and best is None:
                best = (eps, T)

    C = K.two_chain_defaults()["C"]
    mult, rows = calibrate_c_tilde(C, seed=args.seed)
    for k, est, hi in rows:
        print(f"C_tilde = {k:g} C: P1-escape {est:.4f}, upper Wilson {hi:.4f}")
    print(f"chosen C_tilde / C = {mult:g}; chosen (eps, T) = {best}")

    if args.write and best is not None:
        path = resources.files("polarsim").joinpath("constants.json")
        data = json.loads(path.read_text())
        data["profiles"]["default"].update(
            {"n": args.n, "d": args.d, "alpha": args.alpha, "eps": best[0],
             "eps1": args.eps1, "T": best[1], "C_tilde_over_C": mult})
        data["two_chain"]["C_tilde_over_C"] = mult
        path.write_text(json.dumps(data, indent=2) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
