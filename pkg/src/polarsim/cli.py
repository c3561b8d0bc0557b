"""Command-line entry point: ``polarsim <command> ...``.

Exit codes: 0 ok, 2 bad usage or input, 3 internal invariant breach,
4 a constructed schedule failed its post-condition.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import constants as K
from .analysis import (NoCrossPair, NotClusterable, analyze, clusters, epochs, epsilon_base,
                       is_consistent, is_inactive, potentials, realizing_pair_between,
                       split_sizes)
from .constructions import (NonConvergent, PreconditionViolated, amplification_factor,
                            collapse_clusters, contraction_factor,
                            increase_delta_schedule, load_schedule, path_to_inactive,
                            reach_consistency, save_schedule, tighten_cluster_schedule)
from .dynamics import (PairDistribution, ProcessParams, StopCriteria, run_ensemble,
                       run_scripted, sample_inactive, sample_initial, spawn_seeds,
                       make_rng, write_trace)
from .geometry import (BadFile, Configuration, DegenerateUpdate, UpdateRule, load_config,
                       polarization_distance, save_config)
from . import lab

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT, EXIT_POST = 0, 2, 3, 4


class UsageError(ValueError):
    pass


def default_seed() -> int:
    return int(os.environ.get("POLARSIM_SEED", "0"))


# -- shared plumbing --------------------------------------------------------------

def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--alpha", type=float, default=None,
                   help="defaults to the value in --init, else 1.0")
    p.add_argument("--seed", type=int, default=None, help="default: $POLARSIM_SEED or 0")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="out")
    p.add_argument("--init", default=None, help="configuration JSON")
    p.add_argument("--renormalize", action="store_true")
    p.add_argument("--pair-dist", default=None, help="JSON n x n matrix")
    p.add_argument("--rule", default="linear", help="linear | piecewise:BETA")
    p.add_argument("--max-steps", type=int, default=10 ** 6)
    p.add_argument("--sample-every", type=int, default=1000)
    p.add_argument("--stop-polarized", type=float, default=None, metavar="TOL")
    p.add_argument("--stop-active", default=None, metavar="EPS,EPS1,T")


def _seed(args) -> int:
    return default_seed() if args.seed is None else args.seed


def _initial(args) -> tuple[Configuration, float]:
    if args.init:
        config, alpha = load_config(args.init, renormalize=args.renormalize)
        return config, alpha if args.alpha is None else args.alpha
    alpha = 1.0 if args.alpha is None else args.alpha
    return sample_initial(args.n, args.d, "uniform", seed=_seed(args)), alpha


def _stop(args) -> StopCriteria:
    activity = None
    if args.stop_active:
        try:
            eps, eps1, T = args.stop_active.split(",")
            activity = (float(eps), float(eps1), int(T))
        except ValueError as exc:
            raise UsageError(f"--stop-active expects EPS,EPS1,T: {exc}") from exc
    return StopCriteria(args.stop_polarized, activity, args.max_steps)


def _params(args, n: int, d: int, alpha: float) -> ProcessParams:
    rule = UpdateRule.parse(args.rule, alpha)
    dist = PairDistribution.from_file(args.pair_dist, n) if args.pair_dist else None
    return ProcessParams(n, d, rule, dist, _seed(args), args.sample_every, _stop(args))


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def _clean(x):
    """Replace infinities by "inf" so the JSON stays standard."""
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True,
                               default=_json_default) + "\n")


class Outputs:
    def __init__(self, out: str):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.paths: list = []

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.paths.append(str(p))
        return p

    def manifest(self, command: str, argv: list, params: dict, seed, started: float) -> None:
        _write_json(self.dir / "manifest.json", {
            "command": command, "argv": argv, "params": params, "seed": seed,
            "code_version": __version__, "started": started, "finished": time.time(),
            "outputs": self.paths})


# -- commands ---------------------------------------------------------------------

def cmd_simulate(args, argv) -> int:
    started = time.time()
    config, alpha = _initial(args)
    params = _params(args, config.n, config.dim, alpha)
    from .dynamics import simulate
    res = simulate(params, config)
    out = Outputs(args.out)
    meta = params.metadata()
    meta.update({"stop_reason": res.reason, "steps": res.steps})
    trace_path = out.path("trace.csv")
    write_trace(trace_path, res.trace, meta)
    out.paths.append(str(trace_path.with_suffix(".meta.json")))
    save_config(out.path("final.json"), res.final, alpha)
    out.manifest("simulate", argv, meta, params.seed, started)
    last = res.trace[-1]
    print(f"stop={res.reason} steps={res.steps} inactive={last.inactive} "
          f"polarization_distance={polarization_distance(res.final):.3e}")
    return EXIT_OK


def _ensemble_inits(args, alpha) -> tuple[list, list]:
    seeds = spawn_seeds(_seed(args) + 1, args.runs)
    if args.init:
        return [load_config(args.init, renormalize=args.renormalize)[0]] * args.runs, []
    if args.init_kind == "uniform":
        return [sample_initial(args.n, args.d, "uniform", seed=s) for s in seeds], []
    if args.stop_active is None:
        raise UsageError("inactive inits need --stop-active EPS,EPS1,T")
    eps = float(args.stop_active.split(",")[0])
    inits, parts = [], []
    for s in seeds:
        c, P = sample_inactive(args.n, args.d, args.clusters, eps, eps, make_rng(s),
                               min_cross=0.0)
        inits.append(c)
        parts.append(P)
    return inits, parts


def cmd_ensemble(args, argv) -> int:
    started = time.time()
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    alpha = 1.0 if args.alpha is None else args.alpha
    if args.init:
        alpha = load_config(args.init)[1] if args.alpha is None else args.alpha
    inits, parts = _ensemble_inits(args, alpha)
    n, d = inits[0].n, inits[0].dim
    params = _params(args, n, d, alpha)
    results = run_ensemble(params, inits, jobs=args.jobs, record=True)
    pol = [r for r in results if r.reason == "polarized"]
    splits = [list(split_sizes(r.final)) for r in pol]
    summary = {
        "runs": len(results),
        "polarized_fraction": len(pol) / len(results),
        "median_steps_to_polarization": float(np.median([r.steps for r in pol])) if pol else None,
        "split_sizes": splits,
        "min_group_fraction_median": float(np.median([min(s) / n for s in splits])) if splits else None,
        "stop_reasons": {k: sum(r.reason == k for r in results) for k in ("polarized", "active", "budget")},
    }
    if params.stop.activity is not None:
        eps, eps1, T = params.stop.activity
        nc_seqs = [[e[2] for e in epochs(r.trace, eps, eps1)] for r in results]
        transitions: dict = {}
        for seq in nc_seqs:
            for a, b in zip(seq, seq[1:]):
                transitions[f"{a}->{b}"] = transitions.get(f"{a}->{b}", 0) + 1
        summary["epochs_nc"] = nc_seqs
        summary["nc_transitions"] = transitions
        if parts:
            cross = [r.reason == "active" and potentials(r.final, P).Q1 > -math.log(eps1)
                     for r, P in zip(results, parts)]
            k = int(sum(cross))
            summary["cross_activation"] = {"estimate": k / len(cross),
                                           "wilson_interval": list(lab.wilson(k, len(cross))),
                                           "bound": 0.7}
    out = Outputs(args.out)
    _write_json(out.path("summary.json"), summary)
    out.manifest("ensemble", argv, params.metadata(), params.seed, started)
    print(json.dumps(_clean({k: summary[k] for k in ("runs", "polarized_fraction",
                                                      "median_steps_to_polarization")})))
    return EXIT_OK


def _eps(args, d, alpha) -> float:
    if args.eps in (None, "auto"):
        return epsilon_base(d, alpha)
    return float(args.eps)


def cmd_construct(args, argv) -> int:
    started = time.time()
    config, alpha = _initial(args)
    rule = UpdateRule.linear(alpha)
    eps = _eps(args, config.dim, alpha)
    verb = args.verb
    result: dict = {"verb": verb}
    post_ok = True
    if verb == "replay":
        if not args.schedule:
            raise UsageError("replay needs --schedule")
        sched = load_schedule(args.schedule)
        sched.validate(config.n)
    elif verb == "to-inactive":
        sched = path_to_inactive(config, eps, alpha)
    else:
        P = clusters(config)
        if verb == "tighten":
            sched = tighten_cluster_schedule(config, P, args.block)
        else:
            if len(P) < 2 or args.b >= len(P) or args.a >= len(P) or args.a == args.b:
                raise PreconditionViolated(f"need two distinct blocks, found {len(P)} cluster(s)")
            if verb == "consistency":
                sched = reach_consistency(config, P, args.a, args.b, alpha, args.mode)
            elif verb == "amplify":
                sched = increase_delta_schedule(P, args.a, args.b, config.n)
            elif verb == "collapse":
                if args.i0 is None or args.j0 is None:
                    i0, j0 = realizing_pair_between(config, P, args.a, args.b)
                else:
                    i0, j0 = args.i0, args.j0
                sched = collapse_clusters(config, eps, args.a, args.b, i0, j0, alpha, P)
            else:
                raise UsageError(f"unknown verb {verb}")
    out = Outputs(args.out)
    save_schedule(out.path("schedule.json"), sched)
    result["length"] = len(sched)
    if args.execute:
        final, _ = run_scripted(config, sched, rule)
        save_config(out.path("post.json"), final, alpha)
        if verb == "to-inactive":
            post_ok = is_inactive(final, eps, eps).inactive
        elif verb == "consistency":
            post_ok = is_consistent(final, P, args.a, args.b, K.c_cons(config.n, alpha)).consistent
        elif verb == "amplify":
            g, _ = amplification_factor(config, P, args.a, args.b, alpha)
            result["growth_factor"] = g
            post_ok = g >= 1.0 + K.c_adv(alpha, epsilon_base(config.dim, alpha))
        elif verb == "tighten":
            c = contraction_factor(config, P, args.block, sched, alpha)
            result["contraction_factor"] = c
            print(f"contraction factor c = {c:.6g}")
            post_ok = c < 1.0 or c == 0.0
        elif verb == "collapse":
            post_ok = (is_inactive(final, eps, eps).inactive
                       and len(clusters(final)) < len(P))
        result["analysis"] = analyze(final, eps, eps).to_json()
        result["post_condition"] = post_ok
        _write_json(out.path("result.json"), result)
    out.manifest("construct", argv, {"verb": verb, "eps": eps, "alpha": alpha}, _seed(args),
                 started)
    print(f"{verb}: {len(sched)} steps" + (f", post-condition {'ok' if post_ok else 'FAILED'}"
                                           if args.execute else ""))
    return EXIT_OK if post_ok else EXIT_POST


def cmd_lab(args, argv) -> int:
    started = time.time()
    seed = _seed(args)
    verb = args.verb
    if verb == "two-chain":
        tc = K.two_chain_defaults()
        C = args.C if args.C is not None else tc["C"]
        ct = args.C_tilde if args.C_tilde is not None else tc["C_tilde_over_C"] * C
        rep = lab.two_chain_report(lab.TwoChainParams(C=C, C_min=tc["C_min"], C_tilde=ct,
                                                      kernel=args.kernel, trials=args.trials,
                                                      T_max=args.t_max, seed=seed))
        data = rep.to_json()
        print(f"P1-escape estimate {rep.estimate:.4f} (bound 0.3), "
              f"capped {rep.extra['capped']}")
    elif verb == "azuma":
        p = lab.AzumaParams(args.c1, args.c2, args.t, args.trials, seed)
        rep = lab.azuma_report(p, horizons=sorted({50, 100, 200, args.t} if args.t >= 200 else {args.t}))
        data = rep.to_json()
        print(f"empirical tail {rep.estimate:.5f} <= bound {rep.bound:.5f}: "
              f"{rep.estimate <= rep.bound}")
    elif verb == "block-check":
        table = K.load_table()
        rep = lab.verify_block_properties(lab.BlockCheckParams(
            n=table.n, d=table.d, alpha=table.alpha, eps=table.eps, eps1=table.eps1,
            T=table.T, blocks=args.blocks, replicas=args.replicas, seed=seed))
        data = rep.to_json()
        print(f"blocks {rep.blocks}, deterministic violations {len(rep.deterministic_violations)}, "
              f"drift ok fraction {rep.drift_ok_fraction:.4f}")
    elif verb == "dprime-scan":
        alpha = 1.0 if args.alpha is None else args.alpha
        scan = lab.dprime_scan(args.configs, (2, args.n), (2, args.d), alpha, seed)
        data = scan.to_json()
        data["negative_findings"] = len(scan.findings)
        print(f"{args.configs} configs, min drift {scan.min_drift:.3e}, "
              f"negative findings {len(scan.findings)}")
    else:
        raise UsageError(f"unknown verb {verb}")
    out = Outputs(args.out)
    _write_json(out.path(f"{verb}.json"), data)
    out.manifest("lab", argv, {"verb": verb}, seed, started)
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        old = list(manifest["argv"])
    except (OSError, ValueError, KeyError) as exc:
        raise BadFile(f"cannot read manifest {args.manifest}: {exc}") from exc
    if args.out:
        old = [a for k, a in enumerate(old) if a != "--out" and (k == 0 or old[k - 1] != "--out")]
        old += ["--out", args.out]
    return main(old)


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polarsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one trajectory")
    _add_shared(p)

    p = sub.add_parser("ensemble", help="run many trajectories")
    _add_shared(p)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--init-kind", choices=("uniform", "inactive"), default="uniform")
    p.add_argument("--clusters", type=int, default=2)

    p = sub.add_parser("construct", help="build (and optionally run) a schedule")
    p.add_argument("verb", choices=("to-inactive", "consistency", "amplify", "tighten",
                                    "collapse", "replay"))
    _add_shared(p)
    p.add_argument("--eps", default="auto")
    p.add_argument("--a", type=int, default=0)
    p.add_argument("--b", type=int, default=1)
    p.add_argument("--i0", type=int, default=None)
    p.add_argument("--j0", type=int, default=None)
    p.add_argument("--block", type=int, default=0)
    p.add_argument("--mode", choices=("adaptive", "worst-case"), default="adaptive")
    p.add_argument("--schedule", default=None)
    p.add_argument("--execute", action="store_true")

    p = sub.add_parser("lab", help="Monte Carlo experiments")
    p.add_argument("verb", choices=("two-chain", "azuma", "block-check", "dprime-scan"))
    _add_shared(p)
    p.add_argument("--trials", type=int, default=10 ** 4)
    p.add_argument("--t-max", type=int, default=10 ** 6)
    p.add_argument("--kernel", default="default")
    p.add_argument("--C", type=float, default=None)
    p.add_argument("--C-tilde", type=float, default=None)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=0.2)
    p.add_argument("--t", type=int, default=500)
    p.add_argument("--blocks", type=int, default=1000)
    p.add_argument("--replicas", type=int, default=2000)
    p.add_argument("--configs", type=int, default=10 ** 4)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None)
    return parser


COMMANDS = {"simulate": cmd_simulate, "ensemble": cmd_ensemble, "construct": cmd_construct,
            "lab": cmd_lab, "replay": cmd_replay}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args, argv)
    except (BadFile, UsageError, PreconditionViolated, NoCrossPair, NotClusterable,
            NonConvergent, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DegenerateUpdate, lab.KernelViolation, AssertionError) as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
