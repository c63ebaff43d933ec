"""Command line entry point: ``bernoulli-lines <subcommand> ...``.

Exit status is 0 on success, 1 on a runtime error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .ensemble import load_spec, spec_from_dict
from .errors import BernoulliLinesError
from .exact import (
    DEFAULT_CAP,
    acceptance_probability,
    count_avoid,
    count_avoid_enum,
    count_avoid_lgv,
    fixed_time_pmf,
)
from .experiments import (
    ExperimentReport,
    random_ordered_pair,
    resolve_threads,
    run_convergence,
    run_coupling_test,
    run_gibbs_invariance,
    run_mingap,
)
from .limit import (
    H_density,
    limit_spec_from_dict,
    load_limit_spec,
    log_normalizing_constant,
    marginal_density,
    envelope_box,
    quadrature_log_normalizing_constant,
    rho,
    rho_batch,
)
from .samplers import (
    RngHandle,
    coupled_glauber_run,
    default_burn_in,
    glauber_run,
    rejection_sample,
    sequential_exact_sample,
)


def _fraction(fr) -> str:
    return f"{fr.numerator}/{fr.denominator}"


def _write_rows(path, header, rows):
    if path is None or str(path) == "-":
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _ensemble_rows(replicate, arr, t0):
    for i, row in enumerate(arr):
        for j, v in enumerate(row):
            yield replicate, i + 1, t0 + j, int(v)


# -- subcommands ---------------------------------------------------------------

def cmd_count(args):
    spec = load_spec(args.spec)
    if args.method == "lgv":
        if not (spec.barrier_free and spec.full_S):
            raise BernoulliLinesError("the determinant count needs no barriers and full S")
        n = count_avoid_lgv(spec.x, spec.y, spec.length)
    elif args.method == "enum":
        n = count_avoid_enum(spec, args.cap)
    else:
        n = count_avoid(spec, args.cap)
    print(n)


def cmd_pmf(args):
    spec = load_spec(args.spec)
    if not (spec.barrier_free and spec.full_S):
        raise BernoulliLinesError("the fixed-time law needs no barriers and full S")
    m = args.m if args.m is not None else spec.length // 2
    pmf = fixed_time_pmf(spec.x, spec.y, spec.length, m)
    rows = [list(lam) + [p.numerator, p.denominator] for lam, p in sorted(pmf.items(), reverse=True)]
    if args.csv:
        header = [f"lambda_{i + 1}" for i in range(spec.k)] + ["prob_num", "prob_den"]
        _write_rows(args.csv, header, rows)
    if args.csv != "-":
        for lam, p in sorted(pmf.items(), reverse=True):
            print(" ".join(str(v) for v in lam), _fraction(p))


def cmd_accept(args):
    print(_fraction(acceptance_probability(load_spec(args.spec), args.cap)))


def cmd_sample(args):
    spec = load_spec(args.spec)
    rows = []
    for rep in range(args.replicates):
        rng = RngHandle(args.seed, (rep,))
        if args.method == "rejection":
            ens, _ = rejection_sample(rng, spec, args.max_tries)
        elif args.method == "sequential":
            if not (spec.barrier_free and spec.full_S):
                raise BernoulliLinesError("sequential sampling needs no barriers and full S")
            ens = sequential_exact_sample(rng, spec.x, spec.y, spec.length, spec.T0)
        else:
            burn = default_burn_in(spec) if args.burnin is None else args.burnin
            ens = glauber_run(rng, spec, burn + args.steps)
        rows.extend(_ensemble_rows(rep, ens.to_array(), spec.T0))
    _write_rows(args.out, ["replicate", "path_index", "time", "value"], rows)


def cmd_glauber(args):
    spec = load_spec(args.spec)
    rng = RngHandle(args.seed)
    steps = default_burn_in(spec) if args.steps is None else args.steps
    if args.high:
        high = load_spec(args.high)
        res = coupled_glauber_run(rng, spec, high, steps)
        rows = list(_ensemble_rows(0, res.low.to_array(), spec.T0))
        rows += list(_ensemble_rows(1, res.high.to_array(), spec.T0))
        _write_rows(args.out, ["chain", "path_index", "time", "value"], rows)
        print(f"violations {res.violations}", file=sys.stderr)
        return
    ens = glauber_run(rng, spec, steps)
    _write_rows(args.out, ["replicate", "path_index", "time", "value"],
                list(_ensemble_rows(0, ens.to_array(), spec.T0)))


def _parse_grid(text):
    lo, hi, n = text.split(":")
    return np.linspace(float(lo), float(hi), int(n))


def cmd_density(args):
    spec = load_limit_spec(args.spec)
    if args.grid:
        axis = _parse_grid(args.grid)
        mesh = np.meshgrid(*([axis] * spec.k), indexing="ij")
        Z = np.column_stack([g.ravel() for g in mesh])
        vals = rho_batch(spec, Z)
        header = [f"z_{i + 1}" for i in range(spec.k)] + ["rho"]
        _write_rows(args.out, header, [list(map(float, z)) + [float(v)] for z, v in zip(Z, vals)])
        return
    if args.z is None or len(args.z) != spec.k:
        raise BernoulliLinesError(f"give --z with {spec.k} values or --grid")
    h = H_density(spec, args.z)
    print(f"H {h!r}")
    print(f"Zc {math.exp(log_normalizing_constant(spec))!r}")
    print(f"rho {rho(spec, args.z)!r}")


def cmd_zc(args):
    spec = load_limit_spec(args.spec)
    if args.quadrature:
        lz, n = quadrature_log_normalizing_constant(spec)
        print(repr(math.exp(lz)))
        print(f"nodes_per_axis {n}", file=sys.stderr)
    else:
        print(repr(math.exp(log_normalizing_constant(spec))))


# -- experiment ------------------------------------------------------------------

def _exp_convergence(cfg, seed, threads, outdir):
    spec = limit_spec_from_dict(cfg)
    rep = run_convergence(spec, cfg.get("T", [50, 100, 200, 400]), int(cfg.get("n_samples", 200_000)),
                          RngHandle(seed, (1,)), threshold=cfg.get("threshold", 0.03),
                          noise=float(cfg.get("noise", 0.01)), method=cfg.get("method", "column"),
                          threads=threads, keep_samples=True,
                          rounding=cfg.get("rounding", "nearest"))
    samples = rep.extras.get("samples", {})
    cdfs = rep.extras.get("cdfs", [])
    if samples:
        if cfg.get("write_samples", True):
            rows = []
            for T, Z in samples.items():
                for r, z in enumerate(Z):
                    for i, v in enumerate(z):
                        rows.append((T, r, i + 1, repr(float(v))))
            _write_rows(outdir / "samples.csv", ["T", "replicate", "coordinate", "z"], rows)
        rows = []
        for T, Z in samples.items():
            for i in range(spec.k):
                zs = np.sort(Z[:, i])
                u, idx = np.unique(zs, return_index=True)
                emp = np.concatenate((idx[1:], [len(zs)])) / len(zs)
                lim = cdfs[i](u)
                rows.extend((T, i + 1, repr(float(a)), repr(float(b)), repr(float(c)))
                            for a, b, c in zip(u, emp, lim))
        _write_rows(outdir / "cdf.csv", ["T", "coordinate", "z", "empirical_cdf", "limit_cdf"], rows)
        L = envelope_box(spec)
        grid = np.linspace(-L, L, 401)
        rows = []
        for i in range(spec.k):
            dens = marginal_density(spec, i, grid)
            rows.extend((i + 1, repr(float(g)), repr(float(d))) for g, d in zip(grid, dens))
        _write_rows(outdir / "density_grid.csv", ["coordinate", "z", "density"], rows)
    return rep


def _exp_coupling(cfg, seed, threads, outdir):
    rng = RngHandle(seed, (2,))
    k, T = int(cfg.get("k", 3)), int(cfg.get("T", 6))
    pairs = [random_ordered_pair(rng.child(0, i), k, T) for i in range(int(cfg.get("pairs", 20)))]
    return run_coupling_test(pairs, int(cfg.get("n_steps", 10**6)), rng.child(1),
                             tv_records=int(cfg.get("tv_records", 0)),
                             tv_threshold=float(cfg.get("tv_threshold", 0.05)), threads=threads)


def _exp_gibbs(cfg, seed, threads, outdir):
    spec = spec_from_dict(cfg["spec"])
    return run_gibbs_invariance(spec, tuple(cfg["window"]), tuple(cfg["indices"]), seed=seed)


def _exp_mingap(cfg, seed, threads, outdir):
    spec = limit_spec_from_dict(cfg)
    rep = run_mingap(spec, cfg.get("T", [100, 400]), int(cfg.get("n_samples", 100_000)),
                     cfg.get("deltas", [0.0, 0.05, 0.1, 0.2, 0.5]), RngHandle(seed, (3,)),
                     epsilon=float(cfg.get("epsilon", 0.1)), threads=threads)
    rows = [(s["T"], d, p) for s in rep.statistics for d, p in zip(s["deltas"], s["probabilities"])]
    _write_rows(outdir / "mingap.csv", ["T", "delta", "probability"], rows)
    return rep


EXPERIMENTS = {
    "convergence": _exp_convergence,
    "coupling": _exp_coupling,
    "gibbs": _exp_gibbs,
    "mingap": _exp_mingap,
}


def cmd_experiment(args):
    with open(args.config) as fh:
        config = yaml.safe_load(fh) or {}
    if not isinstance(config, dict):
        raise BernoulliLinesError("config must be a mapping of experiment sections")
    unknown = sorted(set(config) - set(EXPERIMENTS))
    if unknown:
        raise BernoulliLinesError(f"unknown experiment sections: {', '.join(unknown)}")
    threads = resolve_threads(args.threads)
    out = Path(args.out)
    overall = True
    for name in EXPERIMENTS:
        if name not in config:
            continue
        d = out / name
        d.mkdir(parents=True, exist_ok=True)
        rep: ExperimentReport = EXPERIMENTS[name](config[name] or {}, args.seed, threads, d)
        (d / "report.json").write_text(rep.to_json())
        print(f"{name}: {'pass' if rep.passed else 'fail' if rep.passed is False else 'n/a'}")
        overall = overall and rep.passed is not False
    return 0 if overall else 1


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bernoulli-lines",
                                 description="Exact counts, samplers and limit densities "
                                             "for avoiding Bernoulli line ensembles.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("count", help="number of avoiding ensembles")
    p.add_argument("spec")
    p.add_argument("--method", choices=["auto", "lgv", "enum"], default="auto")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("pmf", help="exact law of one column")
    p.add_argument("spec")
    p.add_argument("--m", type=int, help="time offset from T0 (default: midpoint)")
    p.add_argument("--csv", help="write CSV here ('-' for stdout)")
    p.set_defaults(func=cmd_pmf)

    p = sub.add_parser("accept", help="acceptance probability as num/den")
    p.add_argument("spec")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.set_defaults(func=cmd_accept)

    p = sub.add_parser("sample", help="draw ensembles (long CSV)")
    p.add_argument("spec")
    p.add_argument("--method", choices=["rejection", "sequential", "glauber"], default="rejection")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--steps", type=int, default=0, help="Glauber moves after burn-in")
    p.add_argument("--burnin", type=int, help="Glauber burn-in (default: 10 k T width)")
    p.add_argument("--max-tries", type=int, default=10**6)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("glauber", help="run Glauber dynamics, optionally coupled")
    p.add_argument("spec")
    p.add_argument("--high", help="second spec for a coupled run")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_glauber)

    p = sub.add_parser("density", help="evaluate the limit density")
    p.add_argument("spec")
    p.add_argument("--z", type=float, nargs="+")
    p.add_argument("--grid", help="lo:hi:n, tensor grid in every coordinate; CSV output (write --grid=lo:hi:n when lo < 0)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("zc", help="normalising constant of the limit density")
    p.add_argument("spec")
    p.add_argument("--quadrature", action="store_true")
    p.set_defaults(func=cmd_zc)

    p = sub.add_parser("experiment", help="run experiments from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results")
    p.add_argument("--threads", type=int, help="worker threads (fallback: GLE_THREADS)")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        code = args.func(args)
    except (BernoulliLinesError, ValueError, KeyError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0 if code is None else int(code)


if __name__ == "__main__":
    sys.exit(main())
