"""Command-line interface: ``beliefpool <verb> ...``."""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
from pathlib import Path

from . import io as bio
from .aggregation import AggregationConfig, LinopPool, SourceReport, aggr, samp_baseline
from .errors import BeliefPoolError
from .experiments import (
    KINDS,
    ExperimentConfig,
    read_results,
    run_experiment,
    summarize,
    summary_to_csv,
    write_results,
)
from .inference import kl_divergence
from .learning import DataStatistics, DirichletSpec, SearchConfig, structure_search
from .sampling import forward_sample, make_rng


def _search_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--start", choices=["empty", "random"], default="empty")
    p.add_argument("--max-parents", type=int, default=None)
    p.add_argument("--no-structure-dl", action="store_true",
                   help="drop the structure description-length term from the score")
    p.add_argument("--exhaustive", action="store_true", help="score every DAG (tiny nets only)")


def _search_config(args) -> SearchConfig:
    return SearchConfig(restarts=args.restarts, max_parents=args.max_parents, seed=args.seed,
                        start_mode=args.start, structure_dl=not args.no_structure_dl,
                        exhaustive=args.exhaustive)


def _source_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--source", action="append", required=True, metavar="NET[:ALPHA[:M]]",
                   help="source network file with optional weight and sample count; repeatable")
    p.add_argument("--source-xi", type=float, default=None,
                   help="equivalent sample size of the sources' uniform priors, if known")


def _parse_sources(args) -> list[SourceReport]:
    specs = []
    for raw in args.source:
        path, *rest = raw.rsplit(":", 2) if raw.count(":") else (raw,)
        # allow "asset:asia" style paths by re-joining when the head is "asset"
        if path == "asset" and rest:
            path, rest = f"asset:{rest[0]}", rest[1:]
        alpha = float(rest[0]) if len(rest) > 0 else None
        m = int(rest[1]) if len(rest) > 1 else None
        specs.append((bio.load_network(path), alpha, m))
    if all(a is None for _, a, _ in specs):
        ms = [m for _, _, m in specs]
        alphas = ([m / sum(ms) for m in ms] if all(m is not None for m in ms)
                  else [1.0 / len(specs)] * len(specs))
    elif any(a is None for _, a, _ in specs):
        raise ValueError("give a weight for every source or for none")
    else:
        alphas = [a for _, a, _ in specs]
    prior = DirichletSpec.uniform(args.source_xi) if args.source_xi is not None else None
    return [SourceReport(net, a, prior, m) for (net, _, m), a in zip(specs, alphas)]


def _aggr_config(args) -> AggregationConfig:
    mle = args.mle
    return AggregationConfig(
        m_estimate=args.m_estimate,
        dm_prior=None if mle else DirichletSpec.uniform(args.dm_xi),
        search=_search_config(args),
        parameterization="mle" if mle else "map",
        de_smooth=getattr(args, "de_smooth", False),
    )


def _write_net(net, out, **meta):
    if out:
        bio.write_network(net, out, **meta)
    else:
        sys.stdout.write(json.dumps(bio.net_to_dict(net, **meta), indent=1) + "\n")


def cmd_sample(args):
    net = bio.load_network(args.net)
    ds = forward_sample(net, args.m, make_rng(args.seed))
    text = bio.dataset_to_csv(ds)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_learn(args):
    variables = bio.load_network(args.net).variables if args.net else None
    ds = bio.read_dataset(args.data, variables)
    prior = None if args.mle else DirichletSpec.uniform(args.xi)
    res = structure_search(DataStatistics(ds), args.m_estimate or ds.size,
                           _search_config(args), make_rng(args.seed), prior=prior)
    _write_net(res.net, args.out, score=res.score)


def cmd_kl(args):
    kl = kl_divergence(bio.load_network(args.p), bio.load_network(args.q))
    print("inf" if math.isinf(kl) else repr(kl))


def cmd_linop(args):
    sources = _parse_sources(args)
    pool = LinopPool(sources, de_smooth=args.de_smooth)
    names = sources[0].net.names
    targets = [sources[0].net.index(t) for t in args.targets.split(",")] if args.targets \
        else list(range(len(names)))
    f = pool.family_joint(targets)
    variables = [sources[0].net.variables[t] for t in targets]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow([v.name for v in variables] + ["probability"])
        for idx in itertools.product(*[range(v.card) for v in variables]):
            w.writerow([v.states[k] for v, k in zip(variables, idx)] + [repr(float(f.values[idx]))])
    finally:
        if args.out:
            out.close()


def cmd_aggr(args):
    sources = _parse_sources(args)
    res = aggr(sources, _aggr_config(args), make_rng(args.seed))
    _write_net(res.net, args.out, score=res.score)


def cmd_samp(args):
    sources = _parse_sources(args)
    res = samp_baseline(sources, args.m, _aggr_config(args), make_rng(args.seed))
    _write_net(res.net, args.out, score=res.score)


def _load_config(spec: str) -> ExperimentConfig:
    if spec.startswith("asset:"):
        name = spec[len("asset:"):]
        return ExperimentConfig.load(bio.asset_path(f"configs/{name.removesuffix('.json')}.json"))
    return ExperimentConfig.load(spec)


def cmd_experiment(args):
    cfg = _load_config(args.config)
    if cfg.kind != args.kind:
        raise ValueError(f"config is for {cfg.kind!r}, not {args.kind!r}")
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.runs is not None:
        cfg.runs = args.runs
    rows = run_experiment(cfg)
    write_results(rows, args.out, args.timings)


def cmd_summarize(args):
    records = []
    for path in args.results:
        records += read_results(path)
    text = summary_to_csv(summarize(records))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beliefpool",
                                     description="Learn and aggregate discrete Bayesian networks.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("sample", help="forward-sample a dataset from a network")
    p.add_argument("--net", required=True)
    p.add_argument("-m", type=int, required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("learn", help="learn a network from a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--net", help="network whose variables define the state lists")
    p.add_argument("--xi", type=float, default=1.0, help="uniform-prior equivalent sample size")
    p.add_argument("--mle", action="store_true")
    p.add_argument("--m-estimate", type=float, default=None)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    _search_args(p)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("kl", help="KL divergence KL(p || q) in bits")
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_kl)

    p = sub.add_parser("linop", help="pooled distribution (or marginal) of source networks")
    _source_args(p)
    p.add_argument("--targets", help="comma-separated variable names (default: all)")
    p.add_argument("--de-smooth", action="store_true")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_linop)

    for verb, func, text in (("aggr", cmd_aggr, "aggregate source networks"),
                             ("samp", cmd_samp, "sampling baseline aggregation")):
        p = sub.add_parser(verb, help=text)
        _source_args(p)
        p.add_argument("--m-estimate", type=float, default=None)
        p.add_argument("--dm-xi", type=float, default=1.0)
        p.add_argument("--mle", action="store_true")
        if verb == "aggr":
            p.add_argument("--de-smooth", action="store_true")
        else:
            p.add_argument("-m", type=int, required=True, help="total synthetic samples")
        p.add_argument("--out")
        p.add_argument("--seed", type=int, default=0)
        _search_args(p)
        p.set_defaults(func=func)

    p = sub.add_parser("experiment", help="run an experiment config")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", required=True, help="config file or asset:<name>")
    p.add_argument("--out", required=True)
    p.add_argument("--timings", help="optional sidecar CSV of wall times")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="override the config's base seed")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("summarize", help="medians and means of result CSVs")
    p.add_argument("results", nargs="+")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (BeliefPoolError, ValueError, OSError) as exc:
        print(f"beliefpool {args.verb}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
