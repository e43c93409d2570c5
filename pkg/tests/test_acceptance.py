"""Acceptance suite: one test per criterion, each printing its measured numbers.

Run with ``pytest tests/test_acceptance.py -v -s``; a PASS/FAIL line per
criterion is printed in the terminal summary.
"""

import itertools
import statistics
import time
from fractions import Fraction

import numpy as np
import pytest

from beliefpool.aggregation import LinopPool, SourceReport, linop, map_aggregate_joint
from beliefpool.cli import main
from beliefpool.core import Dag, DataSet, Factor, Variable, full_joint
from beliefpool.experiments import ExperimentConfig, run_experiment
from beliefpool.inference import kl_divergence, marginal
from beliefpool.io import asset_path
from beliefpool.learning import (
    DataStatistics,
    DirichletSpec,
    FamilyScorer,
    SearchConfig,
    all_dags,
    fit_map,
    fit_mle,
    structure_search,
)
from beliefpool.sampling import empirical_distribution, forward_sample, make_rng

from conftest import PI, D1_COUNTS, D2_COUNTS, dataset_from_counts, enumerate_joint, \
    kl_bruteforce, random_net

med = statistics.median


def _config(name, **overrides):
    cfg = ExperimentConfig.load(asset_path(f"configs/{name}.json"))
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def _report(label, **numbers):
    parts = ", ".join(f"{k}={v:.5g}" if isinstance(v, float) else f"{k}={v}"
                      for k, v in numbers.items())
    print(f"\n[{label}] {parts}")


def _full_dag(n):
    return Dag(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))


def _random_variables(rng, n, max_card):
    return tuple(Variable(f"V{i}", tuple(f"s{k}" for k in range(int(rng.integers(2, max_card + 1)))))
                 for i in range(n))


def _random_split(rng, m, parts):
    cuts = sorted(rng.choice(np.arange(1, m), size=parts - 1, replace=False))
    return np.split(rng.permutation(m), cuts)


def test_criterion_01_worked_example():
    t0 = time.perf_counter()
    d1, d2 = dataset_from_counts(D1_COUNTS), dataset_from_counts(D2_COUNTS)
    full = _full_dag(2)
    joints = [full_joint(fit_mle(full, d)) for d in (d1, d2)]
    pooled = linop([0.5, 0.5], joints).values
    elapsed = time.perf_counter() - t0
    err = float(np.max(np.abs(pooled - PI)))
    _report("1 worked example", max_abs_err=err, seconds=elapsed)
    assert err <= 1e-12
    assert elapsed < 1.0


def test_criterion_02_linop_of_empiricals_is_pooled_empirical():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240002)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 4))
        variables = _random_variables(rng, n, 3)
        L = int(rng.integers(1, 5))
        m = int(rng.integers(L, 61))
        cards = [v.card for v in variables]
        rows = np.stack([rng.integers(0, c, size=m) for c in cards], axis=1)
        parts = [DataSet(variables, rows[idx]) for idx in _random_split(rng, m, L)] \
            if L > 1 else [DataSet(variables, rows)]
        alphas = [p.size / m for p in parts]
        got = linop(alphas, [empirical_distribution(p) for p in parts]).values

        # oracle: exact rational frequencies of the concatenated rows
        expected = np.zeros(cards)
        tally = {}
        for r in rows:
            tally[tuple(r)] = tally.get(tuple(r), 0) + 1
        for w in itertools.product(*[range(c) for c in cards]):
            expected[w] = float(Fraction(tally.get(w, 0), m))
        worst = max(worst, float(np.max(np.abs(got - expected))))
    elapsed = time.perf_counter() - t0
    _report("2 linop = pooled empirical", instances=200, max_abs_err=worst, seconds=elapsed)
    assert worst <= 1e-12
    assert elapsed < 10.0


def _pooled_map_oracle(counts, rho, xi):
    """Posterior predictive of the DM on the concatenated counts."""
    return (counts + xi * rho) / (counts.sum() + xi)


def test_criterion_03_map_aggregation_matches_pooled_map():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240003)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 4))
        variables = _random_variables(rng, n, 3)
        cards = tuple(v.card for v in variables)
        size = int(np.prod(cards))
        L = int(rng.integers(1, 5))
        m = int(rng.integers(L, 61))
        rows = np.stack([rng.integers(0, c, size=m) for c in cards], axis=1)
        splits = [rows[idx] for idx in _random_split(rng, m, L)] if L > 1 else [rows]
        full = _full_dag(n)
        sources = []
        for part in splits:
            rho = Factor(tuple(range(n)), rng.dirichlet(np.ones(size)).reshape(cards))
            prior = DirichletSpec(rho, float(rng.uniform(0.1, 10.0)))
            net = fit_map(full, DataSet(variables, part), prior)
            sources.append(SourceReport(net, len(part) / m, prior, len(part)))
        dm = DirichletSpec(Factor(tuple(range(n)), rng.dirichlet(np.ones(size)).reshape(cards)),
                           float(rng.uniform(0.1, 10.0)))
        got = map_aggregate_joint(sources, dm, m).values
        counts = np.zeros(cards)
        for r in rows:
            counts[tuple(r)] += 1
        expected = _pooled_map_oracle(counts, dm.rho.values, dm.xi)
        worst = max(worst, float(np.max(np.abs(got - expected))))

    # convergence toward the plain pool as M grows with fixed frequencies
    freqs = [np.array([0.5, 0.3, 0.2, 0.0]), np.array([0.1, 0.2, 0.3, 0.4])]
    variables = (Variable("X", ("a", "b")), Variable("Y", ("c", "d")))
    gaps = []
    for m_each in (50, 500, 5000):
        sources = []
        for f in freqs:
            counts = np.round(f * m_each).astype(int)
            ds = dataset_from_counts(tuple(counts), variables)
            prior = DirichletSpec.uniform(2.0)
            sources.append(SourceReport(fit_map(_full_dag(2), ds, prior), 0.5, prior, m_each))
        p_star = map_aggregate_joint(sources, DirichletSpec.uniform(2.0), 2 * m_each).values
        pool = linop([0.5, 0.5], [full_joint(s.net) for s in sources]).values
        gaps.append(float(np.max(np.abs(p_star - pool))))
    elapsed = time.perf_counter() - t0
    _report("3 eq.1 = pooled MAP", instances=200, max_abs_err=worst,
            gaps_M_100_1000_10000=str([f"{g:.3g}" for g in gaps]), seconds=elapsed)
    assert worst <= 1e-10
    assert gaps[0] > gaps[1] > gaps[2]
    assert elapsed < 10.0


def test_criterion_04_aggr_equals_opt_under_exhaustive_search():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240004)
    dags = list(all_dags(3))
    assert len(dags) == 25
    worst = 0.0
    for k in range(50):
        truth = random_net(rng, 3, max_card=3)
        m = int(rng.integers(50, 2000))
        pooled = forward_sample(truth, m, make_rng(4, k))
        L = int(rng.integers(2, 5))
        parts = [DataSet(pooled.variables, pooled.rows[idx])
                 for idx in _random_split(rng, m, L)]
        # MLE on the complete DAG: each source's joint is exactly its empirical joint
        sources = [SourceReport(fit_mle(_full_dag(3), p), p.size / m) for p in parts]
        pool, data = LinopPool(sources), DataStatistics(pooled)
        s_aggr, s_opt = FamilyScorer(pool, m), FamilyScorer(data, m)
        for dag in dags:
            worst = max(worst, abs(s_aggr.score(dag) - s_opt.score(dag)))
        cfg = SearchConfig(exhaustive=True)
        a, o = structure_search(pool, m, cfg), structure_search(data, m, cfg)
        assert a.dag == o.dag
        np.testing.assert_allclose(full_joint(a.net).values, full_joint(o.net).values, atol=1e-9)
    elapsed = time.perf_counter() - t0
    _report("4 AGGR = OPT", truths=50, max_score_gap=worst, seconds=elapsed)
    assert worst <= 1e-9
    assert elapsed < 120.0


def test_criterion_05_inference_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240005)
    worst_marg, worst_kl = 0.0, 0.0
    for _ in range(100):
        n = int(rng.integers(1, 11))
        p = random_net(rng, n, edge_prob=float(rng.uniform(0.1, 0.6)), max_parents=4)
        q = random_net(rng, n, edge_prob=float(rng.uniform(0.1, 0.6)), max_parents=4)
        q = type(q)(p.variables, q.dag, q.cpts)
        joint = enumerate_joint(p)
        worst_marg = max(worst_marg, float(np.max(np.abs(marginal(p, range(n)).values - joint))))
        targets = [int(t) for t in rng.permutation(n)[: int(rng.integers(1, min(n, 4) + 1))]]
        drop = tuple(v for v in range(n) if v not in targets)
        sub = joint.sum(axis=drop) if drop else joint
        sub = np.transpose(sub, [sorted(targets).index(t) for t in targets])
        worst_marg = max(worst_marg, float(np.max(np.abs(marginal(p, targets).values - sub))))
        worst_kl = max(worst_kl, abs(kl_divergence(p, q) - kl_bruteforce(p, q)))
    elapsed = time.perf_counter() - t0
    _report("5 inference oracles", nets=100, max_marginal_err=worst_marg, max_kl_err=worst_kl,
            seconds=elapsed)
    assert worst_marg <= 1e-9 and worst_kl <= 1e-9
    assert elapsed < 60.0


@pytest.mark.slow
def test_criterion_06_sensitivity_to_m():
    t0 = time.perf_counter()
    cfg = _config("sensitivity_m_asia")
    assert cfg.m_grid == [200, 1000, 3000] and cfg.runs == 20 and cfg.search.restarts == 5
    rows = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    stats = {}
    for m in cfg.m_grid:
        rs = [r for r in rows if r.m == m]
        stats[m] = dict(
            sources=med([k for r in rs for k in r.kl_sources]),
            aggr=med(r.kl_aggr for r in rs),
            opt=med(r.kl_opt for r in rs),
        )
        _report(f"6 M={m}", **stats[m])
    _report("6 runtime", seconds=elapsed)
    for m in cfg.m_grid:
        assert stats[m]["aggr"] < stats[m]["sources"], m
    assert stats[3000]["aggr"] <= 2 * stats[3000]["opt"]
    assert stats[3000]["aggr"] < stats[200]["aggr"]
    assert stats[3000]["opt"] < stats[200]["opt"]
    assert elapsed < 15 * 60


@pytest.mark.slow
def test_criterion_07_sensitivity_to_m_estimate():
    t0 = time.perf_counter()
    cfg = _config("m_estimate_asia")
    assert cfg.m_true == 100 and cfg.runs == 20
    assert min(cfg.estimate_grid) == pytest.approx(10) and max(cfg.estimate_grid) == pytest.approx(1000)
    rows = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    threshold = 10 ** -0.25 * cfg.m_true
    failures = []
    for est in sorted({r.m_estimate for r in rows}):
        rs = [r for r in rows if r.m_estimate == est]
        src = med([k for r in rs for k in r.kl_sources])
        agg = med(r.kl_aggr for r in rs)
        _report(f"7 estimate={est:.4g}", sources=src, aggr=agg,
                mean_arcs=statistics.fmean(r.arcs_aggr for r in rs))
        if est >= threshold * (1 - 1e-12) and not agg < src:
            failures.append(est)
    _report("7 runtime", seconds=elapsed)
    assert not failures
    assert elapsed < 15 * 60


@pytest.mark.slow
def test_criterion_08_subpopulations():
    t0 = time.perf_counter()
    cfg = _config("subpop_asia")
    assert cfg.m_grid == [2000] and cfg.runs == 20
    rows = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    src = [med(r.kl_sources[i] for r in rows) for i in range(2)]
    agg = med(r.kl_aggr for r in rows)
    _report("8 subpop", source_1=src[0], source_2=src[1], aggr=agg,
            opt=med(r.kl_opt for r in rows), seconds=elapsed)
    assert agg < min(src)
    assert elapsed < 10 * 60


@pytest.mark.slow
def test_criterion_09_samp_is_worse():
    t0 = time.perf_counter()
    cfg = _config("samp_compare_asia")
    assert cfg.m_grid == [1000] and cfg.runs == 20 and cfg.with_samp
    rows = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    samp = med(r.kl_samp for r in rows)
    agg = med(r.kl_aggr for r in rows)
    src = med([k for r in rows for k in r.kl_sources])
    _report("9 samp", samp=samp, aggr=agg, sources=src, seconds=elapsed)
    assert samp > agg
    assert samp > src
    assert elapsed < 10 * 60


@pytest.mark.parametrize("name,kind", [
    ("sensitivity_m_asia", "sensitivity-m"),
    ("m_estimate_asia", "m-estimate"),
    ("subpop_asia", "subpop"),
    ("samp_compare_asia", "samp-compare"),
])
def test_criterion_10_determinism(tmp_path, name, kind):
    outs = []
    for k in range(2):
        out = tmp_path / f"{k}.csv"
        assert main(["experiment", kind, "--config", f"asset:{name}", "--out", str(out),
                     "--runs", "3", "--seed", "7"]) == 0
        outs.append(out.read_bytes())
    _report(f"10 {name}", bytes=len(outs[0]), identical=outs[0] == outs[1])
    assert outs[0] == outs[1]
