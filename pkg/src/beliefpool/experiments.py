"""Experiment runners: sample, split, learn sources, aggregate, compare.

Every (setting, run) cell draws its randomness from streams derived from
``(base_seed, setting index, run index)``, so a config plus a seed
determines every result row. Timings are kept on the rows but never written
to the result CSV, which therefore stays byte-identical across reruns.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .aggregation import AggregationConfig, SourceReport, aggr, samp_baseline
from .core import BayesNet, DataSet
from .errors import MissingSourceVariable, ParseError
from .inference import kl_divergence, sum_out_root
from .io import FORMAT_VERSION, load_network
from .learning import DataStatistics, DirichletSpec, SearchConfig, structure_search
from .sampling import derive_seed, forward_sample, make_rng, partition_by_variable, split_by_fractions

KINDS = ("sensitivity-m", "m-estimate", "subpop", "samp-compare")


@dataclass
class ExperimentConfig:
    kind: str
    truth: str
    name: str = "experiment"
    n_sources: int = 2
    m_grid: list = field(default_factory=lambda: [1000])
    m_true: Optional[int] = None
    estimate_grid: list = field(default_factory=list)
    alpha: Optional[list] = None
    runs: int = 5
    base_seed: int = 0
    source_xi: float = 1.0
    dm_xi: float = 1.0
    de_smooth: bool = True
    search: SearchConfig = field(default_factory=SearchConfig)
    with_samp: bool = False
    source_variable: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.alpha is None:
            self.alpha = [1.0 / self.n_sources] * self.n_sources
        if len(self.alpha) != self.n_sources:
            raise ValueError("alpha needs one entry per source")
        if abs(sum(self.alpha) - 1.0) > 1e-9 or any(a < 0 for a in self.alpha):
            raise ValueError("alpha must be nonnegative and sum to 1")
        if self.kind == "m-estimate":
            if not self.estimate_grid or self.m_true is None:
                raise ValueError("m-estimate needs m_true and a nonempty estimate_grid")
        elif not self.m_grid:
            raise ValueError("m_grid must be nonempty")
        if self.kind == "samp-compare":
            self.with_samp = True

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Optional[Path] = None) -> "ExperimentConfig":
        doc = dict(doc)
        version = doc.pop("format_version", None)
        if version != FORMAT_VERSION:
            raise ParseError(f"unsupported format_version {version!r}", "format_version")
        search = doc.pop("search", {}) or {}
        truth = doc.get("truth")
        if truth is None:
            raise ParseError("missing field 'truth'", "truth")
        if base_dir is not None and not truth.startswith("asset:") and not Path(truth).is_absolute():
            doc["truth"] = str(base_dir / truth)
        if "estimate_grid" in doc and isinstance(doc["estimate_grid"], dict):
            g = doc["estimate_grid"]
            doc["estimate_grid"] = list(np.logspace(math.log10(g["min"]), math.log10(g["max"]), g["num"]))
        try:
            return cls(search=SearchConfig(**search), **doc)
        except TypeError as exc:
            raise ParseError(str(exc), "config") from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
        return cls.from_dict(doc, path.parent)


@dataclass
class ResultRow:
    experiment: str
    kind: str
    setting: float
    run: int
    seed: int
    m: int
    m_estimate: float
    kl_sources: list
    kl_aggr: float
    kl_opt: float
    kl_samp: Optional[float] = None
    arcs_sources: list = field(default_factory=list)
    arcs_aggr: int = 0
    arcs_opt: int = 0
    arcs_samp: Optional[int] = None
    alphas: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


def result_columns(n_sources: int) -> list[str]:
    """Frozen CSV header for ``n_sources`` sources."""
    return (
        ["format_version", "experiment", "kind", "setting", "run", "seed", "m", "m_estimate"]
        + [f"alpha_{i + 1}" for i in range(n_sources)]
        + [f"kl_source_{i + 1}" for i in range(n_sources)]
        + ["kl_aggr", "kl_opt", "kl_samp"]
        + [f"arcs_source_{i + 1}" for i in range(n_sources)]
        + ["arcs_aggr", "arcs_opt", "arcs_samp"]
    )


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "inf" if math.isinf(x) else repr(x)
    return str(x)


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    n_sources = max((len(r.kl_sources) for r in rows), default=0)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result_columns(n_sources))
    pad = lambda xs: list(xs) + [None] * (n_sources - len(xs))  # noqa: E731
    for r in sorted(rows, key=lambda r: (r.setting, r.run)):
        w.writerow([_fmt(v) for v in (
            [FORMAT_VERSION, r.experiment, r.kind, float(r.setting), r.run, r.seed, r.m,
             float(r.m_estimate)]
            + pad(r.alphas) + pad(r.kl_sources)
            + [r.kl_aggr, r.kl_opt, r.kl_samp]
            + pad(r.arcs_sources)
            + [r.arcs_aggr, r.arcs_opt, r.arcs_samp]
        )])
    return buf.getvalue()


def write_results(rows: Sequence[ResultRow], path, timings_path=None) -> None:
    Path(path).write_text(rows_to_csv(rows))
    if timings_path is not None:
        phases = sorted({k for r in rows for k in r.timings})
        with open(timings_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["setting", "run"] + [f"seconds_{p}" for p in phases])
            for r in sorted(rows, key=lambda r: (r.setting, r.run)):
                w.writerow([_fmt(float(r.setting)), r.run]
                           + [f"{r.timings.get(p, 0.0):.4f}" for p in phases])


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# one cell of an experiment


@dataclass
class CellOutcome:
    sources: list
    kl_sources: list
    kl_opt: float
    arcs_opt: int
    aggr: dict  # m_estimate -> (kl, arcs)
    samp: Optional[tuple] = None
    timings: dict = field(default_factory=dict)


def learn_source(ds: DataSet, cfg: ExperimentConfig, rng) -> tuple[BayesNet, DirichletSpec]:
    prior = DirichletSpec.uniform(cfg.source_xi)
    res = structure_search(DataStatistics(ds), ds.size, cfg.search, rng, prior=prior)
    return res.net, prior


def run_cell(cfg: ExperimentConfig, parts: Sequence[DataSet], pooled: DataSet,
             truth: BayesNet, cell_seed: int, estimates: Sequence[float]) -> CellOutcome:
    """Learn sources on ``parts``, OPT on ``pooled``, AGGR per estimate; score by KL."""
    timings = {}
    m = pooled.size
    t0 = time.perf_counter()
    sources = []
    for i, part in enumerate(parts):
        if part.size == 0:
            sources.append(None)
            continue
        net, prior = learn_source(part, cfg, make_rng(cell_seed, 1, i))
        sources.append(SourceReport(net, part.size / m, prior, part.size))
    timings["sources"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    dm_prior = DirichletSpec.uniform(cfg.dm_xi)
    opt = structure_search(DataStatistics(pooled), m, cfg.search, make_rng(cell_seed, 2),
                           prior=dm_prior)
    timings["opt"] = time.perf_counter() - t0

    active = [s for s in sources if s is not None]
    t0 = time.perf_counter()
    results = {}
    for est in estimates:
        acfg = AggregationConfig(m_estimate=float(est), dm_prior=dm_prior, search=cfg.search,
                                 parameterization="map", de_smooth=cfg.de_smooth)
        res = aggr(active, acfg, make_rng(cell_seed, 3))
        results[float(est)] = (kl_divergence(truth, res.net), res.net.arc_count())
    timings["aggr"] = time.perf_counter() - t0

    samp = None
    if cfg.with_samp:
        t0 = time.perf_counter()
        acfg = AggregationConfig(m_estimate=float(m), dm_prior=dm_prior, search=cfg.search,
                                 parameterization="map")
        res = samp_baseline(active, m, acfg, make_rng(cell_seed, 4))
        samp = (kl_divergence(truth, res.net), res.net.arc_count())
        timings["samp"] = time.perf_counter() - t0

    return CellOutcome(
        sources=sources,
        kl_sources=[kl_divergence(truth, s.net) if s else None for s in sources],
        kl_opt=kl_divergence(truth, opt.net),
        arcs_opt=opt.net.arc_count(),
        aggr=results,
        samp=samp,
        timings=timings,
    )


def _rows_for(cfg, setting, run, seed, m, outcome: CellOutcome) -> list[ResultRow]:
    rows = []
    for est, (kl, arcs) in outcome.aggr.items():
        rows.append(ResultRow(
            experiment=cfg.name, kind=cfg.kind,
            setting=est if cfg.kind == "m-estimate" else setting,
            run=run, seed=seed, m=m, m_estimate=est,
            kl_sources=list(outcome.kl_sources), kl_aggr=kl, kl_opt=outcome.kl_opt,
            kl_samp=outcome.samp[0] if outcome.samp else None,
            arcs_sources=[s.net.arc_count() if s else None for s in outcome.sources],
            arcs_aggr=arcs, arcs_opt=outcome.arcs_opt,
            arcs_samp=outcome.samp[1] if outcome.samp else None,
            alphas=[s.alpha if s else 0.0 for s in outcome.sources],
            timings=dict(outcome.timings),
        ))
    return rows


def _split_run(cfg, truth, m, cell_seed):
    pooled = forward_sample(truth, m, make_rng(cell_seed, 0))
    return pooled, split_by_fractions(pooled, cfg.alpha)


def run_sensitivity_m(cfg: ExperimentConfig) -> list[ResultRow]:
    truth = load_network(cfg.truth)
    rows = []
    for s_idx, m in enumerate(cfg.m_grid):
        for run in range(cfg.runs):
            seed = derive_seed(cfg.base_seed, s_idx, run)
            pooled, parts = _split_run(cfg, truth, int(m), seed)
            outcome = run_cell(cfg, parts, pooled, truth, seed, [int(m)])
            rows += _rows_for(cfg, int(m), run, seed, int(m), outcome)
    return rows


def run_samp_compare(cfg: ExperimentConfig) -> list[ResultRow]:
    cfg.with_samp = True
    return run_sensitivity_m(cfg)


def run_m_estimate(cfg: ExperimentConfig) -> list[ResultRow]:
    """Same data and sources for every estimate within a run; only AGGR's m varies."""
    truth = load_network(cfg.truth)
    m = int(cfg.m_true)
    rows = []
    for run in range(cfg.runs):
        seed = derive_seed(cfg.base_seed, 0, run)
        pooled, parts = _split_run(cfg, truth, m, seed)
        outcome = run_cell(cfg, parts, pooled, truth, seed, cfg.estimate_grid)
        rows += _rows_for(cfg, m, run, seed, m, outcome)
    return rows


def run_subpop(cfg: ExperimentConfig) -> list[ResultRow]:
    """Sample the extended network, route rows by the source variable, score vs. its marginal."""
    extended = load_network(cfg.truth)
    name = cfg.source_variable or _source_variable_hint(cfg.truth)
    if name is None or name not in extended.names:
        raise MissingSourceVariable(f"truth network has no source variable {name!r}")
    s = extended.index(name)
    truth = sum_out_root(extended, s)
    rows = []
    for s_idx, m in enumerate(cfg.m_grid):
        for run in range(cfg.runs):
            seed = derive_seed(cfg.base_seed, s_idx, run)
            data = forward_sample(extended, int(m), make_rng(seed, 0))
            split = partition_by_variable(data, s)
            parts = [split[k] for k in sorted(split)]
            pooled = DataSet.concat(parts)
            outcome = run_cell(cfg, parts, pooled, truth, seed, [int(m)])
            rows += _rows_for(cfg, int(m), run, seed, int(m), outcome)
    return rows


def _source_variable_hint(truth: str) -> Optional[str]:
    from .io import asset_path

    path = asset_path(truth[6:] + ("" if truth.endswith(".json") else ".json")) \
        if truth.startswith("asset:") else Path(truth)
    try:
        return json.loads(Path(path).read_text()).get("source_variable")
    except (OSError, json.JSONDecodeError):
        return None


RUNNERS = {
    "sensitivity-m": run_sensitivity_m,
    "m-estimate": run_m_estimate,
    "subpop": run_subpop,
    "samp-compare": run_samp_compare,
}


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    return RUNNERS[cfg.kind](cfg)


# ---------------------------------------------------------------------------
# summaries


def _num(x: str) -> Optional[float]:
    if x == "" or x is None:
        return None
    return float(x)


def summarize(records: Sequence[dict]) -> list[dict]:
    """Median and mean of every KL / arc column, grouped by (experiment, setting)."""
    groups: dict[tuple, list[dict]] = {}
    for rec in records:
        groups.setdefault((rec["experiment"], float(rec["setting"])), []).append(rec)
    metrics = [c for c in (records[0].keys() if records else []) if c.startswith(("kl_", "arcs_"))]
    out = []
    for (exp, setting), recs in sorted(groups.items()):
        row = {"experiment": exp, "setting": setting, "runs": len(recs)}
        for c in metrics:
            vals = [v for v in (_num(r[c]) for r in recs) if v is not None]
            row[f"median_{c}"] = statistics.median(vals) if vals else None
            row[f"mean_{c}"] = statistics.fmean(vals) if vals else None
        # all sources' KLs pooled over runs
        src = [v for r in recs for c in metrics if c.startswith("kl_source_")
               for v in [_num(r[c])] if v is not None]
        row["median_kl_sources"] = statistics.median(src) if src else None
        out.append(row)
    return out


def summary_to_csv(summary: Sequence[dict]) -> str:
    if not summary:
        return ""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(summary[0].keys())
    w.writerow(keys)
    for row in summary:
        w.writerow([_fmt(row[k]) for k in keys])
    return buf.getvalue()
