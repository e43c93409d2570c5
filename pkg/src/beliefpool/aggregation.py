"""Opinion-pool aggregation of learned networks.

The pooled distribution of sources that learned from disjoint datasets is
the weighted mixture of their distributions with weights ``alpha_i =
M_i / M``. :class:`LinopPool` serves family marginals of that mixture to
the ordinary structure learner, computing each one locally in every source
network (mixtures commute with marginalisation) and caching it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    DEFAULT_STATE_LIMIT,
    BayesNet,
    DataSet,
    Factor,
    full_joint,
)
from .errors import (
    DegenerateCounts,
    MissingPriorInfo,
    ScopeMismatch,
    UnknownVariable,
    VariableMismatch,
    WeightError,
)
from .inference import marginal
from .learning import (
    DataStatistics,
    DirichletSpec,
    SearchConfig,
    SearchResult,
    structure_search,
)
from .sampling import forward_sample, largest_remainder, make_rng

WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class SourceReport:
    """One expert's network, pool weight, and (optionally) prior and sample count."""

    net: BayesNet
    alpha: float
    prior: Optional[DirichletSpec] = None
    m: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise WeightError(f"alpha {self.alpha} outside [0, 1]")
        if self.m is not None and self.m < 0:
            raise ValueError("sample count must be nonnegative")


def check_weights(weights: Sequence[float]) -> None:
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise WeightError("no weights given")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise WeightError("weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise WeightError(f"weights sum to {w.sum()!r}, not 1")


def check_sources(sources: Sequence[SourceReport]) -> None:
    if not sources:
        raise ValueError("at least one source is required")
    check_weights([s.alpha for s in sources])
    variables = sources[0].net.variables
    for s in sources[1:]:
        if s.net.variables != variables:
            raise VariableMismatch("sources are defined over different variables")
    ms = [s.m for s in sources]
    if all(m is not None for m in ms) and sum(ms) > 0:
        total = sum(ms)
        for s in sources:
            if abs(s.alpha - s.m / total) > WEIGHT_TOL:
                raise WeightError(
                    f"alpha {s.alpha} disagrees with sample share {s.m}/{total}"
                )


def weights_from_counts(counts: Sequence[int]) -> list[float]:
    total = sum(counts)
    return [c / total for c in counts]


def linop(weights: Sequence[float], dists: Sequence[Factor]) -> Factor:
    """Pointwise weighted sum of distributions sharing one scope."""
    check_weights(weights)
    if len(weights) != len(dists):
        raise WeightError("need exactly one weight per distribution")
    scope = dists[0].scope
    values = np.zeros(dists[0].values.shape)
    for w, d in zip(weights, dists):
        if set(d.scope) != set(scope) or len(d.scope) != len(scope):
            raise ScopeMismatch(f"scope {d.scope} differs from {scope}")
        values = values + w * d.reorder(scope).values
    return Factor(scope, values)


def de_smooth_family(source: SourceReport, family: Sequence[int],
                     limit: int = DEFAULT_STATE_LIMIT) -> Factor:
    """Estimate the source's empirical marginal over ``family`` by undoing its prior.

    Inverts ``p = (N + xi*rho) / (M + xi)`` for ``N / M``; negative
    estimates are clipped to zero and the result renormalised.
    """
    if source.prior is None or source.m is None:
        raise MissingPriorInfo("de-smoothing needs the source's prior and sample count")
    if source.m == 0:
        raise DegenerateCounts("source saw no samples")
    family = tuple(family)
    p = marginal(source.net, family, limit)
    xi = source.prior.xi
    if xi == 0:
        return p
    rho = source.prior.prior_joint(family, source.net.cards)
    est = ((source.m + xi) * p.values - rho * xi) / source.m
    est = np.clip(est, 0.0, None)
    return Factor(family, est / est.sum())


class LinopPool:
    """Mixture of source networks exposed as a statistics source.

    ``family_joint(scope)`` returns ``sum_i alpha_i * marginal(net_i, scope)``
    (each source marginal first de-smoothed when ``de_smooth`` is set).
    Results are memoised per variable set; inserts are idempotent, so the
    cache is safe to share between threads.
    """

    def __init__(self, sources: Sequence[SourceReport], de_smooth: bool = False,
                 limit: int = DEFAULT_STATE_LIMIT):
        check_sources(sources)
        if de_smooth:
            for s in sources:
                if s.prior is None or s.m is None:
                    raise MissingPriorInfo("de-smoothing needs every source's prior and m")
        self.sources = tuple(sources)
        self.de_smooth = de_smooth
        self.limit = limit
        self.variables = sources[0].net.variables
        ms = [s.m for s in sources]
        self.sample_count = sum(ms) if all(m is not None for m in ms) else None
        self._cache: dict[tuple[int, ...], Factor] = {}
        self._lock = threading.Lock()

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()

    def _source_marginal(self, source: SourceReport, scope: tuple[int, ...]) -> Factor:
        if self.de_smooth:
            return de_smooth_family(source, scope, self.limit)
        return marginal(source.net, scope, self.limit)

    def family_joint(self, scope: Sequence[int]) -> Factor:
        scope = tuple(scope)
        for v in scope:
            if not 0 <= v < len(self.variables):
                raise UnknownVariable(f"variable index {v} not in the pool")
        key = tuple(sorted(scope))
        hit = self._cache.get(key)
        if hit is None:
            active = [s for s in self.sources if s.alpha > 0]
            hit = linop([s.alpha for s in active],
                        [self._source_marginal(s, key) for s in active])
            with self._lock:
                self._cache[key] = hit
        return hit.reorder(scope)


def linop_marginal(pool: LinopPool, targets: Sequence[int]) -> Factor:
    return pool.family_joint(targets)


def map_aggregate_joint(sources: Sequence[SourceReport], dm_prior: DirichletSpec,
                        m: float, limit: int = DEFAULT_STATE_LIMIT) -> Factor:
    """Joint the DM would learn by MAP from the pooled data, rebuilt from MAP sources.

    ``p*(w) = (m*LinOP(w) + xi*rho(w)) / (m + xi) + sum_i xi_i/(m + xi) * (p_i(w) - rho_i(w))``
    """
    check_sources(sources)
    for s in sources:
        if s.prior is None or s.m is None:
            raise MissingPriorInfo("every source needs a prior and a sample count")
    n = sources[0].net.n
    cards = sources[0].net.cards
    scope = tuple(range(n))
    joints = [full_joint(s.net, limit) for s in sources]
    pooled = linop([s.alpha for s in sources], joints).values
    xi = dm_prior.xi
    out = (m * pooled + xi * dm_prior.prior_joint(scope, cards)) / (m + xi)
    for s, j in zip(sources, joints):
        out = out + s.prior.xi / (m + xi) * (j.values - s.prior.prior_joint(scope, cards))
    return Factor(scope, out)


@dataclass(frozen=True)
class AggregationConfig:
    m_estimate: Optional[float] = None
    dm_prior: Optional[DirichletSpec] = None
    search: SearchConfig = field(default_factory=SearchConfig)
    parameterization: str = "mle"  # "mle" or "map"
    de_smooth: bool = False

    def __post_init__(self):
        if self.m_estimate is not None and not self.m_estimate > 0:
            raise ValueError("m_estimate must be positive")
        if self.parameterization not in ("mle", "map"):
            raise ValueError(f"unknown parameterization {self.parameterization!r}")
        if self.parameterization == "map" and self.dm_prior is None:
            raise MissingPriorInfo("MAP parameterization needs dm_prior")

    def resolve_m(self, sources: Sequence[SourceReport]) -> float:
        if self.m_estimate is not None:
            return float(self.m_estimate)
        ms = [s.m for s in sources]
        if any(m is None for m in ms):
            raise MissingPriorInfo("m_estimate is required when sample counts are unknown")
        return float(sum(ms))

    def final_prior(self) -> Optional[DirichletSpec]:
        return self.dm_prior if self.parameterization == "map" else None


def aggr(sources: Sequence[SourceReport], config: AggregationConfig,
         rng: Optional[np.random.Generator] = None) -> SearchResult:
    """Structure search scored and parameterised against the pooled family marginals."""
    pool = LinopPool(sources, de_smooth=config.de_smooth)
    m = config.resolve_m(sources)
    return structure_search(pool, m, config.search, rng, prior=config.final_prior())


def samp_baseline(sources: Sequence[SourceReport], m: int, config: AggregationConfig,
                  rng: Optional[np.random.Generator] = None) -> SearchResult:
    """Learn from synthetic data: ``alpha_i * m`` forward samples from each source."""
    check_sources(sources)
    if m < len(sources):
        raise ValueError("need at least one sample per source")
    if rng is None:
        rng = make_rng(config.search.seed)
    quotas = largest_remainder([s.alpha for s in sources], m)
    # one child stream per source keeps draws independent of the quotas of others
    seeds = rng.integers(0, 2**63 - 1, size=len(sources) + 1)
    parts = [
        forward_sample(s.net, q, make_rng(int(seed)))
        for s, q, seed in zip(sources, quotas, seeds)
    ]
    ds = DataSet.concat(parts)
    return structure_search(DataStatistics(ds), m, config.search,
                            make_rng(int(seeds[-1])), prior=config.final_prior())

