"""Parameter estimation, MDL scoring and greedy structure search.

Every learner here reads data through a *statistics source*: any object
with a ``variables`` tuple and a ``family_joint(scope)`` method returning the
joint distribution over ``scope`` as a :class:`Factor`. A dataset-backed
source lives here; the opinion-pool source lives in
:mod:`beliefpool.aggregation`. Both are scored by the same code.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Protocol, Sequence

import numpy as np

from .core import (
    DEFAULT_STATE_LIMIT,
    BayesNet,
    Cpt,
    Dag,
    DataSet,
    Factor,
    check_state_space,
    marginalize,
    topological_order,
)
from .errors import UnknownVariable
from .inference import conditional_from_marginals
from .sampling import joint_counts, make_rng

# score differences below this are treated as ties (float noise, not signal)
SCORE_TOL = 1e-9


@dataclass(frozen=True)
class DirichletSpec:
    """Equivalent-sample Dirichlet prior: prior distribution ``rho`` and weight ``xi``.

    ``rho=None`` stands for the uniform distribution over whatever scope is
    asked for, which avoids materialising a joint over every variable.
    """

    rho: Optional[Factor]
    xi: float

    def __post_init__(self):
        if not self.xi >= 0:
            raise ValueError("equivalent sample size must be nonnegative")
        if self.rho is not None and not self.rho.is_distribution():
            raise ValueError("rho must be a probability distribution")

    @classmethod
    def uniform(cls, xi: float = 1.0) -> "DirichletSpec":
        return cls(None, float(xi))

    def prior_joint(self, scope: Sequence[int], cards: Sequence[int]) -> np.ndarray:
        """rho restricted to ``scope`` (axes in ``scope`` order)."""
        scope = tuple(scope)
        shape = tuple(cards[s] for s in scope)
        if self.rho is None:
            return np.full(shape, 1.0 / max(1, int(np.prod(shape, dtype=np.int64))))
        return marginalize(self.rho, scope).reorder(scope).values

    def pseudo_counts(self, scope: Sequence[int], cards: Sequence[int]) -> np.ndarray:
        return self.prior_joint(scope, cards) * self.xi


class StatisticsSource(Protocol):
    variables: tuple

    def family_joint(self, scope: Sequence[int]) -> Factor: ...


class DataStatistics:
    """Statistics source backed by a complete dataset (empirical family joints)."""

    def __init__(self, ds: DataSet):
        self.ds = ds
        self.variables = ds.variables
        self.sample_count = ds.size
        self._cache: dict[tuple[int, ...], Factor] = {}

    def family_joint(self, scope: Sequence[int]) -> Factor:
        scope = tuple(scope)
        hit = self._cache.get(scope)
        if hit is None:
            self.ds.require_rows()
            hit = Factor(scope, joint_counts(self.ds, scope) / self.ds.size)
            self._cache[scope] = hit
        return hit


def as_statistics(data) -> StatisticsSource:
    return DataStatistics(data) if isinstance(data, DataSet) else data


def _cards(stats) -> tuple[int, ...]:
    return tuple(v.card for v in stats.variables)


def _check_family(n: int, child: int, parents: Sequence[int]) -> None:
    for v in (child, *parents):
        if not 0 <= v < n:
            raise UnknownVariable(f"variable index {v} out of range")
    if child in parents:
        raise ValueError("child cannot be its own parent")


def family_counts(ds: DataSet, child: int, parents: Sequence[int]) -> np.ndarray:
    """Counts with one row per parent configuration and one column per child state."""
    parents = tuple(parents)
    _check_family(len(ds.variables), child, parents)
    counts = joint_counts(ds, parents + (child,))
    return counts.reshape(-1, ds.variables[child].card)


def fit_mle(dag: Dag, stats, limit: int = DEFAULT_STATE_LIMIT) -> BayesNet:
    """Maximum-likelihood CPTs, parent by parent in topological order."""
    stats = as_statistics(stats)
    cards = _cards(stats)
    cpts: list[Optional[Cpt]] = [None] * dag.n
    for i in topological_order(dag):
        pa = dag.parents(i)
        check_state_space([cards[v] for v in pa + (i,)], limit)
        cpts[i] = conditional_from_marginals(stats.family_joint(pa + (i,)), i, pa)
    return BayesNet(stats.variables, dag, cpts)


def fit_map(
    dag: Dag,
    data,
    prior: DirichletSpec,
    m: Optional[float] = None,
    limit: int = DEFAULT_STATE_LIMIT,
) -> BayesNet:
    """Dirichlet posterior-predictive CPTs.

    ``P(x|pa) = (N(x,pa) + xi*rho(x,pa)) / (N(pa) + xi*rho(pa))`` with
    ``N = m * family joint``. For a dataset ``m`` defaults to its size, so
    the counts are exact.
    """
    stats = as_statistics(data)
    if m is None:
        m = getattr(stats, "sample_count", None)
        if m is None:
            raise ValueError("effective sample count m is required for this source")
    cards = _cards(stats)
    cpts: list[Optional[Cpt]] = [None] * dag.n
    for i in topological_order(dag):
        pa = dag.parents(i)
        fam = pa + (i,)
        check_state_space([cards[v] for v in fam], limit)
        k = cards[i]
        pseudo = prior.pseudo_counts(fam, cards).reshape(-1, k)
        if m > 0:
            counts = m * stats.family_joint(fam).reorder(fam).values.reshape(-1, k)
        else:
            counts = np.zeros_like(pseudo)
        num = counts + pseudo
        den = num.sum(axis=1, keepdims=True)
        table = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0 / k)
        cpts[i] = Cpt(i, pa, table)
    return BayesNet(stats.variables, dag, cpts)


def family_loglik(stats, child: int, parents: Sequence[int]) -> float:
    """sum p(x, pa) log2 p(x | pa) over one family (0 log 0 = 0)."""
    fam = tuple(parents) + (child,)
    joint = stats.family_joint(fam).values.reshape(-1, stats.variables[child].card)
    pa = joint.sum(axis=1, keepdims=True)
    pos = joint > 0
    ratio = np.where(pos, joint / np.where(pa > 0, pa, 1.0), 1.0)
    return float(np.sum(joint[pos] * np.log2(ratio[pos])))


def family_dim(cards: Sequence[int], child: int, parents: Sequence[int]) -> int:
    rows = 1
    for p in parents:
        rows *= cards[p]
    return (cards[child] - 1) * rows


class FamilyScorer:
    """Memoised per-family MDL terms; a DAG's score is the sum over its families."""

    def __init__(self, stats, m: float, structure_dl: bool = True,
                 limit: int = DEFAULT_STATE_LIMIT):
        if not m > 0:
            raise ValueError("effective sample count must be positive")
        self.stats = stats
        self.m = float(m)
        self.structure_dl = structure_dl
        self.limit = limit
        self.cards = _cards(stats)
        n = len(self.cards)
        self._penalty = math.log2(self.m) / 2.0
        self._bits_per_parent = math.log2(n) if n > 1 else 0.0
        self._cache: dict[tuple[int, tuple[int, ...]], float] = {}

    def local(self, child: int, parents: tuple[int, ...]) -> float:
        key = (child, parents)
        hit = self._cache.get(key)
        if hit is None:
            check_state_space([self.cards[v] for v in parents + (child,)], self.limit)
            hit = (
                self.m * family_loglik(self.stats, child, parents)
                - self._penalty * family_dim(self.cards, child, parents)
            )
            if self.structure_dl:
                hit -= len(parents) * self._bits_per_parent
            self._cache[key] = hit
        return hit

    def score(self, dag: Dag) -> float:
        return sum(self.local(i, dag.parents(i)) for i in dag.nodes)


def mdl_score(dag: Dag, stats, m: float, structure_dl: bool = True) -> float:
    """MDL score in bits: m * loglik - (log2 m)/2 * Dim - DL (higher is better)."""
    return FamilyScorer(as_statistics(stats), m, structure_dl).score(dag)


def default_max_parents(n: int) -> Optional[int]:
    return None if n <= 10 else 4


@dataclass(frozen=True)
class SearchConfig:
    restarts: int = 1
    max_parents: Optional[int] = None
    seed: int = 0
    start_mode: str = "empty"  # "empty" or "random"
    structure_dl: bool = True
    exhaustive: bool = False
    max_steps: int = 10_000

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.start_mode not in ("empty", "random"):
            raise ValueError(f"unknown start mode {self.start_mode!r}")

    def parent_cap(self, n: int) -> Optional[int]:
        return self.max_parents if self.max_parents is not None else default_max_parents(n)


def _reachability(n: int, parents: Sequence[Sequence[int]]) -> list[set[int]]:
    """reach[u] = nodes reachable from u by a directed path of length >= 1."""
    children = [[] for _ in range(n)]
    for v in range(n):
        for u in parents[v]:
            children[u].append(v)
    reach = []
    for u in range(n):
        seen: set[int] = set()
        stack = list(children[u])
        while stack:
            x = stack.pop()
            if x not in seen:
                seen.add(x)
                stack.extend(children[x])
        reach.append(seen)
    return reach


def _moves(n: int, parents: Sequence[tuple[int, ...]], max_parents: Optional[int]
           ) -> Iterator[tuple[str, int, int]]:
    """Legal single-edge moves: additions, then removals, then reversals."""
    reach = _reachability(n, parents)
    edges = sorted((u, v) for v in range(n) for u in parents[v])
    edge_set = set(edges)
    for u in range(n):
        for v in range(n):
            if u == v or (u, v) in edge_set or (v, u) in edge_set:
                continue
            if max_parents is not None and len(parents[v]) >= max_parents:
                continue
            if u in reach[v]:
                continue
            yield ("add", u, v)
    for u, v in edges:
        yield ("remove", u, v)
    for u, v in edges:
        if max_parents is not None and len(parents[u]) >= max_parents:
            continue
        # reversing u->v makes a cycle iff another u ~> v path exists
        if any(c != v and v in reach[c] for c in range(n) if u in parents[c]):
            continue
        yield ("reverse", u, v)


def _apply(parents: list[tuple[int, ...]], move: tuple[str, int, int]) -> list[tuple[int, ...]]:
    kind, u, v = move
    out = list(parents)
    if kind == "add":
        out[v] = tuple(sorted(out[v] + (u,)))
    elif kind == "remove":
        out[v] = tuple(p for p in out[v] if p != u)
    else:
        out[v] = tuple(p for p in out[v] if p != u)
        out[u] = tuple(sorted(out[u] + (v,)))
    return out


def _dag_from_parents(parents: Sequence[tuple[int, ...]]) -> Dag:
    return Dag(len(parents), frozenset((u, v) for v, pa in enumerate(parents) for u in pa))


def neighbors(dag: Dag, max_parents: Optional[int] = None) -> list[Dag]:
    """Every DAG one edge addition, removal or reversal away, in move order."""
    parents = [dag.parents(i) for i in dag.nodes]
    return [_dag_from_parents(_apply(parents, mv)) for mv in _moves(dag.n, parents, max_parents)]


def random_dag(n: int, rng: np.random.Generator, max_parents: Optional[int] = None,
               edge_prob: Optional[float] = None) -> Dag:
    """Random DAG: random node order, each forward pair linked independently.

    The default edge probability gives about ``n`` edges on average.
    """
    if edge_prob is None:
        edge_prob = min(1.0, 2.0 / (n - 1)) if n > 1 else 0.0
    order = rng.permutation(n)
    parents: list[list[int]] = [[] for _ in range(n)]
    for j in range(n):
        for i in range(j):
            u, v = int(order[i]), int(order[j])
            if rng.random() < edge_prob and (max_parents is None or len(parents[v]) < max_parents):
                parents[v].append(u)
    return _dag_from_parents([tuple(sorted(p)) for p in parents])


def all_dags(n: int) -> Iterator[Dag]:
    """Every DAG on ``n`` labelled nodes, starting with the empty graph.

    Each unordered pair i<j takes one of: no edge, i->j, j->i.
    """
    pairs = list(itertools.combinations(range(n), 2))
    for choice in itertools.product((0, 1, 2), repeat=len(pairs)):
        edges = set()
        for (i, j), c in zip(pairs, choice):
            if c == 1:
                edges.add((i, j))
            elif c == 2:
                edges.add((j, i))
        dag = Dag(n, frozenset(edges))
        parents = [dag.parents(i) for i in range(n)]
        reach = _reachability(n, parents)
        if all(u not in reach[u] for u in range(n)):
            yield dag


@dataclass
class SearchResult:
    net: BayesNet
    score: float
    dag: Dag
    restart_scores: list[float] = field(default_factory=list)


def hill_climb(scorer: FamilyScorer, start: Dag, max_parents: Optional[int],
               max_steps: int = 10_000) -> tuple[Dag, float]:
    """Greedy ascent: take the best neighbour while it strictly improves."""
    n = start.n
    parents = [start.parents(i) for i in range(n)]
    local = [scorer.local(i, parents[i]) for i in range(n)]
    for _ in range(max_steps):
        best_delta, best_move = SCORE_TOL, None
        for move in _moves(n, parents, max_parents):
            kind, u, v = move
            if kind == "add":
                delta = scorer.local(v, tuple(sorted(parents[v] + (u,)))) - local[v]
            elif kind == "remove":
                delta = scorer.local(v, tuple(p for p in parents[v] if p != u)) - local[v]
            else:
                delta = (
                    scorer.local(v, tuple(p for p in parents[v] if p != u))
                    + scorer.local(u, tuple(sorted(parents[u] + (v,))))
                    - local[v] - local[u]
                )
            if delta > best_delta:
                best_delta, best_move = delta, move
        if best_move is None:
            break
        parents = _apply(parents, best_move)
        for node in {best_move[1], best_move[2]}:
            local[node] = scorer.local(node, parents[node])
    return _dag_from_parents(parents), float(sum(local))


def exhaustive(scorer: FamilyScorer, n: int, max_parents: Optional[int] = None
               ) -> tuple[Dag, float]:
    """Best DAG over all DAGs; near-ties go to the first in enumeration order."""
    best, best_score = None, -math.inf
    for dag in all_dags(n):
        if max_parents is not None and any(len(dag.parents(i)) > max_parents for i in range(n)):
            continue
        s = scorer.score(dag)
        if s > best_score + SCORE_TOL:
            best, best_score = dag, s
    return best, best_score


def parameterize(dag: Dag, stats, prior: Optional[DirichletSpec], m: float) -> BayesNet:
    return fit_mle(dag, stats) if prior is None else fit_map(dag, stats, prior, m)


def structure_search(
    stats,
    m: float,
    config: SearchConfig = SearchConfig(),
    rng: Optional[np.random.Generator] = None,
    prior: Optional[DirichletSpec] = None,
) -> SearchResult:
    """Hill climbing with restarts (or exhaustive search) under the MDL score.

    In ``random`` start mode the first restart begins from the empty graph
    and later ones from random DAGs drawn from ``rng``. The winning DAG is
    parameterised by MLE, or by MAP when ``prior`` is given.
    """
    stats = as_statistics(stats)
    n = len(stats.variables)
    scorer = FamilyScorer(stats, m, config.structure_dl)
    cap = config.parent_cap(n)
    if rng is None:
        rng = make_rng(config.seed)
    if config.exhaustive:
        dag, score = exhaustive(scorer, n, cap)
        restart_scores = [score]
    else:
        dag, score, restart_scores = None, -math.inf, []
        # restarts from the empty graph would all be identical
        runs = config.restarts if config.start_mode == "random" else 1
        for r in range(runs):
            if config.start_mode == "random" and r > 0:
                start = random_dag(n, rng, cap)
            else:
                start = Dag.empty(n)
            cand, s = hill_climb(scorer, start, cap, config.max_steps)
            restart_scores.append(s)
            if s > score + SCORE_TOL:
                dag, score = cand, s
    return SearchResult(parameterize(dag, stats, prior, m), score, dag, restart_scores)
