"""Discrete variables, DAGs, CPTs, factors and datasets.

Conventions used everywhere in the package:

* Variables are referred to by their integer index in the owning network
  or dataset.
* A CPT table has one row per parent configuration. Rows enumerate parent
  states lexicographically over ``parents`` with the LAST parent varying
  fastest (C order), and the parents of node ``i`` are always listed in
  ascending index order.
* Probabilities are float64; nothing is stored in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CycleError,
    EmptyDataSet,
    ScopeMismatch,
    StateSpaceTooLarge,
    UnknownVariable,
    ValidationError,
)

NORMALIZATION_TOL = 1e-9
DEFAULT_STATE_LIMIT = 2**22


@dataclass(frozen=True)
class Variable:
    name: str
    states: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        if len(self.states) < 2:
            raise ValueError(f"variable {self.name!r} needs at least 2 states")
        if len(set(self.states)) != len(self.states):
            raise ValueError(f"variable {self.name!r} has duplicate state labels")

    @property
    def card(self) -> int:
        return len(self.states)


def check_unique_names(variables: Sequence[Variable]) -> None:
    names = [v.name for v in variables]
    if len(set(names)) != len(names):
        raise ValueError("variable names must be unique")


@dataclass(frozen=True)
class Dag:
    """Directed graph over nodes ``0..n-1``.

    Acyclicity is not enforced at construction so that invalid graphs can
    still be reported by :func:`validate_network`; use
    :func:`topological_order` to check it.
    """

    n: int
    edges: frozenset = frozenset()
    _parents: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        edges = frozenset((int(u), int(v)) for u, v in self.edges)
        for u, v in edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge {(u, v)} out of range for {self.n} nodes")
            if u == v:
                raise ValueError(f"self-loop on node {u}")
        object.__setattr__(self, "edges", edges)
        pa = [[] for _ in range(self.n)]
        for u, v in edges:
            pa[v].append(u)
        object.__setattr__(self, "_parents", tuple(tuple(sorted(p)) for p in pa))

    @classmethod
    def empty(cls, n: int) -> "Dag":
        return cls(n, frozenset())

    @property
    def nodes(self) -> range:
        return range(self.n)

    def parents(self, i: int) -> tuple[int, ...]:
        return self._parents[i]

    def children(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(v for u, v in self.edges if u == i))

    def with_edges(self, add=(), remove=()) -> "Dag":
        return Dag(self.n, (self.edges - frozenset(remove)) | frozenset(add))

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


def topological_order(dag: Dag) -> list[int]:
    """Kahn's algorithm; among ready nodes the smallest index goes first."""
    import heapq

    indeg = [len(dag.parents(i)) for i in dag.nodes]
    children = [[] for _ in dag.nodes]
    for u, v in dag.edges:
        children[u].append(v)
    ready = [i for i in dag.nodes if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        u = heapq.heappop(ready)
        order.append(u)
        for v in children[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, v)
    if len(order) != dag.n:
        raise CycleError("edge set contains a directed cycle")
    return order


def is_acyclic(dag: Dag) -> bool:
    try:
        topological_order(dag)
    except CycleError:
        return False
    return True


@dataclass(frozen=True)
class Cpt:
    """Conditional table P(child | parents), shape (prod parent cards, child card)."""

    child: int
    parents: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        table = np.array(self.table, dtype=np.float64)
        if table.ndim == 1:
            table = table[None, :]
        table.setflags(write=False)
        object.__setattr__(self, "table", table)


@dataclass(frozen=True)
class Factor:
    """Nonnegative table over an ordered scope; axis ``k`` is ``scope[k]``."""

    scope: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(int(s) for s in self.scope))
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != len(self.scope):
            raise ScopeMismatch(
                f"values have {values.ndim} axes but scope has {len(self.scope)} variables"
            )
        if len(set(self.scope)) != len(self.scope):
            raise ScopeMismatch("duplicate variable in factor scope")
        object.__setattr__(self, "values", values)

    @property
    def cards(self) -> tuple[int, ...]:
        return self.values.shape

    def total(self) -> float:
        return float(self.values.sum())

    def is_distribution(self, tol: float = NORMALIZATION_TOL) -> bool:
        return bool(np.all(self.values >= 0)) and abs(self.total() - 1.0) <= tol

    def reorder(self, scope: Sequence[int]) -> "Factor":
        scope = tuple(scope)
        if set(scope) != set(self.scope) or len(scope) != len(self.scope):
            raise ScopeMismatch(f"cannot reorder {self.scope} to {scope}")
        if scope == self.scope:
            return self
        axes = [self.scope.index(s) for s in scope]
        return Factor(scope, np.transpose(self.values, axes))

    def __mul__(self, other: "Factor") -> "Factor":
        return factor_product([self, other])

    def __repr__(self):
        return f"Factor(scope={self.scope}, values={self.values.tolist()!r})"


def factor_product(factors: Sequence[Factor], keep: Iterable[int] | None = None) -> Factor:
    """Multiply factors, summing out every variable not in ``keep``.

    With ``keep=None`` nothing is summed out. The result scope is the
    first-seen order of variables across ``factors`` (restricted to ``keep``).
    """
    union: list[int] = []
    for f in factors:
        for s in f.scope:
            if s not in union:
                union.append(s)
    out = union if keep is None else [s for s in union if s in set(keep)]
    if not factors:
        return Factor((), np.array(1.0))
    label = {v: k for k, v in enumerate(union)}
    operands = []
    for f in factors:
        operands.append(f.values)
        operands.append([label[s] for s in f.scope])
    values = np.einsum(*operands, [label[s] for s in out])
    return Factor(tuple(out), values)


def marginalize(f: Factor, keep: Iterable[int]) -> Factor:
    """Sum out every scope variable not in ``keep``; keeps ``f``'s axis order."""
    keep = set(keep)
    missing = keep - set(f.scope)
    if missing:
        raise UnknownVariable(f"variables {sorted(missing)} not in factor scope {f.scope}")
    drop = tuple(k for k, s in enumerate(f.scope) if s not in keep)
    scope = tuple(s for s in f.scope if s in keep)
    if not drop:
        return f
    return Factor(scope, f.values.sum(axis=drop))


@dataclass(frozen=True)
class BayesNet:
    variables: tuple[Variable, ...]
    dag: Dag
    cpts: tuple[Cpt, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "cpts", tuple(self.cpts))

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def cards(self) -> tuple[int, ...]:
        return tuple(v.card for v in self.variables)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownVariable(f"no variable named {name!r}") from None

    def cpt_factor(self, i: int) -> Factor:
        cpt = self.cpts[i]
        shape = tuple(self.cards[p] for p in cpt.parents) + (self.cards[i],)
        return Factor(cpt.parents + (i,), cpt.table.reshape(shape))

    def arc_count(self) -> int:
        return len(self.dag.edges)


def validate_network(net: BayesNet) -> None:
    """Raise :class:`ValidationError` listing every broken invariant."""
    problems = []
    try:
        check_unique_names(net.variables)
    except ValueError as exc:
        problems.append(str(exc))
    if net.dag.n != len(net.variables):
        problems.append(
            f"dag has {net.dag.n} nodes but network has {len(net.variables)} variables"
        )
    if not is_acyclic(net.dag):
        problems.append("cycle in dag")
    if len(net.cpts) != len(net.variables):
        problems.append(f"expected {len(net.variables)} cpts, got {len(net.cpts)}")
    cards = [v.card for v in net.variables]
    for i, cpt in enumerate(net.cpts[: len(net.variables)]):
        name = net.variables[i].name
        if cpt.child != i:
            problems.append(f"cpt {i} is for child {cpt.child}")
            continue
        if i < net.dag.n and cpt.parents != net.dag.parents(i):
            problems.append(
                f"parent mismatch at {name!r}: cpt has {cpt.parents}, dag has {net.dag.parents(i)}"
            )
        if any(not 0 <= p < len(cards) for p in cpt.parents):
            problems.append(f"cpt for {name!r} names an unknown parent")
            continue
        rows = int(np.prod([cards[p] for p in cpt.parents], dtype=np.int64))
        if cpt.table.shape != (rows, cards[i]):
            problems.append(
                f"bad cardinality at {name!r}: table shape {cpt.table.shape}, expected {(rows, cards[i])}"
            )
            continue
        if np.any(cpt.table < 0) or not np.all(np.isfinite(cpt.table)):
            problems.append(f"negative or non-finite entry at {name!r}")
        sums = cpt.table.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > NORMALIZATION_TOL)
        for r in bad:
            problems.append(f"row not normalized at {name!r} row {int(r)} (sum {sums[r]!r})")
    if problems:
        raise ValidationError(problems)


def check_state_space(cards: Sequence[int], limit: int) -> None:
    size = 1
    for c in cards:
        size *= int(c)
    if size > limit:
        raise StateSpaceTooLarge(f"table of {size} entries exceeds limit {limit}")


def full_joint(net: BayesNet, limit: int = DEFAULT_STATE_LIMIT) -> Factor:
    """Dense joint over all variables, scope ``(0, ..., n-1)``."""
    check_state_space(net.cards, limit)
    joint = factor_product([net.cpt_factor(i) for i in range(net.n)])
    return joint.reorder(range(net.n))


@dataclass(frozen=True)
class DataSet:
    """Complete discrete samples; ``rows[k, j]`` is the state index of variable j."""

    variables: tuple[Variable, ...]
    rows: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        rows = np.asarray(self.rows, dtype=np.int64)
        if rows.size == 0:
            rows = rows.reshape(0, len(self.variables))
        if rows.ndim != 2 or rows.shape[1] != len(self.variables):
            raise ValueError(
                f"rows must have shape (M, {len(self.variables)}), got {rows.shape}"
            )
        cards = np.array([v.card for v in self.variables], dtype=np.int64)
        if rows.size and (np.any(rows < 0) or np.any(rows >= cards)):
            raise ValueError("row contains an invalid state index")
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def size(self) -> int:
        return self.rows.shape[0]

    def __len__(self):
        return self.size

    @property
    def cards(self) -> tuple[int, ...]:
        return tuple(v.card for v in self.variables)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownVariable(f"no variable named {name!r}") from None

    def require_rows(self) -> None:
        if self.size == 0:
            raise EmptyDataSet("dataset has no rows")

    @staticmethod
    def concat(parts: Sequence["DataSet"]) -> "DataSet":
        if not parts:
            raise ValueError("nothing to concatenate")
        variables = parts[0].variables
        for p in parts[1:]:
            if p.variables != variables:
                raise ValueError("datasets have different variables")
        return DataSet(variables, np.concatenate([p.rows for p in parts], axis=0))
