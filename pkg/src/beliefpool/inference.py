"""Exact marginals by variable elimination, Bayes-law CPT extraction, and KL."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import (
    DEFAULT_STATE_LIMIT,
    BayesNet,
    Cpt,
    Dag,
    Factor,
    check_state_space,
    factor_product,
    marginalize,
    topological_order,
)
from .errors import ScopeMismatch, UnknownVariable, VariableMismatch


def ancestors(net: BayesNet, nodes) -> set[int]:
    seen = set(nodes)
    stack = list(nodes)
    while stack:
        for p in net.dag.parents(stack.pop()):
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def elimination_order(factors: Sequence[Factor], eliminate: set[int]) -> list[int]:
    """Greedy min-degree order on the interaction graph; ties by node index."""
    adj: dict[int, set[int]] = {}
    for f in factors:
        for s in f.scope:
            adj.setdefault(s, set()).update(t for t in f.scope if t != s)
    remaining = set(eliminate)
    order = []
    while remaining:
        v = min(remaining, key=lambda x: (len(adj.get(x, ())), x))
        nbrs = adj.pop(v, set())
        for a in nbrs:
            adj[a].discard(v)
            adj[a].update(b for b in nbrs if b != a)
        remaining.remove(v)
        order.append(v)
    return order


def marginal(
    net: BayesNet, targets: Sequence[int], limit: int = DEFAULT_STATE_LIMIT
) -> Factor:
    """Exact marginal over ``targets`` (scope in the given order).

    Only the ancestral closure of the targets is touched; everything else
    sums to one and is pruned before elimination.
    """
    targets = tuple(int(t) for t in targets)
    if not targets:
        raise ValueError("targets must be nonempty")
    for t in targets:
        if not 0 <= t < net.n:
            raise UnknownVariable(f"variable index {t} not in network")
    if len(set(targets)) != len(targets):
        raise ValueError("duplicate target")
    relevant = ancestors(net, targets)
    factors = [net.cpt_factor(i) for i in sorted(relevant)]
    cards = net.cards
    for v in elimination_order(factors, relevant - set(targets)):
        touching = [f for f in factors if v in f.scope]
        rest = [f for f in factors if v not in f.scope]
        scope = {s for f in touching for s in f.scope}
        check_state_space([cards[s] for s in scope], limit)
        factors = rest + [factor_product(touching, keep=scope - {v})]
    check_state_space([cards[t] for t in targets], limit)
    return factor_product(factors, keep=targets).reorder(targets)


def conditional_from_marginals(joint: Factor, child: int, parents: Sequence[int]) -> Cpt:
    """P(child | parents) = joint / parent marginal; empty parent rows become uniform."""
    parents = tuple(parents)
    if set(joint.scope) != set(parents) | {child} or len(joint.scope) != len(parents) + 1:
        raise ScopeMismatch(
            f"joint scope {joint.scope} is not child {child} plus parents {parents}"
        )
    values = joint.reorder(parents + (child,)).values
    k = values.shape[-1]
    table = values.reshape(-1, k)
    mass = table.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        table = np.where(mass > 0, table / np.where(mass > 0, mass, 1.0), 1.0 / k)
    return Cpt(child, parents, table)


def _same_variables(p: BayesNet, q: BayesNet) -> None:
    if p.variables != q.variables:
        raise VariableMismatch("networks are defined over different variables")


def _expected_log(p: BayesNet, family_net: BayesNet, i: int, limit: int) -> float:
    """E_p[log2 family_net(x_i | pa_i)]; -inf when p puts mass on a zero entry."""
    cpt = family_net.cpts[i]
    fam = cpt.parents + (i,)
    weights = marginal(p, fam, limit).values.reshape(cpt.table.shape)
    pos = weights > 0
    if np.any(cpt.table[pos] <= 0):
        return -math.inf
    return float(np.sum(weights[pos] * np.log2(cpt.table[pos])))


def kl_divergence(p: BayesNet, q: BayesNet, limit: int = DEFAULT_STATE_LIMIT) -> float:
    """KL(p || q) in bits by family decomposition; ``math.inf`` if q misses p's support."""
    _same_variables(p, q)
    neg_entropy = sum(_expected_log(p, p, i, limit) for i in range(p.n))
    cross = 0.0
    for j in range(q.n):
        term = _expected_log(p, q, j, limit)
        if term == -math.inf:
            return math.inf
        cross += term
    # float cancellation can leave tiny negatives when p == q
    return max(neg_entropy - cross, 0.0)



def sum_out_root(net: BayesNet, s: int) -> BayesNet:
    """Network over every variable but the root ``s``, with ``s`` summed out.

    The children of ``s`` become a chain (in topological order), each also
    conditioned on every other parent of the children. Requires that no
    child of ``s`` has a parent that descends from ``s``.
    """
    if net.dag.parents(s):
        raise ValueError(f"variable {net.names[s]!r} is not a root")
    kids = [c for c in topological_order(net.dag) if s in net.dag.parents(c)]
    descendants = set()
    stack = list(kids)
    while stack:
        x = stack.pop()
        if x not in descendants:
            descendants.add(x)
            stack.extend(net.dag.children(x))
    others = sorted({p for c in kids for p in net.dag.parents(c)} - {s})
    if descendants & set(others):
        raise ValueError("a child of the summed-out root has a parent descending from it")
    h = factor_product([net.cpt_factor(s)] + [net.cpt_factor(c) for c in kids],
                       keep=set(kids) | set(others))
    new_index = {v: v - (v > s) for v in range(net.n) if v != s}
    parents = {v: tuple(net.dag.parents(v)) for v in range(net.n) if v != s}
    cpts = {v: net.cpts[v] for v in range(net.n) if v != s}
    for k, c in enumerate(kids):
        pa = tuple(sorted(set(others) | set(kids[:k])))
        joint = marginalize(h, set(pa) | {c})
        parents[c] = pa
        cpts[c] = conditional_from_marginals(joint, c, pa)
    edges = frozenset(
        (new_index[u], new_index[v]) for v, pa in parents.items() for u in pa
    )
    new_cpts = []
    for v in sorted(new_index):
        cpt = cpts[v]
        new_cpts.append(Cpt(new_index[v], tuple(new_index[p] for p in parents[v]), cpt.table))
    variables = tuple(var for i, var in enumerate(net.variables) if i != s)
    return BayesNet(variables, Dag(len(variables), edges), tuple(new_cpts))
