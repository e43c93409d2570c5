"""Ancestral sampling, dataset partitioning and empirical distributions.

Randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence``; independent streams are addressed by a tuple of integers
(``make_rng(seed, setting, run)``), so results do not depend on the order
in which streams are consumed.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import (
    DEFAULT_STATE_LIMIT,
    BayesNet,
    DataSet,
    Factor,
    check_state_space,
    topological_order,
    validate_network,
)
from .errors import UnknownVariable

RNG_ALGORITHM = "numpy.PCG64/SeedSequence"


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for the stream ``stream`` of ``seed`` (same seed, same draws)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *stream: int) -> int:
    """A 63-bit integer seed for a substream; handy for recording in results."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def forward_sample(net: BayesNet, m: int, rng: np.random.Generator) -> DataSet:
    if m < 0:
        raise ValueError("sample count must be nonnegative")
    validate_network(net)
    cards = net.cards
    rows = np.zeros((m, net.n), dtype=np.int64)
    for i in topological_order(net.dag):
        cpt = net.cpts[i]
        if cpt.parents:
            pcards = [cards[p] for p in cpt.parents]
            row_idx = np.ravel_multi_index(tuple(rows[:, p] for p in cpt.parents), pcards)
        else:
            row_idx = np.zeros(m, dtype=np.int64)
        cum = np.cumsum(cpt.table, axis=1)[row_idx]
        u = rng.random(m)
        drawn = (u[:, None] >= cum[:, :-1]).sum(axis=1)
        # guard against rows whose cumulative sum falls a hair short of 1
        while True:
            zero = cpt.table[row_idx, drawn] == 0
            if not zero.any():
                break
            drawn[zero] -= 1
        rows[:, i] = drawn
    return DataSet(net.variables, rows)


def partition_by_variable(ds: DataSet, s: int | str) -> dict[int, DataSet]:
    """Route rows by the state of ``s`` and drop the ``s`` column.

    Keys are state indices of ``s``; every state gets an entry, possibly empty.
    """
    if isinstance(s, str):
        s = ds.index(s)
    if not 0 <= s < len(ds.variables):
        raise UnknownVariable(f"variable index {s} not in dataset")
    keep = [j for j in range(len(ds.variables)) if j != s]
    variables = tuple(ds.variables[j] for j in keep)
    col = ds.rows[:, s]
    return {
        k: DataSet(variables, ds.rows[col == k][:, keep])
        for k in range(ds.variables[s].card)
    }


def empirical_distribution(ds: DataSet, limit: int = DEFAULT_STATE_LIMIT) -> Factor:
    ds.require_rows()
    check_state_space(ds.cards, limit)
    return Factor(tuple(range(len(ds.variables))), joint_counts(ds, range(len(ds.variables))) / ds.size)


def joint_counts(ds: DataSet, scope: Sequence[int]) -> np.ndarray:
    """Integer count array with one axis per variable of ``scope``."""
    scope = tuple(scope)
    cards = tuple(ds.cards[s] for s in scope)
    if not scope:
        return np.array(ds.size, dtype=np.int64)
    flat = np.ravel_multi_index(tuple(ds.rows[:, s] for s in scope), cards)
    size = int(np.prod(cards, dtype=np.int64))
    return np.bincount(flat, minlength=size).reshape(cards)


def split_by_fractions(ds: DataSet, alphas: Sequence[float]) -> list[DataSet]:
    """Cut ``ds`` into consecutive disjoint blocks sized by largest remainder."""
    quotas = largest_remainder(alphas, ds.size)
    parts, start = [], 0
    for q in quotas:
        parts.append(DataSet(ds.variables, ds.rows[start : start + q]))
        start += q
    return parts


def largest_remainder(alphas: Sequence[float], total: int) -> list[int]:
    """Integer quotas proportional to ``alphas`` that sum exactly to ``total``."""
    alphas = np.asarray(alphas, dtype=np.float64)
    raw = alphas / alphas.sum() * total
    base = np.floor(raw).astype(np.int64)
    short = int(total - base.sum())
    # stable sort keeps lower source indices first on equal remainders
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return [int(b) for b in base]
