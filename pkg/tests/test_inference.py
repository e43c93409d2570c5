import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beliefpool.core import BayesNet, Cpt, Dag, Factor, Variable, full_joint, marginalize
from beliefpool.errors import ScopeMismatch, StateSpaceTooLarge, UnknownVariable, VariableMismatch
from beliefpool.inference import (
    ancestors,
    conditional_from_marginals,
    kl_divergence,
    marginal,
    sum_out_root,
)
from beliefpool.io import load_network

from conftest import A, B, enumerate_joint, kl_bruteforce, random_net, two_node_net


def _brute_marginal(net, targets):
    joint = enumerate_joint(net)
    drop = tuple(i for i in range(net.n) if i not in targets)
    kept = sorted(targets)
    m = joint.sum(axis=drop) if drop else joint
    return np.transpose(m, [kept.index(t) for t in targets])


class TestMarginal:
    def test_chain_root_marginal(self):
        net = two_node_net(0.3, 0.9, 0.2)
        np.testing.assert_allclose(marginal(net, [1]).values, [0.3 * 0.9 + 0.7 * 0.2,
                                                              0.3 * 0.1 + 0.7 * 0.8])

    def test_target_order_is_respected(self):
        net = two_node_net(0.3, 0.9, 0.2)
        ab = marginal(net, [0, 1]).values
        ba = marginal(net, [1, 0]).values
        np.testing.assert_allclose(ab, ba.T)

    def test_unknown_target(self):
        with pytest.raises(UnknownVariable):
            marginal(two_node_net(0.3, 0.9, 0.2), [5])

    def test_guard_trips_on_large_target(self):
        net = random_net(np.random.default_rng(3), 6, edge_prob=0.0)
        with pytest.raises(StateSpaceTooLarge):
            marginal(net, list(range(6)), limit=8)

    def test_barren_nodes_pruned(self):
        # a huge-cardinality leaf never enters the computation of its parent's marginal
        big = Variable("Z", tuple(f"z{k}" for k in range(64)))
        net = BayesNet(
            (A, big), Dag(2, {(0, 1)}),
            (Cpt(0, (), [[0.25, 0.75]]), Cpt(1, (0,), np.full((2, 64), 1 / 64))),
        )
        assert ancestors(net, [0]) == {0}
        np.testing.assert_allclose(marginal(net, [0], limit=2).values, [0.25, 0.75])

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 7))
        net = random_net(rng, n, max_card=3)
        k = int(rng.integers(1, n + 1))
        targets = [int(t) for t in rng.permutation(n)[:k]]
        np.testing.assert_allclose(marginal(net, targets).values, _brute_marginal(net, targets),
                                   atol=1e-12)


class TestConditional:
    def test_zero_mass_row_is_uniform(self):
        joint = Factor((0, 1), [[0.5, 0.5], [0.0, 0.0]])
        cpt = conditional_from_marginals(joint, 1, (0,))
        np.testing.assert_allclose(cpt.table, [[0.5, 0.5], [0.5, 0.5]])

    def test_scope_mismatch(self):
        with pytest.raises(ScopeMismatch):
            conditional_from_marginals(Factor((0, 1), np.full((2, 2), 0.25)), 1, (2,))

    def test_reordered_scope(self):
        joint = Factor((1, 0), [[0.1, 0.2], [0.3, 0.4]])  # axes (B, A)
        cpt = conditional_from_marginals(joint, 1, (0,))
        np.testing.assert_allclose(cpt.table, [[0.25, 0.75], [1 / 3, 2 / 3]])


class TestKL:
    def test_worked_value(self):
        # p = (1/2, 1/2), q = (1/4, 3/4): 1 - 0.5*log2(3)
        p = BayesNet((A,), Dag.empty(1), (Cpt(0, (), [[0.5, 0.5]]),))
        q = BayesNet((A,), Dag.empty(1), (Cpt(0, (), [[0.25, 0.75]]),))
        assert kl_divergence(p, q) == pytest.approx(1 - 0.5 * math.log2(3), abs=1e-12)

    def test_self_is_zero(self):
        net = random_net(np.random.default_rng(0), 6)
        assert kl_divergence(net, net) == 0.0

    def test_infinite_when_support_missed(self):
        p = two_node_net(0.5, 0.5, 0.5)
        q = two_node_net(0.5, 1.0, 0.5)
        assert kl_divergence(p, q) == math.inf
        assert math.isfinite(kl_divergence(q, p))

    def test_variable_mismatch(self):
        other = (A, Variable("C", ("c", "nc")))
        with pytest.raises(VariableMismatch):
            kl_divergence(two_node_net(0.5, 0.5, 0.5), two_node_net(0.5, 0.5, 0.5, other))

    def test_different_structures(self):
        p = two_node_net(0.3, 0.9, 0.2)
        q = BayesNet((A, B), Dag.empty(2), (Cpt(0, (), [[0.4, 0.6]]), Cpt(1, (), [[0.5, 0.5]])))
        assert kl_divergence(p, q) == pytest.approx(kl_bruteforce(p, q), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_nonnegative_and_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 6))
        p = random_net(rng, n, zero_prob=0.2)
        q = random_net(rng, n, zero_prob=0.1)
        q = BayesNet(p.variables, q.dag, q.cpts)
        kl, ref = kl_divergence(p, q), kl_bruteforce(p, q)
        assert kl >= 0
        if math.isinf(ref):
            assert math.isinf(kl)
        else:
            assert kl == pytest.approx(ref, abs=1e-9)


class TestSumOutRoot:
    def test_asia_subpop_marginal_preserved(self):
        net = load_network("asset:asia_subpop")
        s = net.index("source")
        reduced = sum_out_root(net, s)
        assert "source" not in reduced.names
        full = full_joint(net)
        expected = marginalize(full, [v for v in range(net.n) if v != s]).values
        np.testing.assert_allclose(full_joint(reduced).values, expected, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_random_root(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        net = random_net(rng, n, max_card=3)
        roots = [v for v in range(n) if not net.dag.parents(v)]
        s = roots[int(rng.integers(len(roots)))]
        try:
            reduced = sum_out_root(net, s)
        except ValueError:
            return  # a co-parent descends from s; not supported
        joint = enumerate_joint(net).sum(axis=s)
        np.testing.assert_allclose(enumerate_joint(reduced), joint, atol=1e-12)

    def test_rejects_non_root(self):
        with pytest.raises(ValueError):
            sum_out_root(two_node_net(0.3, 0.9, 0.2), 1)
