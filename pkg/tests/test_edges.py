import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import chain_agent, enumerate_masks, small_composites
from swarmgraph.edges import (
    LOGIT_CAP, EdgeDistribution, export_matrix, full_graph_edges, grad_log_prob, heatmap_nodes,
    load_params, log_prob, new_distribution, realize, replay_eligibility, sample, save_params,
    sigmoid,
)
from swarmgraph.errors import ConfigError, DomainError, InfeasibleSample
from swarmgraph.graph import compose

COMPOSITES = small_composites()


def test_sigmoid_is_exact_at_zero_and_symmetric():
    assert sigmoid(0.0) == 0.5
    xs = np.linspace(-15, 15, 61)
    assert np.allclose(sigmoid(xs) + sigmoid(-xs), 1.0, atol=1e-15)


def test_logits_are_clipped_and_frozen():
    comp = COMPOSITES["pair"]
    dist = EdgeDistribution(comp.potential_edges, [100.0, -100.0])
    assert dist.logits.tolist() == [LOGIT_CAP, -LOGIT_CAP]
    with pytest.raises(ValueError):
        dist.logits[0] = 0.0


def test_new_distribution_domain():
    comp = COMPOSITES["pair"]
    assert np.allclose(new_distribution(comp, 0.5).probs, 0.5)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(DomainError):
            new_distribution(comp, bad)


def test_mutual_pair_probabilities():
    # first edge goes with theta_1; the reverse edge is only eligible when it is absent
    comp = COMPOSITES["pair"]
    dist = EdgeDistribution(comp.potential_edges, [0.3, -0.7])
    p1, p2 = sigmoid(0.3), sigmoid(-0.7)
    expect = {(1, 0): p1, (0, 1): (1 - p1) * p2, (0, 0): (1 - p1) * (1 - p2)}
    for mask, p in expect.items():
        assert math.exp(log_prob(dist, np.array(mask, bool), comp)) == pytest.approx(p, rel=1e-12)
    with pytest.raises(InfeasibleSample):
        log_prob(dist, np.array([1, 1], bool), comp)
    g = grad_log_prob(dist, np.array([1, 0], bool), comp)
    assert g.tolist() == [1 - p1, 0.0]


@given(st.sampled_from(sorted(COMPOSITES)), st.integers(0, 2**32 - 1))
@settings(max_examples=150, deadline=None)
def test_samples_are_acyclic_and_consistent(name, seed):
    comp = COMPOSITES[name]
    rng = np.random.default_rng(seed)
    dist = EdgeDistribution(comp.potential_edges, rng.uniform(-3, 3, len(comp.potential_edges)))
    s = sample(dist, comp, rng)
    g = nx.DiGraph(list(comp.required_edges) + list(s.edges(dist)))
    assert nx.is_directed_acyclic_graph(g)
    assert not np.any(s.included & ~s.eligible)
    assert np.array_equal(replay_eligibility(comp, s.included), s.eligible)
    assert s.log_prob == pytest.approx(log_prob(dist, s, comp), abs=1e-12)
    # the realized composite is accepted as a DAG
    comp.with_edges(s.edges(dist))


@given(st.sampled_from(sorted(COMPOSITES)), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_grad_log_prob_formula(name, seed):
    comp = COMPOSITES[name]
    rng = np.random.default_rng(seed)
    dist = EdgeDistribution(comp.potential_edges, rng.uniform(-3, 3, len(comp.potential_edges)))
    s = sample(dist, comp, rng)
    g = grad_log_prob(dist, s, comp)
    p = dist.probs
    for i in range(dist.d):
        if not s.eligible[i]:
            assert g[i] == 0.0
        elif s.included[i]:
            assert g[i] == pytest.approx(1 - p[i], abs=1e-15)
        else:
            assert g[i] == pytest.approx(-p[i], abs=1e-15)


@given(st.sampled_from(sorted(COMPOSITES)), st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_enumerated_probabilities_sum_to_one(name, seed):
    comp = COMPOSITES[name]
    logits = np.random.default_rng(seed).uniform(-5, 5, len(comp.potential_edges))
    exact = enumerate_masks(comp, logits)
    assert sum(exact.values()) == pytest.approx(1.0, abs=1e-12)
    dist = EdgeDistribution(comp.potential_edges, logits)
    total = sum(math.exp(log_prob(dist, np.array(m, bool), comp)) for m in exact)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_saturated_logits_give_the_full_graph():
    comp = COMPOSITES["three_to_sink"]
    dist = EdgeDistribution(comp.potential_edges, np.full(len(comp.potential_edges), 15.0))
    assert realize(dist, comp) == full_graph_edges(comp)
    assert realize(dist.with_logits(-dist.logits), comp) == frozenset()


def test_realize_threshold_is_inclusive():
    comp = COMPOSITES["pair"]
    dist = EdgeDistribution(comp.potential_edges, [0.0, -1.0])
    assert realize(dist, comp) == {comp.potential_edges[0]}
    with pytest.raises(DomainError):
        realize(dist, comp, 1.5)


def test_distribution_must_match_composite():
    dist = new_distribution(COMPOSITES["pair"], 0.5)
    with pytest.raises(ConfigError):
        sample(dist, COMPOSITES["triangle"], np.random.default_rng(0))


def test_params_round_trip(tmp_path):
    comp = COMPOSITES["chain"]
    dist = EdgeDistribution(comp.potential_edges, np.linspace(-1, 1, len(comp.potential_edges)))
    path = tmp_path / "params.json"
    save_params(dist, path, seed=3)
    back = load_params(path, comp)
    assert back.potential_edges == dist.potential_edges
    assert np.array_equal(back.logits, dist.logits)
    with pytest.raises(ConfigError):
        load_params(path, COMPOSITES["pair"])
    with pytest.raises(ConfigError):
        load_params(tmp_path / "nope.json")


def test_export_matrix_cells():
    a, b, o = chain_agent("a", 2), chain_agent("b"), chain_agent("o")
    comp = compose([a, b, o], 2, [(b.output, o.output)])
    dist = new_distribution(comp, 0.25)
    ids, m = export_matrix(dist, comp)
    i = {n: k for k, n in enumerate(ids)}
    assert m[i[a.node_ids[0]], i[a.node_ids[1]]] == 1.0  # intra-agent edge
    assert m[i[b.output], i[o.output]] == 1.0  # mandated
    assert m[i[a.output], i[b.output]] == pytest.approx(0.25)
    assert np.all(m[i[o.output]] == 0.0)
    assert np.all(np.diag(m) == 0.0)
    assert set(heatmap_nodes(dist)) <= set(ids)


def test_empty_potential_edge_set():
    solo = compose([chain_agent("a")], 0)
    dist = new_distribution(solo, 0.3)
    assert dist.d == 0
    s = sample(dist, solo, np.random.default_rng(0))
    assert s.included.size == 0 and s.log_prob == 0.0
    assert log_prob(dist, np.zeros(0, bool), solo) == 0.0
    assert grad_log_prob(dist, s, solo).size == 0


def test_init_prob_reads_back():
    dist = new_distribution(COMPOSITES["triangle"], 0.1)
    assert np.allclose(dist.probs, 0.1, atol=1e-15)
    assert np.all(new_distribution(COMPOSITES["triangle"], 0.5).logits == 0.0)


def test_uniform_pair_example():
    comp = COMPOSITES["pair"]
    dist = new_distribution(comp, 0.5)
    assert log_prob(dist, np.array([1, 0], bool), comp) == pytest.approx(math.log(0.5))
    assert log_prob(dist, np.array([0, 0], bool), comp) == pytest.approx(math.log(0.25))
    assert grad_log_prob(dist, np.array([1, 0], bool), comp).tolist() == [0.5, 0.0]
    assert realize(dist, comp, 1.0) == frozenset()


def test_single_edge_heatmap_cell():
    a, b = chain_agent("a"), chain_agent("b")
    comp = compose([a, b], 1)
    dist = EdgeDistribution(comp.potential_edges, [2.0])
    ids, m = export_matrix(dist, comp)
    assert m[ids.index(a.output), ids.index(b.output)] == pytest.approx(0.8807970779778823, abs=1e-15)
