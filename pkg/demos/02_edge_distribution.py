"""Sampling DAGs from independent edge probabilities.

Edges are visited in a fixed order and any edge that would close a cycle is
skipped, so every draw is a DAG and its exact likelihood is cheap.
"""
# %%
import itertools
import math

import numpy as np

from swarmgraph import EdgeDistribution, compose, grad_log_prob, log_prob, sample
from swarmgraph.graph import AgentGraph, Node, NodeId, RoutineKind


def one_node(agent_id):
    nid = NodeId(agent_id, "n")
    return AgentGraph(agent_id, (Node(nid, RoutineKind.PURE_FUNCTION),), frozenset(), nid)


a, b, out = one_node("a"), one_node("b"), one_node("out")
swarm = compose([a, b, out], mandated_edges=[(a.output, out.output), (b.output, out.output)])
print("potential edges:", [f"{u}->{v}" for u, v in swarm.potential_edges])

# %% [markdown]
# Two mutually exclusive edges a->b and b->a. The second is only eligible when
# the first was not drawn, so P(b->a) = (1 - p1) p2 rather than p2.

# %%
dist = EdgeDistribution(swarm.potential_edges, [0.5, 1.0])
p1, p2 = dist.probs
for mask in itertools.product((0, 1), repeat=2):
    try:
        p = math.exp(log_prob(dist, np.array(mask, bool), swarm))
    except Exception as exc:
        p = f"impossible ({type(exc).__name__})"
    print(mask, p)

rng = np.random.default_rng(0)
draws = [tuple(sample(dist, swarm, rng).included.astype(int)) for _ in range(20000)]
for mask in [(0, 0), (0, 1), (1, 0)]:
    print(mask, "empirical", draws.count(mask) / len(draws))

# %% [markdown]
# The score function for a drawn graph: 1 - p for included edges, -p for
# excluded eligible edges and 0 for edges that were never eligible.

# %%
print(grad_log_prob(dist, np.array([1, 0], bool), swarm), "with p =", dist.probs)
