"""Agents as small DAGs of operations, composed into a swarm.

Run with ``python3 demos/01_agents_as_graphs.py``.
"""
# %%
from swarmgraph import (
    build_cot_chain, build_decision_agent, build_io_agent, build_reflexion_agent, compose, execute,
    prune,
)
from swarmgraph.backends import MockExecutor, MockPolicy

# %% [markdown]
# Each agent is a DAG with a designated output node. A chain of thought is a
# straight line of reasoning steps, reflexion is propose -> critique -> revise.

# %%
cot = build_cot_chain(3, agent_id="cot")
reflexion = build_reflexion_agent(agent_id="refl")
io = build_io_agent("Mathematician", agent_id="io")
decision = build_decision_agent()
for agent in (cot, reflexion, io, decision):
    print(agent.agent_id, [str(n) for n in agent.node_ids], "->", agent.output)

# %% [markdown]
# Composing agents enumerates every cross-agent ordered pair as a potential
# edge (none may leave the swarm's output node).

# %%
swarm = compose([cot, reflexion, io, decision])
print(len(swarm.node_ids), "nodes,", len(swarm.potential_edges), "potential edges")

# %% [markdown]
# Realize a few edges, prune whatever cannot reach the output, and execute.
# The mock executor answers from hashed draws, so reruns are identical.

# %%
realized = [(cot.output, decision.output), (io.output, decision.output), (io.output, cot.node_ids[0])]
graph = prune(swarm.with_edges(realized))
print("kept agents:", [a.agent_id for a in graph.agents])

executor = MockExecutor(MockPolicy(truthful_accuracy=0.9, seed=1), {"demo": "B"})
trace = execute(graph, "What is 2 + 2? Option A: 3, Option B: 4.", executor, problem_id="demo")
for rec in trace.records:
    print(f"{rec.step:2d} {str(rec.node_id):18s} ctx={[str(c.producer) for c in rec.context]} -> {rec.output!r}")
print("final answer:", trace.final_output)
