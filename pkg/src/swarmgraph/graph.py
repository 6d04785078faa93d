"""Nodes, agent graphs, composite graphs and their execution.

An agent is a DAG of operation nodes with one output node.  A composite graph
(a swarm) is the union of several agents plus cross-agent edges: the required
ones (intra-agent edges and mandated links) and an ordered list of potential
edges whose inclusion is decided by an edge distribution.

Every ordering in this module is deterministic.  Nodes are totally ordered by
``NodeId``; topological sorts break ties by ``NodeId`` and node contexts are
ordered by producer depth, then ``NodeId``.
"""
from __future__ import annotations

import enum
import heapq
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol

from .errors import (
    ConfigError,
    CycleDetected,
    RoutineFailure,
    UnknownNode,
    UnresolvedRoutine,
)

Edge = tuple["NodeId", "NodeId"]


@dataclass(frozen=True, order=True)
class NodeId:
    agent_id: str
    local_id: str

    def __post_init__(self):
        for part in (self.agent_id, self.local_id):
            if not isinstance(part, str) or not part or "/" in part or part != part.strip():
                raise ConfigError(f"invalid node id component {part!r}")
            if any(ch.isspace() for ch in part):
                raise ConfigError(f"node id component {part!r} contains whitespace")

    def __str__(self) -> str:
        return f"{self.agent_id}/{self.local_id}"

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        agent_id, sep, local_id = text.partition("/")
        if not sep:
            raise ConfigError(f"node id {text!r} must look like 'agent/local'")
        return cls(agent_id, local_id)


class RoutineKind(str, enum.Enum):
    LLM_QUERY = "llm-query"
    PURE_FUNCTION = "pure-function"
    DECISION = "decision"


@dataclass(frozen=True)
class Demo:
    """One demonstration example carried inside a node prompt."""

    shown_input: str
    shown_output: str
    positive: bool = True


@dataclass(frozen=True)
class Prompt:
    """Structured node prompt: an instruction plus an ordered demo list."""

    instruction: str = ""
    demos: tuple[Demo, ...] = ()

    def with_demos(self, demos: Iterable[Demo]) -> "Prompt":
        return Prompt(self.instruction, tuple(demos))


@dataclass(frozen=True)
class Node:
    id: NodeId
    kind: RoutineKind
    description: str = ""
    prompt: Prompt = Prompt()
    # routine-specific parameters (template name, role, function, strategy ...)
    params: Mapping[str, Any] = field(default_factory=dict, hash=False)

    def with_prompt(self, prompt: Prompt) -> "Node":
        return Node(self.id, self.kind, self.description, prompt, dict(self.params))


# ---------------------------------------------------------------------------
# DAG primitives


def _adjacency(nodes: Iterable[NodeId], edges: Iterable[Edge]) -> dict[NodeId, list[NodeId]]:
    adj: dict[NodeId, list[NodeId]] = {n: [] for n in nodes}
    for src, dst in edges:
        if src not in adj:
            raise UnknownNode(f"edge ({src}, {dst}) references unknown node {src}")
        if dst not in adj:
            raise UnknownNode(f"edge ({src}, {dst}) references unknown node {dst}")
        adj[src].append(dst)
    return adj


def _kahn(nodes: Iterable[NodeId], edges: Iterable[Edge]) -> list[NodeId]:
    """Kahn's algorithm with a min-heap; returns a partial order on cycles."""
    adj = _adjacency(nodes, edges)
    indegree = {n: 0 for n in adj}
    for succs in adj.values():
        for v in succs:
            indegree[v] += 1
    ready = [n for n, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for v in adj[n]:
            indegree[v] -= 1
            if indegree[v] == 0:
                heapq.heappush(ready, v)
    return order


def validate_dag(nodes: Iterable[NodeId], edges: Iterable[Edge]) -> bool:
    """Return True iff ``edges`` over ``nodes`` contain no directed cycle.

    Raises:
        UnknownNode: an edge endpoint is not in ``nodes``.
    """
    nodes = list(nodes)
    return len(_kahn(nodes, edges)) == len(set(nodes))


def topological_sort(graph, edges: Iterable[Edge] | None = None) -> list[NodeId]:
    """Topologically sort a graph, breaking ties by ascending ``NodeId``.

    ``graph`` is either an object exposing ``node_ids`` and ``edges`` (agent or
    composite graph) or an iterable of node ids, in which case ``edges`` must be
    given as well.
    """
    if edges is None:
        nodes, edges = list(graph.node_ids), graph.edges
    else:
        nodes = list(graph)
    order = _kahn(nodes, edges)
    if len(order) != len(set(nodes)):
        raise CycleDetected("graph contains a directed cycle")
    return order


def depth_levels(nodes: Iterable[NodeId], edges: Iterable[Edge]) -> dict[NodeId, int]:
    """Longest-path distance from any source node (sources have depth 0)."""
    edges = list(edges)
    order = topological_sort(nodes, edges)
    preds = predecessors(order, edges)
    depth: dict[NodeId, int] = {}
    for n in order:
        depth[n] = max((depth[p] + 1 for p in preds[n]), default=0)
    return depth


def predecessors(nodes: Iterable[NodeId], edges: Iterable[Edge]) -> dict[NodeId, list[NodeId]]:
    preds: dict[NodeId, list[NodeId]] = {n: [] for n in nodes}
    for src, dst in edges:
        preds[dst].append(src)
    return preds


def ancestors_of(target: NodeId, nodes: Iterable[NodeId], edges: Iterable[Edge]) -> set[NodeId]:
    """All nodes with a directed path to ``target``, including ``target``."""
    preds = predecessors(nodes, edges)
    seen = {target}
    stack = [target]
    while stack:
        for p in preds[stack.pop()]:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


# ---------------------------------------------------------------------------
# graphs


@dataclass(frozen=True)
class AgentGraph:
    """A single agent: nodes, required intra-agent edges and an output node."""

    agent_id: str
    nodes: tuple[Node, ...]
    edges: frozenset[Edge]
    output: NodeId

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.id)))
        object.__setattr__(self, "edges", frozenset(self.edges))
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"agent {self.agent_id!r} has duplicate node ids")
        for n in ids:
            if n.agent_id != self.agent_id:
                raise ConfigError(f"node {n} does not belong to agent {self.agent_id!r}")
        if self.output not in set(ids):
            raise UnknownNode(f"output node {self.output} is not in agent {self.agent_id!r}")
        if not validate_dag(ids, self.edges):
            raise CycleDetected(f"agent {self.agent_id!r} is not a DAG")

    @cached_property
    def node_ids(self) -> tuple[NodeId, ...]:
        return tuple(n.id for n in self.nodes)

    @cached_property
    def node_map(self) -> dict[NodeId, Node]:
        return {n.id: n for n in self.nodes}


@dataclass(frozen=True)
class CompositeGraph:
    """A swarm of agents.

    ``potential_edges`` is the ordered list e_1..e_d the edge distribution is
    defined over.  ``realized_edges`` is the subset of potential edges present
    in this particular graph instance (empty for a freshly composed swarm).
    """

    agents: tuple[AgentGraph, ...]
    output_agent: int
    mandated_edges: frozenset[Edge]
    potential_edges: tuple[Edge, ...]
    realized_edges: frozenset[Edge] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "mandated_edges", frozenset(self.mandated_edges))
        object.__setattr__(self, "potential_edges", tuple(self.potential_edges))
        object.__setattr__(self, "realized_edges", frozenset(self.realized_edges))

    @cached_property
    def node_map(self) -> dict[NodeId, Node]:
        nodes = {}
        for agent in self.agents:
            nodes.update(agent.node_map)
        return dict(sorted(nodes.items()))

    @property
    def nodes(self) -> dict[NodeId, Node]:
        return self.node_map

    @cached_property
    def node_ids(self) -> tuple[NodeId, ...]:
        return tuple(self.node_map)

    @property
    def output(self) -> NodeId:
        return self.agents[self.output_agent].output

    @cached_property
    def required_edges(self) -> frozenset[Edge]:
        edges = set(self.mandated_edges)
        for agent in self.agents:
            edges |= agent.edges
        return frozenset(edges)

    @cached_property
    def edges(self) -> frozenset[Edge]:
        return self.required_edges | self.realized_edges

    @cached_property
    def agent_of(self) -> dict[NodeId, str]:
        return {n: a.agent_id for a in self.agents for n in a.node_ids}

    def with_edges(self, realized: Iterable[Edge]) -> "CompositeGraph":
        """Same swarm with the given potential edges realized."""
        realized = frozenset(realized)
        extra = realized - set(self.potential_edges)
        if extra:
            raise ConfigError(f"edges {sorted(extra)} are not potential edges")
        graph = CompositeGraph(
            self.agents, self.output_agent, self.mandated_edges, self.potential_edges, realized
        )
        if not validate_dag(graph.node_ids, graph.edges):
            raise CycleDetected("realized edges create a cycle")
        return graph

    def replace_nodes(self, updated: Mapping[NodeId, Node]) -> "CompositeGraph":
        """Return a copy with some nodes swapped (structure unchanged)."""
        agents = []
        for agent in self.agents:
            nodes = tuple(updated.get(n.id, n) for n in agent.nodes)
            agents.append(AgentGraph(agent.agent_id, nodes, agent.edges, agent.output))
        return CompositeGraph(
            tuple(agents), self.output_agent, self.mandated_edges,
            self.potential_edges, self.realized_edges,
        )


def compose(
    agents: Iterable[AgentGraph],
    output_agent_index: int = -1,
    mandated_edges: Iterable[Edge] = (),
) -> CompositeGraph:
    """Combine agents into a swarm and enumerate its potential edges.

    Potential edges are all ordered pairs of nodes from different agents,
    excluding required/mandated edges and edges leaving the composite output
    node, sorted by ``(source, destination)``.
    """
    agents = tuple(agents)
    if not agents:
        raise ConfigError("compose needs at least one agent")
    ids = [a.agent_id for a in agents]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate agent ids in {ids}")
    if not -len(agents) <= output_agent_index < len(agents):
        raise ConfigError(f"output agent index {output_agent_index} out of range")
    output_agent_index %= len(agents)

    agent_of = {n: a.agent_id for a in agents for n in a.node_ids}
    mandated = frozenset(mandated_edges)
    for src, dst in mandated:
        for n in (src, dst):
            if n not in agent_of:
                raise UnknownNode(f"mandated edge ({src}, {dst}) references unknown node {n}")
        if agent_of[src] == agent_of[dst]:
            raise ConfigError(f"mandated edge ({src}, {dst}) is not cross-agent")

    output = agents[output_agent_index].output
    base = CompositeGraph(agents, output_agent_index, mandated, ())
    if not validate_dag(base.node_ids, base.required_edges):
        raise CycleDetected("mandated edges create a cycle")

    required = base.required_edges
    potential = tuple(
        (u, v)
        for u in base.node_ids
        for v in base.node_ids
        if agent_of[u] != agent_of[v] and u != output and (u, v) not in required
    )
    return CompositeGraph(agents, output_agent_index, mandated, potential)


def prune(composite: CompositeGraph, realized_edges: Iterable[Edge] | None = None) -> CompositeGraph:
    """Drop every node that has no directed path to the composite output node.

    ``realized_edges`` defaults to the composite's own realized edges.  Agents
    losing all their nodes disappear; an agent that keeps some nodes but loses
    its output node gets its last surviving node (topologically) as output.
    """
    if realized_edges is not None:
        composite = composite.with_edges(realized_edges)
    keep = ancestors_of(composite.output, composite.node_ids, composite.edges)
    output_agent_id = composite.agents[composite.output_agent].agent_id

    agents = []
    for agent in composite.agents:
        nodes = tuple(n for n in agent.nodes if n.id in keep)
        if not nodes:
            continue
        edges = frozenset(e for e in agent.edges if e[0] in keep and e[1] in keep)
        output = agent.output
        if output not in keep:
            output = topological_sort([n.id for n in nodes], edges)[-1]
        agents.append(AgentGraph(agent.agent_id, nodes, edges, output))
    output_index = next(i for i, a in enumerate(agents) if a.agent_id == output_agent_id)

    def kept(e):
        return e[0] in keep and e[1] in keep

    return CompositeGraph(
        tuple(agents),
        output_index,
        frozenset(filter(kept, composite.mandated_edges)),
        tuple(filter(kept, composite.potential_edges)),
        frozenset(filter(kept, composite.realized_edges)),
    )


# ---------------------------------------------------------------------------
# execution


@dataclass(frozen=True)
class ContextEntry:
    producer: NodeId
    output: str


@dataclass(frozen=True)
class NodeContext:
    entries: tuple[ContextEntry, ...] = ()

    @property
    def outputs(self) -> list[str]:
        return [e.output for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class NodeRecord:
    node_id: NodeId
    input: str
    context: NodeContext
    prompt: Prompt
    output: str
    step: int


@dataclass(frozen=True)
class ExecutionTrace:
    records: tuple[NodeRecord, ...]
    final_output: str
    problem_id: Any = None

    def __getitem__(self, node_id: NodeId) -> NodeRecord:
        for r in self.records:
            if r.node_id == node_id:
                return r
        raise KeyError(node_id)

    @property
    def order(self) -> list[NodeId]:
        return [r.node_id for r in self.records]


class Executor(Protocol):
    def run(self, node: Node, context: NodeContext, x: str, problem_id: Any = None) -> str: ...


def execute(
    graph,
    x: str,
    executor: Executor,
    *,
    problem_id: Any = None,
    max_workers: int | None = None,
) -> ExecutionTrace:
    """Run every node in topological order and return the full trace.

    Each node receives the task input ``x`` and the outputs of its
    predecessors.  With ``max_workers > 1`` nodes of equal depth run
    concurrently; the recorded trace is identical either way.

    Raises:
        RoutineFailure: a node routine raised; execution stops there.
        UnresolvedRoutine: the executor cannot handle a node's routine kind.
    """
    nodes = graph.nodes if isinstance(graph, CompositeGraph) else graph.node_map
    edges = graph.edges
    order = topological_sort(list(nodes), edges)
    depth = depth_levels(order, edges)
    preds = predecessors(order, edges)
    outputs: dict[NodeId, str] = {}
    contexts: dict[NodeId, NodeContext] = {}

    def run_one(node_id: NodeId) -> str:
        ctx = NodeContext(tuple(
            ContextEntry(p, outputs[p]) for p in sorted(preds[node_id], key=lambda p: (depth[p], p))
        ))
        contexts[node_id] = ctx
        try:
            return executor.run(nodes[node_id], ctx, x, problem_id)
        except (UnresolvedRoutine, RoutineFailure):
            raise
        except Exception as exc:
            raise RoutineFailure(node_id, exc) from exc

    if max_workers and max_workers > 1:
        levels: dict[int, list[NodeId]] = {}
        for n in order:
            levels.setdefault(depth[n], []).append(n)
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            for level in sorted(levels):
                batch = levels[level]
                # contexts only read outputs of strictly shallower nodes
                results = list(pool.map(run_one, batch))
                outputs.update(zip(batch, results))
    else:
        for n in order:
            outputs[n] = run_one(n)

    records = tuple(
        NodeRecord(n, x, contexts[n], nodes[n].prompt, outputs[n], step)
        for step, n in enumerate(order)
    )
    return ExecutionTrace(records, outputs[graph.output], problem_id)


# ---------------------------------------------------------------------------
# graph definition file


def _prompt_to_dict(prompt: Prompt) -> dict:
    out: dict[str, Any] = {"prompt": prompt.instruction}
    if prompt.demos:
        out["demos"] = [
            {"in": d.shown_input, "out": d.shown_output, "positive": d.positive}
            for d in prompt.demos
        ]
    return out


def _prompt_from_dict(data: Mapping) -> Prompt:
    demos = tuple(
        Demo(d["in"], d["out"], d.get("positive", True)) for d in data.get("demos", ())
    )
    return Prompt(data.get("prompt", ""), demos)


def agent_to_dict(agent: AgentGraph) -> dict:
    nodes = []
    for n in agent.nodes:
        entry = {"id": n.id.local_id, "kind": n.kind.value, "description": n.description}
        entry.update(_prompt_to_dict(n.prompt))
        if n.params:
            entry["params"] = dict(n.params)
        nodes.append(entry)
    return {
        "id": agent.agent_id,
        "nodes": nodes,
        "edges": sorted([s.local_id, d.local_id] for s, d in agent.edges),
        "output": agent.output.local_id,
    }


def agent_from_dict(data: Mapping) -> AgentGraph:
    try:
        agent_id = data["id"]
        nodes = []
        for entry in data["nodes"]:
            nodes.append(Node(
                NodeId(agent_id, entry["id"]),
                RoutineKind(entry["kind"]),
                entry.get("description", ""),
                _prompt_from_dict(entry),
                dict(entry.get("params", {})),
            ))
        edges = {(NodeId(agent_id, s), NodeId(agent_id, d)) for s, d in data.get("edges", ())}
        return AgentGraph(agent_id, tuple(nodes), frozenset(edges), NodeId(agent_id, data["output"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed agent definition: {exc!r}") from exc


def composite_to_dict(composite: CompositeGraph) -> dict:
    out = {
        "agents": [agent_to_dict(a) for a in composite.agents],
        "mandated_edges": sorted([str(s), str(d)] for s, d in composite.mandated_edges),
        "output_agent": composite.agents[composite.output_agent].agent_id,
    }
    if composite.realized_edges:
        out["realized_edges"] = sorted([str(s), str(d)] for s, d in composite.realized_edges)
    return out


def composite_from_dict(data: Mapping) -> CompositeGraph:
    try:
        agents = [agent_from_dict(a) for a in data["agents"]]
        ids = [a.agent_id for a in agents]
        output_agent = data.get("output_agent", ids[-1])
        index = ids.index(output_agent) if isinstance(output_agent, str) else int(output_agent)
        mandated = {(NodeId.parse(s), NodeId.parse(d)) for s, d in data.get("mandated_edges", ())}
        realized = {(NodeId.parse(s), NodeId.parse(d)) for s, d in data.get("realized_edges", ())}
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed graph definition: {exc!r}") from exc
    composite = compose(agents, index, mandated)
    return composite.with_edges(realized) if realized else composite


def save_graph(composite: CompositeGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(composite_to_dict(composite), indent=2, sort_keys=True) + "\n")


def load_graph(path: str | Path) -> CompositeGraph:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"graph file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"graph file {path} is not valid JSON: {exc}") from exc
    return composite_from_dict(data)
