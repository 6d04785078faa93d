"""Agent-graph builders and decision strategies."""
from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import ConfigError, DomainError, EmptyInput
from .graph import AgentGraph, Node, NodeId, Prompt, RoutineKind
from .templates import MCQ_SYSTEM_PROMPT


class DecisionStrategy(str, enum.Enum):
    MAJORITY_VOTE = "majority_vote"
    SELF_CONSISTENCY_PROMPT = "self_consistency_prompt"
    CHOOSE_BEST_PROMPT = "choose_best_prompt"


TIE_BREAKS = ("lexicographic", "first")


def canonical_answer(answer: str) -> str:
    return answer.strip().upper()


def majority_vote(answers: Sequence[str], tie_break: str = "lexicographic") -> str:
    """Most frequent answer after trimming and case-folding.

    Ties go to the lexicographically smallest canonical answer, or with
    ``tie_break="first"`` to the tied answer that appears first in ``answers``.
    """
    if not answers:
        raise EmptyInput("majority_vote needs at least one answer")
    if tie_break not in TIE_BREAKS:
        raise ConfigError(f"unknown tie_break {tie_break!r}")
    canon = [canonical_answer(a) for a in answers]
    counts = Counter(canon)
    top = max(counts.values())
    tied = [a for a in counts if counts[a] == top]
    if tie_break == "first":
        return tied[0]  # Counter preserves first-insertion order
    return min(tied)


def _single_node_agent(agent_id: str, local_id: str, description: str, params: dict,
                       instruction: str = "") -> AgentGraph:
    nid = NodeId(agent_id, local_id)
    node = Node(nid, RoutineKind.LLM_QUERY, description, Prompt(instruction), params)
    return AgentGraph(agent_id, (node,), frozenset(), nid)


def _chain(agent_id: str, nodes: list[Node]) -> AgentGraph:
    edges = frozenset((a.id, b.id) for a, b in zip(nodes, nodes[1:]))
    return AgentGraph(agent_id, tuple(nodes), edges, nodes[-1].id)


def build_io_agent(role: str | None = None, *, agent_id: str = "io") -> AgentGraph:
    params: dict[str, Any] = {"template": "io", "system": MCQ_SYSTEM_PROMPT}
    if role:
        params["role"] = role
    return _single_node_agent(agent_id, "answer", "answers the question directly", params)


def build_adversarial_agent(*, agent_id: str = "adversarial") -> AgentGraph:
    params = {"template": "adversarial", "system": MCQ_SYSTEM_PROMPT}
    return _single_node_agent(agent_id, "answer", "answers the question with a lie", params)


def build_cot_chain(steps: int = 3, *, agent_id: str = "cot") -> AgentGraph:
    if steps < 1:
        raise DomainError("a chain of thought needs at least one step")
    nodes = [
        Node(NodeId(agent_id, f"step{i:02d}"), RoutineKind.LLM_QUERY,
             f"reasoning step {i + 1} of {steps}", Prompt(),
             {"template": "cot_step", "step": i, "steps": steps})
        for i in range(steps)
    ]
    return _chain(agent_id, nodes)


def build_tot_chain(depth: int = 8, branching: int = 2, *, agent_id: str = "tot") -> AgentGraph:
    """Tree search realized as a chain: each node branches every solution it receives."""
    if depth < 1:
        raise DomainError("tot depth must be >= 1")
    if branching < 2:
        raise DomainError("tot branching must be >= 2")
    nodes = [
        Node(NodeId(agent_id, f"branch{i:02d}"), RoutineKind.LLM_QUERY,
             "expands every candidate solution into alternatives", Prompt(),
             {"template": "tot_branch", "branching": branching, "level": i})
        for i in range(depth)
    ]
    return _chain(agent_id, nodes)


def build_reflexion_agent(*, agent_id: str = "reflexion") -> AgentGraph:
    stages = [
        ("propose", "proposes a solution greedily", "reflexion_propose"),
        ("critique", "criticizes the proposed solution", "reflexion_critique"),
        ("revise", "revises the solution using the critique", "reflexion_revise"),
    ]
    nodes = [
        Node(NodeId(agent_id, f"{i}_{name}"), RoutineKind.LLM_QUERY, desc, Prompt(), {"template": tpl})
        for i, (name, desc, tpl) in enumerate(stages)
    ]
    return _chain(agent_id, nodes)


def build_decision_node(strategy: DecisionStrategy | str = DecisionStrategy.MAJORITY_VOTE, *,
                        agent_id: str = "decision", tie_break: str = "lexicographic",
                        constraint: str = "") -> Node:
    strategy = DecisionStrategy(strategy)
    nid = NodeId(agent_id, "decide")
    if strategy is DecisionStrategy.MAJORITY_VOTE:
        return Node(nid, RoutineKind.PURE_FUNCTION, "aggregates answers by majority vote", Prompt(),
                    {"function": "majority_vote", "tie_break": tie_break, "decision": True})
    template = "self_consistency" if strategy is DecisionStrategy.SELF_CONSISTENCY_PROMPT else "choose_best"
    return Node(nid, RoutineKind.LLM_QUERY, "selects the final answer among candidates", Prompt(),
                {"decision_template": template, "constraint": constraint, "decision": True,
                 "tie_break": tie_break})


def build_decision_agent(strategy: DecisionStrategy | str = DecisionStrategy.MAJORITY_VOTE, *,
                         agent_id: str = "decision", tie_break: str = "lexicographic") -> AgentGraph:
    node = build_decision_node(strategy, agent_id=agent_id, tie_break=tie_break)
    return AgentGraph(agent_id, (node,), frozenset(), node.id)


@dataclass(frozen=True)
class AgentTemplate:
    kind: str
    params: dict = field(default_factory=dict, hash=False)

    KINDS = ("io", "adversarial", "cot", "tot", "reflexion")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown agent kind {self.kind!r}")
        if self.kind == "tot":
            if self.params.get("depth", 8) < 1 or self.params.get("branching", 2) < 2:
                raise DomainError("tot needs depth >= 1 and branching >= 2")

    def build(self, agent_id: str) -> AgentGraph:
        p = self.params
        if self.kind == "io":
            return build_io_agent(p.get("role"), agent_id=agent_id)
        if self.kind == "adversarial":
            return build_adversarial_agent(agent_id=agent_id)
        if self.kind == "cot":
            return build_cot_chain(p.get("steps", 3), agent_id=agent_id)
        if self.kind == "tot":
            return build_tot_chain(p.get("depth", 8), p.get("branching", 2), agent_id=agent_id)
        return build_reflexion_agent(agent_id=agent_id)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, data: dict) -> "AgentTemplate":
        try:
            return cls(data["kind"], dict(data.get("params", {})))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed agent template: {exc!r}") from exc


def load_agent_template(path: str | Path) -> AgentTemplate:
    try:
        return AgentTemplate.from_dict(json.loads(Path(path).read_text()))
    except FileNotFoundError as exc:
        raise ConfigError(f"agent template {path} not found") from exc


def swarm_agents(templates: Iterable[AgentTemplate],
                 strategy: DecisionStrategy | str = DecisionStrategy.MAJORITY_VOTE,
                 tie_break: str = "lexicographic") -> list[AgentGraph]:
    """Instantiate templates as agents ``a00-<kind>``, ``a01-<kind>``, ... plus a
    trailing decision agent.  The decision agent is last, so compose it with
    ``output_agent_index=-1``.
    """
    agents = [t.build(f"a{i:02d}-{t.kind}") for i, t in enumerate(templates)]
    agents.append(build_decision_agent(strategy, agent_id="decision", tie_break=tie_break))
    return agents
