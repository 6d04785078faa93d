"""Deterministic stand-in for an LLM answering multiple-choice questions.

Every random decision is a hash of ``(seed, node_id, problem_id, purpose)``,
so outputs do not depend on call order or concurrency.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any, Mapping

from ..agents import majority_vote
from ..errors import DomainError, MissingTruth
from ..graph import Node, NodeContext
from ..templates import ADVERSARIAL_MARKER, join_solutions, split_solutions
from .base import RoutineExecutor
from .render import ExecutorRequest


@dataclass(frozen=True)
class MockPolicy:
    truthful_accuracy: float = 0.85
    adversarial_accuracy: float = 0.0
    alphabet: str = "ABCD"
    seed: int = 0

    def __post_init__(self):
        for p in (self.truthful_accuracy, self.adversarial_accuracy):
            if not 0.0 <= p <= 1.0:
                raise DomainError(f"accuracy {p} outside [0, 1]")
        if len(self.alphabet) < 2:
            raise DomainError("alphabet needs at least two options")


def hashed_unit(*parts: Any) -> float:
    """Uniform number in [0, 1) derived from ``parts``."""
    digest = hashlib.blake2b("|".join(map(repr, parts)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0**64


def mock_invoke(policy: MockPolicy, request: ExecutorRequest, task_truth: Mapping[Any, str]) -> str:
    """Answer gold with the node's accuracy, otherwise a uniformly chosen wrong letter.

    A request is adversarial when its user content carries the adversarial
    template marker.
    """
    if request.problem_id not in task_truth:
        raise MissingTruth(f"no gold answer for problem {request.problem_id!r}")
    gold = task_truth[request.problem_id]
    adversarial = ADVERSARIAL_MARKER in request.user_content
    p = policy.adversarial_accuracy if adversarial else policy.truthful_accuracy
    key = (policy.seed, str(request.node_id), request.problem_id)
    if hashed_unit(*key, "correct") < p:
        return gold
    wrong = [a for a in policy.alphabet if a != gold]
    return wrong[int(hashed_unit(*key, "wrong") * len(wrong))]


class MockExecutor(RoutineExecutor):
    """Executor backed by ``mock_invoke``; performs no network I/O."""

    def __init__(self, policy: MockPolicy, task_truth: Mapping[Any, str], functions=None):
        super().__init__(functions)
        self.policy = policy
        self.task_truth = task_truth
        self.seed = policy.seed

    def query(self, node: Node, context: NodeContext, request: ExecutorRequest) -> str:
        params = node.params
        if "decision_template" in params:
            if not len(context):
                return ""
            return majority_vote(context.outputs, params.get("tie_break", "lexicographic"))
        template = params.get("template")
        if template == "tot_branch":
            return self._branch(node, context)
        if template == "reflexion_critique":
            proposal = context.outputs[0] if len(context) else ""
            return join_solutions([proposal, f"critique of {proposal}"])
        if template == "reflexion_revise":
            proposal = split_solutions(context.outputs[0])[0] if len(context) else ""
            return join_solutions([proposal, mock_invoke(self.policy, request, self.task_truth)])
        return mock_invoke(self.policy, request, self.task_truth)

    def _branch(self, node: Node, context: NodeContext) -> str:
        branching = int(node.params.get("branching", 2))
        parents = [s for out in context.outputs for s in split_solutions(out)] or ["root"]
        children = [f"{s}.{j}" for s in parents for j in range(branching)]
        cap = node.params.get("max_solutions")
        return join_solutions(children[:cap] if cap else children)
