"""Routine dispatch shared by every executor.

Pure-function and majority-vote nodes are evaluated locally; LLM queries are
rendered into an ``ExecutorRequest`` and handed to ``query``, which concrete
executors implement.
"""
from __future__ import annotations

import threading
from typing import Any, Callable

from ..agents import majority_vote
from ..errors import UnresolvedRoutine
from ..graph import Node, NodeContext, RoutineKind
from ..templates import join_solutions, split_solutions
from .render import ExecutorRequest, render_request

PureFunction = Callable[[Node, NodeContext, str], str]


def _identity(node, context, x):
    return x


def _concat(node, context, x):
    return node.params.get("separator", "\n").join(context.outputs)


def _forward_all(node, context, x):
    return join_solutions(s for out in context.outputs for s in split_solutions(out))


def _vote(node, context, x):
    # zero connected voters: abstain
    if not len(context):
        return ""
    return majority_vote(context.outputs, node.params.get("tie_break", "lexicographic"))


BUILTIN_FUNCTIONS: dict[str, PureFunction] = {
    "identity": _identity,
    "concat": _concat,
    "forward_all": _forward_all,
    "majority_vote": _vote,
}


class RoutineExecutor:
    """Base executor; subclasses provide ``query`` for LLM nodes."""

    temperature = 0.0
    seed = 0

    def __init__(self, functions: dict[str, PureFunction] | None = None):
        self.functions = dict(BUILTIN_FUNCTIONS)
        if functions:
            self.functions.update(functions)
        self.calls = 0
        self._lock = threading.Lock()

    def run(self, node: Node, context: NodeContext, x: str, problem_id: Any = None) -> str:
        if node.kind is RoutineKind.PURE_FUNCTION or (
            node.kind is RoutineKind.DECISION and "function" in node.params
        ):
            name = node.params.get("function")
            if name not in self.functions:
                raise UnresolvedRoutine(f"no pure function {name!r} for node {node.id}")
            return self.functions[name](node, context, x)
        if node.kind in (RoutineKind.LLM_QUERY, RoutineKind.DECISION):
            request = render_request(node, context, x, temperature=self.temperature,
                                     seed=self.seed, problem_id=problem_id)
            with self._lock:
                self.calls += 1
            return self.query(node, context, request)
        raise UnresolvedRoutine(f"unsupported routine kind {node.kind!r}")

    def query(self, node: Node, context: NodeContext, request: ExecutorRequest) -> str:
        raise UnresolvedRoutine(f"{type(self).__name__} cannot run LLM node {node.id}")
