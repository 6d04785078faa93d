"""Per-node prompt optimization driven by execution history.

Every executed problem appends one ``HistoryEntry`` per node.  Every
``update_every`` problems an improver rewrites each node's prompt from that
node's own history while all other prompts stay fixed.  Two demonstration
selection improvers are provided: a greedy keep-or-resample comparison and a
UCB1 bandit over single demonstrations.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol, Sequence

import numpy as np

from .errors import DomainError, ProblemFailure, ReplayFailure
from .graph import (
    CompositeGraph, ContextEntry, Demo, ExecutionTrace, NodeContext, NodeId, Prompt, RoutineKind,
    execute,
)


@dataclass(frozen=True)
class HistoryEntry:
    context: NodeContext
    input: str
    output: str
    score: float | None
    problem_id: Any


class HistoryStore:
    """Bounded per-node history with FIFO eviction."""

    def __init__(self, cap: int = 1000):
        if cap < 1:
            raise DomainError("history cap must be >= 1")
        self.cap = cap
        self._entries: dict[NodeId, deque[HistoryEntry]] = {}

    def __getitem__(self, node_id: NodeId) -> list[HistoryEntry]:
        return list(self._entries.get(node_id, ()))

    def __contains__(self, node_id: NodeId) -> bool:
        return node_id in self._entries

    def node_ids(self) -> list[NodeId]:
        return sorted(self._entries)

    def append(self, node_id: NodeId, entry: HistoryEntry) -> None:
        self._entries.setdefault(node_id, deque(maxlen=self.cap)).append(entry)

    def total(self) -> int:
        return sum(len(q) for q in self._entries.values())

    def to_dict(self) -> list[dict]:
        return [
            {
                "node_id": str(n),
                "entries": [
                    {
                        "problem_id": e.problem_id,
                        "input": e.input,
                        "context": [[str(c.producer), c.output] for c in e.context],
                        "output": e.output,
                        "score": e.score,
                    }
                    for e in self._entries[n]
                ],
            }
            for n in self.node_ids()
        ]

    @classmethod
    def from_dict(cls, data: list[dict], cap: int = 1000) -> "HistoryStore":
        store = cls(cap)
        for item in data:
            nid = NodeId.parse(item["node_id"])
            for e in item["entries"]:
                ctx = NodeContext(tuple(ContextEntry(NodeId.parse(p), o) for p, o in e["context"]))
                store.append(nid, HistoryEntry(ctx, e["input"], e["output"], e["score"], e["problem_id"]))
        return store

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def record(store: HistoryStore, trace: ExecutionTrace,
           scores_by_node: dict[NodeId, float] | float | None = None) -> HistoryStore:
    """Append one entry per executed node.  A scalar score applies to every node."""
    for rec in trace.records:
        if isinstance(scores_by_node, dict):
            score = scores_by_node.get(rec.node_id)
        else:
            score = scores_by_node
        store.append(rec.node_id, HistoryEntry(rec.context, rec.input, rec.output, score, trace.problem_id))
    return store


@dataclass
class NodeOptConfig:
    update_every: int = 4
    max_demos: int = 4
    replay_window: int = 10
    ucb_iterations: int = 100
    seed: int = 0
    history_cap: int = 1000
    positive_threshold: float = 1.0

    def __post_init__(self):
        for name in ("update_every", "max_demos", "replay_window", "ucb_iterations", "history_cap"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")


# (candidate prompt, historical entry) -> score of the node's output on that entry
ReplayScorer = Callable[[Prompt, HistoryEntry], float]


class Improver(Protocol):
    def __call__(self, history: Sequence[HistoryEntry], prompt: Prompt, description: str, *,
                 replay_scorer: ReplayScorer, config: NodeOptConfig,
                 rng: np.random.Generator) -> Prompt: ...


def demo_input(entry: HistoryEntry) -> str:
    """Text shown as the input side of a demonstration built from ``entry``."""
    if not len(entry.context):
        return entry.input
    ctx = "\n".join(c.output for c in entry.context)
    return f"{ctx}\n{entry.input}"


def demo_from(entry: HistoryEntry, positive: bool = True) -> Demo:
    return Demo(demo_input(entry), entry.output, positive)


def _is_positive(entry: HistoryEntry, config: NodeOptConfig) -> bool:
    return entry.score is not None and entry.score >= config.positive_threshold


def _recent_problem_entries(history: Sequence[HistoryEntry], k: int) -> list[HistoryEntry]:
    """Entries belonging to the last ``k`` distinct problems."""
    recent: list[Any] = []
    for e in reversed(history):
        if e.problem_id not in recent:
            if len(recent) == k:
                break
            recent.append(e.problem_id)
    keep = set(map(repr, recent))
    return [e for e in history if repr(e.problem_id) in keep]


def _replay_set(history: Sequence[HistoryEntry], window: int) -> list[HistoryEntry]:
    """Last ``window`` entries, taking only the first entry seen per problem."""
    seen: set[str] = set()
    firsts = []
    for e in history:
        key = repr(e.problem_id)
        if key not in seen:
            seen.add(key)
            firsts.append(e)
    return firsts[-window:]


def _replay_total(prompt: Prompt, entries: Iterable[HistoryEntry], replay_scorer: ReplayScorer) -> float:
    total = 0.0
    for e in entries:
        try:
            total += float(replay_scorer(prompt, e))
        except ReplayFailure:
            raise
        except Exception as exc:
            raise ReplayFailure(f"replay on problem {e.problem_id!r} failed: {exc!r}") from exc
    return total


def greedy_demo_improver(history: Sequence[HistoryEntry], prompt: Prompt, description: str = "", *,
                         replay_scorer: ReplayScorer, config: NodeOptConfig,
                         rng: np.random.Generator) -> Prompt:
    """Keep the current demos or switch to a resampled pool, whichever replays better.

    The challenger pools the current demos with positive examples from the
    last ``update_every`` problems and draws up to ``max_demos`` unique demos
    uniformly.  Both prompts are replayed on the node's last
    ``replay_window`` inputs; ties keep the current prompt.
    """
    if not history:
        return prompt
    pool: list[Demo] = []
    for demo in list(prompt.demos) + [
        demo_from(e) for e in _recent_problem_entries(history, config.update_every)
        if _is_positive(e, config)
    ]:
        if all((d.shown_input, d.shown_output) != (demo.shown_input, demo.shown_output) for d in pool):
            pool.append(demo)
    if not pool:
        return prompt
    size = min(config.max_demos, len(pool))
    picked = sorted(rng.choice(len(pool), size=size, replace=False))
    challenger = prompt.with_demos(pool[i] for i in picked)
    if challenger == prompt:
        return prompt
    replay = _replay_set(history, config.replay_window)
    incumbent_score = _replay_total(prompt, replay, replay_scorer)
    challenger_score = _replay_total(challenger, replay, replay_scorer)
    return challenger if challenger_score > incumbent_score else prompt


def ucb1_index(mean: float, plays: int, total_plays: int) -> float:
    return mean + math.sqrt(2.0 * math.log(total_plays) / plays)


@dataclass
class BanditResult:
    best_arm: int
    plays: list[int]
    means: list[float]
    history: list[int] = field(default_factory=list)


def ucb1_select(pull: Callable[[int], float], n_arms: int, iterations: int) -> BanditResult:
    """Run UCB1 for ``iterations`` pulls and return the arm with the best mean.

    Unplayed arms are pulled first in index order; index ties go to the lowest
    arm, as do ties between final means.
    """
    if n_arms < 1:
        raise DomainError("need at least one arm")
    plays = [0] * n_arms
    totals = [0.0] * n_arms
    chosen = []
    for t in range(iterations):
        unplayed = [a for a in range(n_arms) if plays[a] == 0]
        if unplayed:
            arm = unplayed[0]
        else:
            scores = [ucb1_index(totals[a] / plays[a], plays[a], t) for a in range(n_arms)]
            arm = int(np.argmax(scores))
        reward = float(pull(arm))
        plays[arm] += 1
        totals[arm] += reward
        chosen.append(arm)
    means = [totals[a] / plays[a] if plays[a] else -math.inf for a in range(n_arms)]
    return BanditResult(int(np.argmax(means)), plays, means, chosen)


def ucb1_demo_improver(history: Sequence[HistoryEntry], prompt: Prompt, description: str = "", *,
                       replay_scorer: ReplayScorer, config: NodeOptConfig,
                       rng: np.random.Generator) -> Prompt:
    """Choose one demonstration from history (or none) with a UCB1 bandit.

    Arm 0 keeps the prompt unchanged; arm k adds the k-th unique historical
    input/output pair as a demo (dropping the oldest demo past ``max_demos``).
    Each pull replays one randomly chosen recent input with that arm's prompt.
    """
    if not history:
        return prompt
    candidates: list[Demo] = []
    for e in history:
        demo = demo_from(e, _is_positive(e, config))
        if demo not in candidates and all(
            (d.shown_input, d.shown_output) != (demo.shown_input, demo.shown_output) for d in prompt.demos
        ):
            candidates.append(demo)
    arms = [prompt] + [
        prompt.with_demos((list(prompt.demos) + [d])[-config.max_demos:]) for d in candidates
    ]
    replay = _replay_set(history, config.replay_window)

    def pull(arm: int) -> float:
        entry = replay[int(rng.integers(len(replay)))]
        return _replay_total(arms[arm], [entry], replay_scorer)

    result = ucb1_select(pull, len(arms), config.ucb_iterations)
    return arms[result.best_arm]


# ---------------------------------------------------------------------------
# the outer loop


@dataclass(frozen=True)
class NodeTask:
    """One sampled problem: graph input plus an id for history grouping."""

    problem_id: Any
    input: str
    payload: Any = None


@dataclass
class NodeOptRun:
    graph: CompositeGraph
    history: HistoryStore
    # (problem index, {node id: prompt}) after each improver round
    updates: list[tuple[int, dict[NodeId, Prompt]]] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)


def _node_rng(seed: int, round_index: int, node_id: NodeId) -> np.random.Generator:
    key = int.from_bytes(str(node_id).encode(), "big") % (2**63)
    return np.random.default_rng([seed, round_index, key])


def optimizable_nodes(graph: CompositeGraph) -> list[NodeId]:
    return [
        n for n, node in graph.nodes.items()
        if node.kind is RoutineKind.LLM_QUERY and node.description
        and not node.params.get("decision")
    ]


def update_prompts(graph: CompositeGraph, history: HistoryStore, improver: Improver,
                   replay_scorer_for: Callable[[NodeId], ReplayScorer], config: NodeOptConfig,
                   round_index: int, nodes: Sequence[NodeId] | None = None) -> CompositeGraph:
    """Apply ``improver`` to every node independently against a fixed graph snapshot."""
    nodes = optimizable_nodes(graph) if nodes is None else nodes
    updated = {}
    for n in nodes:
        node = graph.nodes[n]
        new_prompt = improver(
            history[n], node.prompt, node.description,
            replay_scorer=replay_scorer_for(n), config=config,
            rng=_node_rng(config.seed, round_index, n),
        )
        if new_prompt != node.prompt:
            updated[n] = node.with_prompt(new_prompt)
    return graph.replace_nodes(updated) if updated else graph


def optimize_nodes(
    graph: CompositeGraph,
    task_sampler: Callable[[np.random.Generator], NodeTask],
    executor,
    improver: Improver,
    config: NodeOptConfig,
    *,
    num_problems: int,
    run_score: Callable[[NodeTask, ExecutionTrace], float],
    replay_score: Callable[[NodeId, HistoryEntry, str], float],
    nodes: Sequence[NodeId] | None = None,
) -> NodeOptRun:
    """Sample problems, execute, record history and periodically improve prompts.

    ``run_score`` grades a whole execution (it becomes every entry's score and
    decides positive examples); ``replay_score`` grades one node output when an
    improver re-invokes that node on a stored input.
    """
    rng = np.random.default_rng([config.seed, 7])
    history = HistoryStore(config.history_cap)
    run = NodeOptRun(graph, history)

    def scorer_for(node_id: NodeId) -> ReplayScorer:
        def replay(prompt: Prompt, entry: HistoryEntry) -> float:
            node = run.graph.nodes[node_id].with_prompt(prompt)
            try:
                out = executor.run(node, entry.context, entry.input, entry.problem_id)
            except Exception as exc:
                raise ReplayFailure(f"node {node_id} failed on replay: {exc!r}") from exc
            return replay_score(node_id, entry, out)
        return replay

    for index in range(num_problems):
        task = task_sampler(rng)
        try:
            trace = execute(run.graph, task.input, executor, problem_id=task.problem_id)
        except Exception as exc:
            raise ProblemFailure(index, exc) from exc
        score = float(run_score(task, trace))
        run.scores.append(score)
        record(history, trace, score)
        if (index + 1) % config.update_every == 0:
            round_index = (index + 1) // config.update_every
            run.graph = update_prompts(run.graph, history, improver, scorer_for, config,
                                       round_index, nodes)
            run.updates.append((index + 1, {
                n: run.graph.nodes[n].prompt for n in (nodes or optimizable_nodes(run.graph))
            }))
    return run


# ---------------------------------------------------------------------------
# prompt state file


def prompt_to_dict(node_id: NodeId, prompt: Prompt) -> dict:
    return {
        "node_id": str(node_id),
        "instruction": prompt.instruction,
        "demos": [{"in": d.shown_input, "out": d.shown_output, "positive": d.positive}
                  for d in prompt.demos],
    }


def prompt_from_dict(data: dict) -> tuple[NodeId, Prompt]:
    demos = tuple(Demo(d["in"], d["out"], d.get("positive", True)) for d in data.get("demos", ()))
    return NodeId.parse(data["node_id"]), Prompt(data.get("instruction", ""), demos)


def save_prompts(graph: CompositeGraph, path: str | Path, nodes: Iterable[NodeId] | None = None) -> None:
    nodes = optimizable_nodes(graph) if nodes is None else nodes
    Path(path).write_text(
        json.dumps([prompt_to_dict(n, graph.nodes[n].prompt) for n in nodes], indent=2) + "\n"
    )
