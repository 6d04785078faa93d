"""Synthetic tasks, utilities and the desk-scale adversarial swarm experiment."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .agents import AgentTemplate, DecisionStrategy, build_io_agent, canonical_answer, swarm_agents
from .backends import MockExecutor, MockPolicy
from .backends.mock import hashed_unit
from .backends.http import HttpExecutor, HttpExecutorConfig
from .edges import (
    EdgeDistribution, export_matrix, full_graph_edges, new_distribution, realize, sample,
    save_params, write_heatmap,
)
from .errors import ConfigError, DomainError
from .graph import CompositeGraph, Demo, NodeId, compose, execute, prune
from .nodeopt import HistoryEntry, NodeOptConfig, NodeTask, optimize_nodes
from .reinforce import EdgeOptConfig, optimize_edges
from .templates import format_mcq

LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True)
class TaskInstance:
    problem_id: str
    question: str
    options: tuple[str, ...]
    gold: str

    def __post_init__(self):
        if self.gold not in self.options:
            raise ConfigError(f"gold answer of {self.problem_id} is not among its options")

    @property
    def gold_letter(self) -> str:
        return LETTERS[self.options.index(self.gold)]

    @property
    def prompt(self) -> str:
        return format_mcq(self.question, list(self.options))


def generate_tasks(n: int, seed: int, *, num_options: int = 4, split: str = "task") -> list[TaskInstance]:
    """Deterministic synthetic multiple-choice questions with uniformly placed gold."""
    if num_options < 2 or num_options > len(LETTERS):
        raise DomainError(f"num_options must lie in [2, {len(LETTERS)}]")
    if n < 0:
        raise DomainError("n must be >= 0")
    rng = np.random.default_rng([seed, 11])
    gold_pos = rng.integers(num_options, size=n)
    values = rng.integers(10, 1000, size=(n, 2))
    tasks = []
    for i in range(n):
        a, b = (int(v) for v in values[i])
        answer = a + b
        distractors = [answer + k for k in (-10, -1, 1, 10, 2, -2, 100, -100)]
        opts = [str(x) for x in distractors[: num_options - 1]]
        opts.insert(int(gold_pos[i]), str(answer))
        tasks.append(TaskInstance(f"{split}-{seed}-{i:05d}", f"What is {a} + {b}?", tuple(opts), str(answer)))
    return tasks


def truth_map(tasks: Iterable[TaskInstance]) -> dict[str, str]:
    return {t.problem_id: t.gold_letter for t in tasks}


def task_correct(graph, task: TaskInstance, executor) -> bool:
    trace = execute(graph, task.prompt, executor, problem_id=task.problem_id)
    return canonical_answer(trace.final_output) == task.gold_letter


def accuracy_utility(composite, tasks: Sequence[TaskInstance], executor, rng=None) -> float:
    """Fraction of ``tasks`` whose final output matches gold.

    With a single task this is the one-sample utility estimate used during
    edge optimization.
    """
    if not tasks:
        raise DomainError("accuracy_utility needs at least one task")
    return float(np.mean([task_correct(composite, t, executor) for t in tasks]))


def single_task_estimator(tasks: Sequence[TaskInstance], executor):
    """Utility estimator scoring a graph on one uniformly drawn task."""
    def estimate(graph: CompositeGraph, rng: np.random.Generator) -> float:
        task = tasks[int(rng.integers(len(tasks)))]
        return float(task_correct(graph, task, executor))
    return estimate


# ---------------------------------------------------------------------------
# experiment configuration


def _from_mapping(cls, data: Mapping | None):
    if data is None:
        return cls()
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**data)


@dataclass
class TaskParams:
    num_options: int = 4
    train_size: int = 1000
    eval_size: int = 153
    truthful_accuracy: float = 0.85
    adversarial_accuracy: float = 0.0


@dataclass
class ExperimentConfig:
    truthful: int = 2
    adversarial: int = 2
    decision: str = "majority_vote"
    tie_break: str = "lexicographic"
    mandate_decision_edges: bool = False
    seed: int = 0
    random_graph_prob: float = 0.5
    edge_opt: EdgeOptConfig = field(default_factory=EdgeOptConfig)
    node_opt: NodeOptConfig = field(default_factory=NodeOptConfig)
    tasks: TaskParams = field(default_factory=TaskParams)
    executor: str = "mock"
    http: HttpExecutorConfig = field(default_factory=HttpExecutorConfig)

    def __post_init__(self):
        if self.truthful < 1 or self.adversarial < 0:
            raise DomainError("need at least one truthful agent and a non-negative adversary count")
        DecisionStrategy(self.decision)
        if self.executor not in ("mock", "http"):
            raise ConfigError(f"unknown executor {self.executor!r}")

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentConfig":
        data = dict(data)
        try:
            nested = {
                "edge_opt": _from_mapping(EdgeOptConfig, data.pop("edge_opt", None)),
                "node_opt": _from_mapping(NodeOptConfig, data.pop("node_opt", None)),
                "tasks": _from_mapping(TaskParams, data.pop("tasks", None)),
                "http": _from_mapping(HttpExecutorConfig, data.pop("http", None)),
            }
            return _from_mapping(cls, {**data, **nested})
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid experiment config: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return ExperimentConfig.from_dict(data)


def build_adversarial_swarm(truthful: int, adversarial: int, *, decision: str = "majority_vote",
                            tie_break: str = "lexicographic",
                            mandate_decision_edges: bool = False) -> CompositeGraph:
    """Truthful IO agents, then adversarial agents, then a decision agent as output."""
    templates = [AgentTemplate("io")] * truthful + [AgentTemplate("adversarial")] * adversarial
    agents = swarm_agents(templates, decision, tie_break)
    decision_node = agents[-1].output
    mandated = {(a.output, decision_node) for a in agents[:-1]} if mandate_decision_edges else set()
    return compose(agents, -1, mandated)


def make_executor(config: ExperimentConfig, tasks: Iterable[TaskInstance]):
    if config.executor == "http":
        return HttpExecutor(config.http)
    policy = MockPolicy(config.tasks.truthful_accuracy, config.tasks.adversarial_accuracy,
                        LETTERS[: config.tasks.num_options], config.seed)
    return MockExecutor(policy, truth_map(tasks))


# ---------------------------------------------------------------------------
# report


@dataclass
class EvalReport:
    scores: dict[str, float]
    outcomes: dict[str, list[int]]
    problem_ids: list[str]
    details: dict[str, Any]
    # wall-clock seconds; kept out of report.json so reruns stay byte-identical
    runtime: dict[str, float] = field(default_factory=dict)
    dist: EdgeDistribution | None = field(default=None, repr=False)
    composite: CompositeGraph | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "scores": self.scores,
            "problem_ids": self.problem_ids,
            "outcomes": self.outcomes,
            **self.details,
        }

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        with open(out / "summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["configuration", "accuracy"])
            for name, score in self.scores.items():
                writer.writerow([name, repr(score)])
        (out / "timing.json").write_text(json.dumps(self.runtime, indent=2) + "\n")


def _outcomes(graph, tasks, executor) -> list[int]:
    return [int(task_correct(graph, t, executor)) for t in tasks]


def evaluate_swarm(composite: CompositeGraph, config: ExperimentConfig, executor,
                   eval_tasks: Sequence[TaskInstance],
                   dist: EdgeDistribution | None = None) -> tuple[dict, dict]:
    """Paired evaluation of baseline, full, random and (optionally) optimized graphs."""
    outcomes: dict[str, list[int]] = {}
    truthful_agents = [a for a in composite.agents if a.agent_id.endswith("-io")]
    per_agent = [_outcomes(a, eval_tasks, executor) for a in truthful_agents]
    # baseline: a lone truthful agent, averaged over the truthful agents so the
    # comparison is not at the mercy of one agent's luck on the eval draw
    outcomes["baseline"] = [float(np.mean(col)) for col in zip(*per_agent)]
    outcomes["baseline_first"] = per_agent[0]
    outcomes["full_graph"] = _outcomes(prune(composite.with_edges(full_graph_edges(composite))),
                                       eval_tasks, executor)

    init = new_distribution(composite, config.random_graph_prob)
    rng = np.random.default_rng([config.seed, 3])
    random_hits = []
    for t in eval_tasks:
        g = prune(composite.with_edges(sample(init, composite, rng).edges(init)))
        random_hits.append(int(task_correct(g, t, executor)))
    outcomes["random_graph"] = random_hits

    details: dict[str, Any] = {}
    if dist is not None:
        realized = realize(dist, composite, config.edge_opt.realize_threshold)
        optimized = prune(composite.with_edges(realized))
        outcomes["optimized"] = _outcomes(optimized, eval_tasks, executor)
        details["realized_edges"] = sorted([str(u), str(v)] for u, v in realized)
        details["pruned_agents"] = [a.agent_id for a in optimized.agents]
    scores = {k: float(np.mean(v)) for k, v in outcomes.items()}
    return scores, {"outcomes": outcomes, **details}


def run_adversarial_experiment(config: ExperimentConfig, out_dir: str | Path | None = None) -> EvalReport:
    """Optimize the edges of a truthful/adversarial swarm and evaluate it on held-out tasks.

    When ``out_dir`` is given, writes ``report.json``, ``summary.csv``,
    ``params.json``, ``heatmap.csv``, ``run.jsonl`` and ``timing.json``.
    """
    t0 = time.perf_counter()
    composite = build_adversarial_swarm(
        config.truthful, config.adversarial, decision=config.decision,
        tie_break=config.tie_break, mandate_decision_edges=config.mandate_decision_edges,
    )
    tp = config.tasks
    train = generate_tasks(tp.train_size, config.seed, num_options=tp.num_options, split="train")
    evals = generate_tasks(tp.eval_size, config.seed, num_options=tp.num_options, split="eval")
    executor = make_executor(config, train + evals)

    edge_cfg = EdgeOptConfig(**{**asdict(config.edge_opt), "seed": config.seed})
    dist, run = optimize_edges(composite, single_task_estimator(train, executor), edge_cfg)
    t_opt = time.perf_counter() - t0

    scores, extra = evaluate_swarm(composite, config, executor, evals, dist)
    details = {
        "config": config.to_dict(),
        "num_agent_nodes": len(composite.node_ids) - 1,
        "num_potential_edges": len(composite.potential_edges),
        "final_probs": {f"{u}->{v}": float(p) for (u, v), p in zip(dist.potential_edges, dist.probs)},
        "train_mean_utility": [r.mean_utility for r in run.iterations],
        "llm_calls": executor.calls,
        **{k: v for k, v in extra.items() if k != "outcomes"},
    }
    report = EvalReport(
        scores, extra["outcomes"], [t.problem_id for t in evals], details,
        {"optimization_seconds": t_opt, "total_seconds": time.perf_counter() - t0},
    )
    if out_dir is not None:
        out = Path(out_dir)
        report.write(out)
        save_params(dist, out / "params.json", seed=config.seed)
        ids, matrix = export_matrix(dist, composite)
        write_heatmap(out / "heatmap.csv", ids, matrix)
        run.write_jsonl(out / "run.jsonl")
    report.dist, report.composite = dist, composite
    return report


# ---------------------------------------------------------------------------
# scripted node-optimization task


@dataclass
class DemoFlipTask:
    """A node that solves half of its inputs until it sees one worked example.

    Inputs are ``"<problem>"`` strings with a known answer.  Without a
    positive demonstration whose input carries ``key`` the node answers
    correctly with probability ``base_rate``; with it, ``taught_rate``.  Wrong
    demos lower the rate to ``misled_rate``.  Draws hash ``(seed, problem)``
    and are therefore replayable.
    """

    seed: int = 0
    base_rate: float = 0.5
    taught_rate: float = 0.95
    misled_rate: float = 0.3
    key: str = "carry"
    key_fraction: float = 1.0

    def answer(self, problem: str) -> str:
        return f"ans({problem})"

    def sample(self, rng: np.random.Generator) -> NodeTask:
        i = int(rng.integers(10**9))
        family = self.key if rng.random() < self.key_fraction else "plain"
        problem = f"{family}-{i}"
        return NodeTask(problem, problem)

    def prompt_class(self, demos: Sequence[Demo]) -> str:
        if any(d.shown_output != self.answer(d.shown_input) for d in demos):
            return "misled"
        if any(self.key in d.shown_input for d in demos):
            return "taught"
        return "base"

    def rate(self, demos: Sequence[Demo]) -> float:
        return {"base": self.base_rate, "taught": self.taught_rate,
                "misled": self.misled_rate}[self.prompt_class(demos)]

    def solve(self, problem: str, demos: Sequence[Demo]) -> str:
        # one draw per problem shared by all prompt classes: a better prompt
        # never breaks an input a worse prompt solved
        if hashed_unit(self.seed, problem) < self.rate(demos):
            return self.answer(problem)
        return f"wrong({problem})"

    def executor(self):
        task = self

        class _Exec:
            calls = 0

            def run(self, node, context, x, problem_id=None):
                return task.solve(x, node.prompt.demos)

        return _Exec()

    def graph(self) -> CompositeGraph:
        agent = build_io_agent(agent_id="solver")
        return compose([agent], 0)

    def run_score(self, task: NodeTask, trace) -> float:
        return float(trace.final_output == self.answer(task.input))

    def replay_score(self, node_id: NodeId, entry: HistoryEntry, output: str) -> float:
        return float(output == self.answer(entry.input))

    def optimize(self, improver, config: NodeOptConfig, num_problems: int):
        return optimize_nodes(
            self.graph(), self.sample, self.executor(), improver, config,
            num_problems=num_problems, run_score=self.run_score, replay_score=self.replay_score,
        )
