"""Edge optimization with the score-function (REINFORCE) gradient estimator.

Each iteration draws M graphs from the current edge distribution, scores each
pruned graph once with a utility estimator, forms the centred estimate
``mean((u_i - b) * grad log p(G_i))`` and takes one gradient *ascent* step on
the logits (Adam by default).
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .edges import EdgeDistribution, GraphSample, grad_log_prob, new_distribution, sample
from .errors import DomainError, EstimatorFailure, LengthMismatch, ShapeMismatch
from .graph import CompositeGraph, prune

UtilityEstimator = Callable[[CompositeGraph, np.random.Generator], float]


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, size: int, **kwargs) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, **kwargs)


def adam_step(state: AdamState, logits, grad, lr: float) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam ascent step; returns the new state and logits."""
    logits = np.asarray(logits, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if not (logits.shape == grad.shape == state.m.shape == state.v.shape):
        raise ShapeMismatch(
            f"logits {logits.shape}, grad {grad.shape}, moments {state.m.shape}/{state.v.shape}"
        )
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_logits = logits + lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return AdamState(m, v, t, state.beta1, state.beta2, state.eps), new_logits


def estimate_gradient(
    dist: EdgeDistribution,
    composite: CompositeGraph,
    samples: Sequence[GraphSample],
    utilities: Sequence[float],
    baseline: float = 0.0,
) -> np.ndarray:
    if len(samples) != len(utilities):
        raise LengthMismatch(f"{len(samples)} samples but {len(utilities)} utilities")
    if not samples:
        raise LengthMismatch("need at least one sample")
    total = np.zeros(dist.d)
    for s, u in zip(samples, utilities):
        total += (u - baseline) * grad_log_prob(dist, s, composite)
    return total / len(samples)


@dataclass
class EdgeOptConfig:
    iterations: int = 200
    samples_per_iter: int = 4
    learning_rate: float = 0.1
    baseline: float = 0.0
    init_prob: float = 0.5
    seed: int = 0
    realize_threshold: float = 0.5
    optimizer: str = "adam"  # or "sgd" for plain gradient ascent
    max_workers: int | None = None

    def __post_init__(self):
        if self.iterations < 0:
            raise DomainError("iterations must be >= 0")
        if self.samples_per_iter < 1:
            raise DomainError("samples_per_iter must be >= 1")
        if self.learning_rate <= 0:
            raise DomainError("learning_rate must be > 0")
        if not 0.0 < self.init_prob < 1.0:
            raise DomainError("init_prob must lie in (0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    mean_utility: float
    utilities: tuple[float, ...]
    # logits the iteration sampled from (i.e. before its update)
    logits: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "iter": self.iter,
            "mean_utility": self.mean_utility,
            "utilities": list(self.utilities),
            "logits": list(self.logits),
        }


@dataclass
class OptRunRecord:
    iterations: list[IterationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.iterations)

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.iterations:
                fh.write(json.dumps(rec.to_dict()) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "OptRunRecord":
        records = []
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    records.append(IterationRecord(
                        d["iter"], d["mean_utility"], tuple(d["utilities"]), tuple(d["logits"])
                    ))
        return cls(records)


def optimize_edges(
    composite: CompositeGraph,
    estimator: UtilityEstimator,
    config: EdgeOptConfig,
    initial: EdgeDistribution | None = None,
) -> tuple[EdgeDistribution, OptRunRecord]:
    """Run REINFORCE over the composite's potential edges.

    ``initial`` resumes from previously learned logits; otherwise every edge
    starts at ``config.init_prob``.  Sampled graphs are pruned before being
    handed to ``estimator``.  Randomness derives from ``config.seed`` only:
    graph draws use one stream, and each (iteration, sample) pair gets its own
    estimator stream so results do not depend on evaluation order.
    """
    dist = initial if initial is not None else new_distribution(composite, config.init_prob)
    record = OptRunRecord()
    adam = AdamState.fresh(dist.d)
    graph_rng = np.random.default_rng([config.seed, 0])

    def evaluate(it: int, i: int, s: GraphSample) -> float:
        rng = np.random.default_rng([config.seed, 1, it, i])
        realized = prune(composite.with_edges(s.edges(dist)))
        try:
            return float(estimator(realized, rng))
        except Exception as exc:
            raise EstimatorFailure(it, i, exc) from exc

    pool = ThreadPoolExecutor(config.max_workers) if (config.max_workers or 0) > 1 else None
    try:
        for it in range(config.iterations):
            samples = [sample(dist, composite, graph_rng) for _ in range(config.samples_per_iter)]
            if pool is None:
                utilities = [evaluate(it, i, s) for i, s in enumerate(samples)]
            else:
                utilities = list(pool.map(evaluate, [it] * len(samples), range(len(samples)), samples))
            grad = estimate_gradient(dist, composite, samples, utilities, config.baseline)
            record.iterations.append(IterationRecord(
                it, float(np.mean(utilities)), tuple(utilities), tuple(float(x) for x in dist.logits)
            ))
            if config.optimizer == "adam":
                adam, logits = adam_step(adam, dist.logits, grad, config.learning_rate)
            else:
                logits = dist.logits + config.learning_rate * grad
            dist = dist.with_logits(logits)
    finally:
        if pool is not None:
            pool.shutdown()
    return dist, record
