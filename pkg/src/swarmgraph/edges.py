"""Parameterized distribution over DAG completions of a composite graph.

Each potential edge e_i carries a logit; its inclusion probability is
``sigmoid(logit_i)``.  A graph is drawn by visiting the edges in their fixed
canonical order: an edge whose inclusion would close a cycle is *ineligible*
and skipped, any other edge is included with its probability.  The
log-likelihood of a draw therefore only has factors for eligible edges.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, InfeasibleSample
from .graph import CompositeGraph, Edge, NodeId, topological_sort

LOGIT_CAP = 15.0
PARAMS_VERSION = 1


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def logit(p: float) -> float:
    return float(np.log(p) - np.log1p(-p))


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


@dataclass(frozen=True)
class EdgeDistribution:
    """Immutable snapshot of edge logits over ``potential_edges``."""

    potential_edges: tuple[Edge, ...]
    logits: np.ndarray

    def __post_init__(self):
        logits = np.clip(np.array(self.logits, dtype=float).reshape(-1), -LOGIT_CAP, LOGIT_CAP)
        if logits.shape != (len(self.potential_edges),):
            raise ConfigError(
                f"{logits.size} logits for {len(self.potential_edges)} potential edges"
            )
        logits.setflags(write=False)
        object.__setattr__(self, "potential_edges", tuple(self.potential_edges))
        object.__setattr__(self, "logits", logits)

    @property
    def d(self) -> int:
        return len(self.potential_edges)

    @property
    def probs(self) -> np.ndarray:
        return sigmoid(self.logits)

    def with_logits(self, logits) -> "EdgeDistribution":
        return EdgeDistribution(self.potential_edges, logits)


@dataclass(frozen=True)
class GraphSample:
    included: np.ndarray
    eligible: np.ndarray
    log_prob: float

    def edges(self, dist: EdgeDistribution) -> frozenset[Edge]:
        return frozenset(e for e, inc in zip(dist.potential_edges, self.included) if inc)


def new_distribution(composite: CompositeGraph, init_prob: float) -> EdgeDistribution:
    if not 0.0 < init_prob < 1.0:
        raise DomainError(f"init_prob must lie in (0, 1), got {init_prob}")
    d = len(composite.potential_edges)
    return EdgeDistribution(composite.potential_edges, np.full(d, logit(init_prob)))


class _Replayer:
    """Incremental cycle checks over a composite's nodes using bitset closures.

    ``reach[i]`` is the bitset of nodes reachable from node i.  Adding (u, v)
    closes a cycle iff u is reachable from v.
    """

    def __init__(self, composite: CompositeGraph):
        ids = composite.node_ids
        index = {n: i for i, n in enumerate(ids)}
        self.n = len(ids)
        self.pairs = [(index[u], index[v]) for u, v in composite.potential_edges]
        reach = [0] * self.n
        order = topological_sort(ids, composite.required_edges)
        succ: dict[int, list[int]] = {i: [] for i in range(self.n)}
        for u, v in composite.required_edges:
            succ[index[u]].append(index[v])
        for node in reversed(order):
            i = index[node]
            for j in succ[i]:
                reach[i] |= reach[j] | (1 << j)
        self.base = reach

    def start(self) -> list[int]:
        return list(self.base)

    @staticmethod
    def eligible(reach: list[int], u: int, v: int) -> bool:
        return u != v and not (reach[v] >> u) & 1

    def add(self, reach: list[int], u: int, v: int) -> None:
        gained = reach[v] | (1 << v)
        ubit = 1 << u
        for w in range(self.n):
            if w == u or reach[w] & ubit:
                reach[w] |= gained


def _replayer(composite: CompositeGraph) -> _Replayer:
    plan = composite.__dict__.get("_edge_replayer")
    if plan is None:
        plan = _Replayer(composite)
        composite.__dict__["_edge_replayer"] = plan
    return plan


def _check(dist: EdgeDistribution, composite: CompositeGraph) -> None:
    edges = dist.potential_edges
    if edges is not composite.potential_edges and edges != composite.potential_edges:
        raise ConfigError("distribution and composite disagree on potential edges")


def _log_prob(dist: EdgeDistribution, included: np.ndarray, eligible: np.ndarray) -> float:
    inc = included & eligible
    exc = ~included & eligible
    return float(_log_sigmoid(dist.logits[inc]).sum() + _log_sigmoid(-dist.logits[exc]).sum())


def sample(dist: EdgeDistribution, composite: CompositeGraph, rng: np.random.Generator) -> GraphSample:
    """Draw one DAG completion by sequential inclusion in canonical edge order."""
    _check(dist, composite)
    plan = _replayer(composite)
    d = dist.d
    draws = rng.random(d)
    probs = dist.probs
    reach = plan.start()
    included = np.zeros(d, dtype=bool)
    eligible = np.zeros(d, dtype=bool)
    for i, (u, v) in enumerate(plan.pairs):
        if not plan.eligible(reach, u, v):
            continue
        eligible[i] = True
        if draws[i] < probs[i]:
            included[i] = True
            plan.add(reach, u, v)
    return GraphSample(included, eligible, _log_prob(dist, included, eligible))


def replay_eligibility(composite: CompositeGraph, mask: Sequence[bool]) -> np.ndarray:
    """Eligibility vector the sequential sampler sees when it emits ``mask``.

    Raises:
        InfeasibleSample: ``mask`` includes an edge that is ineligible at its turn.
    """
    plan = _replayer(composite)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (len(plan.pairs),):
        raise InfeasibleSample(f"mask of length {mask.size} for {len(plan.pairs)} potential edges")
    reach = plan.start()
    eligible = np.zeros(len(plan.pairs), dtype=bool)
    for i, (u, v) in enumerate(plan.pairs):
        if plan.eligible(reach, u, v):
            eligible[i] = True
            if mask[i]:
                plan.add(reach, u, v)
        elif mask[i]:
            raise InfeasibleSample(f"edge {composite.potential_edges[i]} would close a cycle")
    return eligible


def _mask_of(sample_or_mask) -> np.ndarray:
    if isinstance(sample_or_mask, GraphSample):
        return sample_or_mask.included
    return np.asarray(sample_or_mask, dtype=bool)


def log_prob(dist: EdgeDistribution, sample_mask, composite: CompositeGraph) -> float:
    """Exact log-likelihood of an edge mask, recomputing eligibility by replay."""
    _check(dist, composite)
    mask = _mask_of(sample_mask)
    return _log_prob(dist, mask, replay_eligibility(composite, mask))


def grad_log_prob(dist: EdgeDistribution, sample_or_mask, composite: CompositeGraph) -> np.ndarray:
    """Gradient of the log-likelihood with respect to the logits.

    Included eligible edges contribute ``1 - p``, excluded eligible edges
    ``-p`` and ineligible edges 0.
    """
    _check(dist, composite)
    mask = _mask_of(sample_or_mask)
    eligible = replay_eligibility(composite, mask)
    return np.where(eligible, mask.astype(float) - dist.probs, 0.0)


def realize(dist: EdgeDistribution, composite: CompositeGraph, threshold: float = 0.5) -> frozenset[Edge]:
    """Deterministic graph: keep each eligible edge whose probability is >= threshold."""
    _check(dist, composite)
    if not 0.0 <= threshold <= 1.0:
        raise DomainError(f"threshold must lie in [0, 1], got {threshold}")
    plan = _replayer(composite)
    reach = plan.start()
    chosen = []
    for i, ((u, v), p) in enumerate(zip(plan.pairs, dist.probs)):
        if p >= threshold and plan.eligible(reach, u, v):
            plan.add(reach, u, v)
            chosen.append(composite.potential_edges[i])
    return frozenset(chosen)


def full_graph_edges(composite: CompositeGraph) -> frozenset[Edge]:
    """Include every potential edge that does not close a cycle, in order."""
    ones = np.ones(len(composite.potential_edges), dtype=bool)
    eligible = _greedy_eligible(composite, ones)
    return frozenset(e for e, ok in zip(composite.potential_edges, eligible) if ok)


def _greedy_eligible(composite: CompositeGraph, want: np.ndarray) -> np.ndarray:
    plan = _replayer(composite)
    reach = plan.start()
    taken = np.zeros(len(plan.pairs), dtype=bool)
    for i, (u, v) in enumerate(plan.pairs):
        if want[i] and plan.eligible(reach, u, v):
            plan.add(reach, u, v)
            taken[i] = True
    return taken


def export_matrix(dist: EdgeDistribution, composite: CompositeGraph) -> tuple[list[NodeId], np.ndarray]:
    """Adjacency-like matrix over all nodes in canonical order.

    Cell (u, v) holds the probability of potential edge (u, v), 1.0 for a
    required edge and 0.0 otherwise.
    """
    _check(dist, composite)
    ids = list(composite.node_ids)
    index = {n: i for i, n in enumerate(ids)}
    matrix = np.zeros((len(ids), len(ids)))
    for (u, v), p in zip(dist.potential_edges, dist.probs):
        matrix[index[u], index[v]] = p
    for u, v in composite.required_edges:
        matrix[index[u], index[v]] = 1.0
    return ids, matrix


def expected_edge_count(dist: EdgeDistribution, composite: CompositeGraph,
                        rng: np.random.Generator, n_samples: int = 1000) -> float:
    """Mean number of included potential edges over ``n_samples`` draws."""
    return float(np.mean([sample(dist, composite, rng).included.sum() for _ in range(n_samples)]))


# ---------------------------------------------------------------------------
# files


def params_to_dict(dist: EdgeDistribution, seed: int | None = None) -> dict:
    return {
        "version": PARAMS_VERSION,
        "seed": seed,
        "edges": [
            {"src": str(u), "dst": str(v), "logit": float(l), "prob": float(p)}
            for (u, v), l, p in zip(dist.potential_edges, dist.logits, dist.probs)
        ],
    }


def params_from_dict(data: dict, composite: CompositeGraph | None = None) -> EdgeDistribution:
    try:
        if data.get("version") != PARAMS_VERSION:
            raise ConfigError(f"unsupported parameter file version {data.get('version')!r}")
        edges = tuple((NodeId.parse(e["src"]), NodeId.parse(e["dst"])) for e in data["edges"])
        logits = [float(e["logit"]) for e in data["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed parameter file: {exc!r}") from exc
    if composite is not None and edges != composite.potential_edges:
        raise ConfigError("parameter file edges do not match the composite's potential edges")
    return EdgeDistribution(edges, logits)


def save_params(dist: EdgeDistribution, path: str | Path, seed: int | None = None) -> None:
    Path(path).write_text(json.dumps(params_to_dict(dist, seed), indent=2) + "\n")


def load_params(path: str | Path, composite: CompositeGraph | None = None) -> EdgeDistribution:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"parameter file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parameter file {path} is not valid JSON: {exc}") from exc
    return params_from_dict(data, composite)


def heatmap_nodes(dist: EdgeDistribution) -> list[NodeId]:
    return sorted({n for e in dist.potential_edges for n in e})


def write_heatmap(path: str | Path, node_ids: Iterable[NodeId], matrix: np.ndarray) -> None:
    """CSV with a header row and a header column of node ids."""
    node_ids = [str(n) for n in node_ids]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + node_ids)
        for name, row in zip(node_ids, matrix):
            writer.writerow([name] + [repr(float(x)) for x in row])


def read_heatmap(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0][1:]
    return header, np.array([[float(x) for x in row[1:]] for row in rows[1:]])
