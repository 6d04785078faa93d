"""The eight acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line (printed in the terminal summary and to
stdout) before asserting.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from oracles import (
    chain_agent, enumerate_masks, exact_expectation, fd_gradient, small_composites,
)
from swarmgraph import cli
from swarmgraph.backends import MockExecutor, MockPolicy
from swarmgraph.edges import (
    EdgeDistribution, export_matrix, grad_log_prob, log_prob, read_heatmap, sample, sigmoid,
    write_heatmap,
)
from swarmgraph.graph import NodeId, compose, prune
from swarmgraph.harness import (
    DemoFlipTask, ExperimentConfig, TaskInstance, build_adversarial_swarm,
    run_adversarial_experiment, task_correct,
)
from swarmgraph.nodeopt import NodeOptConfig, greedy_demo_improver, ucb1_select
from swarmgraph.reinforce import AdamState, adam_step, estimate_gradient


def report(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[number] = line
    print(line)


def test_1_sampler_exactness():
    t0 = time.perf_counter()
    n = 100_000
    worst_total, worst_z, checked = 0.0, 0.0, 0
    for k, (name, comp) in enumerate(small_composites().items()):
        d = len(comp.potential_edges)
        logits = np.random.default_rng([1, k]).uniform(-1.5, 1.5, d)
        exact = enumerate_masks(comp, logits)
        worst_total = max(worst_total, abs(sum(exact.values()) - 1.0))
        dist = EdgeDistribution(comp.potential_edges, logits)
        rng = np.random.default_rng([2, k])
        counts: dict[tuple, int] = {}
        for _ in range(n):
            key = tuple(int(b) for b in sample(dist, comp, rng).included)
            counts[key] = counts.get(key, 0) + 1
        assert set(counts) <= set(exact), f"{name}: sampler emitted an unreachable mask"
        for mask, p in exact.items():
            se = math.sqrt(p * (1 - p) / n)
            worst_z = max(worst_z, abs(counts.get(mask, 0) / n - p) / se)
            checked += 1
        # log_prob of every reachable mask agrees with the enumeration
        for mask, p in exact.items():
            assert log_prob(dist, np.array(mask, bool), comp) == pytest.approx(math.log(p), abs=1e-12)
    elapsed = time.perf_counter() - t0
    ok = worst_total <= 1e-9 and worst_z <= 3.0 and elapsed < 30
    report(1, ok, f"{checked} masks, |sum-1|={worst_total:.1e}, worst z={worst_z:.2f}, {elapsed:.1f}s")
    assert ok


def _gradient_composites():
    comps = list(small_composites().values())
    a, b, c, o = (chain_agent(x) for x in "abco")
    comps.append(compose([a, b, c, o], 3, [(a.output, o.output)]))  # d = 8
    return comps


def test_2_gradient_matches_finite_differences():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    comps = _gradient_composites()
    worst = 0.0
    for trial in range(100):
        comp = comps[trial % len(comps)]
        d = len(comp.potential_edges)
        assert d <= 8
        logits = rng.uniform(-4, 4, d)
        dist = EdgeDistribution(comp.potential_edges, logits)
        mask = sample(dist, comp, rng).included
        g = grad_log_prob(dist, mask, comp)
        fd = fd_gradient(lambda z: log_prob(dist.with_logits(z), mask, comp), logits, h=1e-6)
        for gi, fi in zip(g, fd):
            scale = max(abs(gi), abs(fi))
            err = abs(gi - fi) / scale if scale > 1e-9 else 0.0
            worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-5 and elapsed < 10
    report(2, ok, f"100 pairs, worst relative error {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_3_reinforce_unbiased():
    t0 = time.perf_counter()
    comp = build_adversarial_swarm(1, 1)
    d = len(comp.potential_edges)
    assert d <= 4
    # gold "A": a 1-1 vote tie resolves lexicographically to the correct answer
    task = TaskInstance("toy", "What is 1 + 1?", ("2", "3", "4", "5"), "2")
    executor = MockExecutor(MockPolicy(1.0, 0.0, seed=0), {"toy": "A"})
    cache: dict[tuple, float] = {}

    def utility(mask) -> float:
        key = tuple(int(b) for b in mask)
        if key not in cache:
            edges = [e for e, b in zip(comp.potential_edges, key) if b]
            cache[key] = float(task_correct(prune(comp.with_edges(edges)), task, executor))
        return cache[key]

    logits = np.array([0.4, -0.3, 0.8, 0.1])[:d]
    dist = EdgeDistribution(comp.potential_edges, logits)
    exact = fd_gradient(lambda z: exact_expectation(comp, z, utility), logits, h=1e-6)

    rng = np.random.default_rng(4)
    n = 10_000
    estimates = np.empty((n, d))
    for i in range(n):
        s = sample(dist, comp, rng)
        estimates[i] = estimate_gradient(dist, comp, [s], [utility(s.included)])
    mean = estimates.mean(axis=0)
    se = estimates.std(axis=0, ddof=1) / math.sqrt(n)
    z = np.where(se > 0, np.abs(mean - exact) / np.where(se > 0, se, 1), np.abs(mean - exact) * 1e12)
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(z <= 3.0)) and elapsed < 60
    report(3, ok, f"d={d}, z per coordinate {np.round(z, 2).tolist()}, {elapsed:.1f}s")
    assert ok


def test_4_adversarial_recovery():
    t0 = time.perf_counter()
    rows = []
    for seed in range(5):
        s = run_adversarial_experiment(ExperimentConfig(seed=seed)).scores
        # "baseline" averages the truthful agents run alone; "baseline_first" is
        # the first truthful agent alone. The criterion must hold for both.
        ok = all(
            s["optimized"] >= s[b] - 0.02 and s["full_graph"] <= s[b] - 0.10
            for b in ("baseline", "baseline_first")
        )
        rows.append((seed, ok, s))
    counts = {k: len(build_adversarial_swarm(k, k).potential_edges) for k in (1, 3, 5, 7)}
    elapsed = time.perf_counter() - t0
    passed = sum(ok for _, ok, _ in rows)
    ok = passed >= 4 and counts == {1: 4, 3: 36, 5: 100, 7: 196} and elapsed < 120
    detail = "; ".join(
        f"seed {seed}: opt {s['optimized']:.3f} base {s['baseline']:.3f}/{s['baseline_first']:.3f}"
        f" full {s['full_graph']:.3f}"
        for seed, _, s in rows
    )
    report(4, ok, f"{passed}/5 seeds, edge counts {counts}, {elapsed:.1f}s ({detail})")
    assert ok


def test_5_node_optimization():
    t0 = time.perf_counter()
    adopted = 0
    for seed in range(10):
        task = DemoFlipTask(seed=seed)
        run = task.optimize(greedy_demo_improver, NodeOptConfig(seed=seed), num_problems=8)
        node = NodeId("solver", "answer")
        if any(task.prompt_class(prompts[node].demos) == "taught" for _, prompts in run.updates[:2]):
            adopted += 1

    better = 0
    for seed in range(1000):
        rng = np.random.default_rng([5, seed])
        rates = (0.5, 0.8)  # the better arm sits at the higher index
        result = ucb1_select(lambda arm: float(rng.random() < rates[arm]), 2, 100)
        better += result.best_arm == 1
    elapsed = time.perf_counter() - t0
    ok = adopted >= 9 and better >= 950 and elapsed < 60
    report(5, ok, f"greedy adopted in {adopted}/10 seeds, UCB1 best arm in {better}/1000, {elapsed:.1f}s")
    assert ok


def test_6_adversarial_exp_is_reproducible(tmp_path):
    outs = []
    for run in ("first", "second"):
        out = tmp_path / run
        assert cli.main(["adversarial-exp", "--seed", "0", "--out", str(out)]) == 0
        outs.append(out)
    same = all(
        (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
        for name in ("report.json", "params.json")
    )
    report(6, same, "report.json and params.json byte-identical across two runs")
    assert same


def test_7_adam_trajectory():
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    grads = [np.array([1.0, -2.0, 0.5]), np.array([0.5, -1.0, -0.5]),
             np.array([-1.0, 3.0, 0.0]), np.array([2.0, 0.25, 1.0]), np.array([0.0, -0.5, 2.0])]
    # written out scalar by scalar with bias correction
    expected = []
    x = [0.0, 0.0, 0.0]
    m = [0.0] * 3
    v = [0.0] * 3
    for t, g in enumerate(grads, start=1):
        for i in range(3):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] ** 2
            x[i] += lr * (m[i] / (1 - b1**t)) / (math.sqrt(v[i] / (1 - b2**t)) + eps)
        expected.append(list(x))

    state, logits = AdamState.fresh(3), np.zeros(3)
    worst = 0.0
    for g, want in zip(grads, expected):
        state, logits = adam_step(state, logits, g, lr)
        worst = max(worst, float(np.max(np.abs(logits - want))))

    # closed form for a constant gradient: every step moves lr * g / (|g| + eps)
    state, z = AdamState.fresh(1), np.zeros(1)
    for t in range(1, 6):
        state, z = adam_step(state, z, np.array([1.0]), lr)
        worst = max(worst, abs(z[0] - t * lr / (1 + eps)))
    ok = worst <= 1e-12
    report(7, ok, f"5-step trajectories, max deviation {worst:.1e}")
    assert ok


def test_8_heatmap_export(tmp_path):
    a, b, o = chain_agent("a", 2), chain_agent("b"), chain_agent("o")
    comp = compose([a, b, o], 2, [(a.output, o.output)])
    logits = np.linspace(-2.0, 2.5, len(comp.potential_edges))
    dist = EdgeDistribution(comp.potential_edges, logits)
    ids, matrix = export_matrix(dist, comp)
    path = tmp_path / "heatmap.csv"
    write_heatmap(path, ids, matrix)
    header, read = read_heatmap(path)
    assert header == [str(n) for n in ids]

    index = {n: i for i, n in enumerate(ids)}
    potential = dict(zip(comp.potential_edges, logits))
    ok = True
    for u in ids:
        for v in ids:
            cell = read[index[u], index[v]]
            if (u, v) in potential:
                z = potential[(u, v)]
                ok &= cell == float(sigmoid(z)) and abs(cell - 1 / (1 + math.exp(-z))) <= 1e-15
            elif (u, v) in comp.required_edges:
                ok &= cell == 1.0
            else:
                ok &= cell == 0.0
    report(8, bool(ok), f"{len(ids)}x{len(ids)} matrix, potential=sigmoid, required=1, absent=0")
    assert ok
