"""Command-line interface.

Exit status: 0 on success, 1 on configuration errors (missing or malformed
files, bad values), 2 on runtime failures.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import socket
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .backends import MockExecutor, MockPolicy
from .edges import (
    export_matrix, heatmap_nodes, load_params, save_params, write_heatmap,
)
from .errors import ConfigError, SwarmGraphError
from .graph import execute, load_graph
from .harness import (
    DemoFlipTask, ExperimentConfig, build_adversarial_swarm, evaluate_swarm, generate_tasks,
    load_config, make_executor, run_adversarial_experiment, single_task_estimator,
)
from .nodeopt import greedy_demo_improver, save_prompts, ucb1_demo_improver
from .reinforce import optimize_edges

IMPROVERS = {"greedy": greedy_demo_improver, "ucb1": ucb1_demo_improver}


@contextlib.contextmanager
def no_network():
    """Refuse outbound connections (mock mode must stay offline)."""
    def refuse(*args, **kwargs):
        raise ConnectionRefusedError("network access is disabled in mock mode")

    saved = socket.socket.connect, socket.create_connection
    socket.socket.connect, socket.create_connection = refuse, refuse
    try:
        yield
    finally:
        socket.socket.connect, socket.create_connection = saved


def _config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.executor is not None:
        config = replace(config, executor=args.executor)
    return config


def _swarm(config: ExperimentConfig):
    return build_adversarial_swarm(
        config.truthful, config.adversarial, decision=config.decision,
        tie_break=config.tie_break, mandate_decision_edges=config.mandate_decision_edges,
    )


def _out(args, required: bool = True) -> Path | None:
    if args.out is None:
        if required:
            raise ConfigError("--out is required")
        return None
    return Path(args.out)


def cmd_run(args) -> None:
    if not args.graph:
        raise ConfigError("run needs --graph")
    config = _config(args)
    graph = load_graph(args.graph)
    if config.executor == "mock":
        if not args.gold:
            raise ConfigError("the mock executor needs --gold to know the right answer")
        policy = MockPolicy(config.tasks.truthful_accuracy, config.tasks.adversarial_accuracy,
                            seed=config.seed)
        executor = MockExecutor(policy, {args.problem_id: args.gold})
    else:
        executor = make_executor(config, [])
    trace = execute(graph, args.question, executor, problem_id=args.problem_id)
    print(trace.final_output)
    out = _out(args, required=False)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.json").write_text(json.dumps({
            "final_output": trace.final_output,
            "records": [
                {"node": str(r.node_id), "context": [[str(c.producer), c.output] for c in r.context],
                 "output": r.output}
                for r in trace.records
            ],
        }, indent=2) + "\n")


def cmd_optimize_edges(args) -> None:
    config = _config(args)
    out = _out(args)
    composite = _swarm(config)
    initial = load_params(args.resume, composite) if args.resume else None
    tp = config.tasks
    train = generate_tasks(tp.train_size, config.seed, num_options=tp.num_options, split="train")
    executor = make_executor(config, train)
    edge_cfg = replace(config.edge_opt, seed=config.seed)
    dist, run = optimize_edges(composite, single_task_estimator(train, executor), edge_cfg, initial)
    out.mkdir(parents=True, exist_ok=True)
    save_params(dist, out / "params.json", seed=config.seed)
    run.write_jsonl(out / "run.jsonl")
    ids, matrix = export_matrix(dist, composite)
    write_heatmap(out / "heatmap.csv", ids, matrix)
    print(f"final mean utility {run.iterations[-1].mean_utility if len(run) else float('nan'):.3f}")


def cmd_optimize_nodes(args) -> None:
    config = _config(args)
    if config.executor != "mock":
        raise ConfigError("optimize-nodes only ships the scripted mock task")
    out = _out(args)
    task = DemoFlipTask(seed=config.seed)
    node_cfg = replace(config.node_opt, seed=config.seed)
    run = task.optimize(IMPROVERS[args.improver], node_cfg, args.problems)
    out.mkdir(parents=True, exist_ok=True)
    save_prompts(run.graph, out / "prompts.json")
    run.history.save(out / "history.json")
    print(f"mean run score {np.mean(run.scores) if run.scores else float('nan'):.3f}")


def cmd_eval(args) -> None:
    config = _config(args)
    out = _out(args)
    composite = _swarm(config)
    dist = load_params(args.params, composite) if args.params else None
    tp = config.tasks
    evals = generate_tasks(tp.eval_size, config.seed, num_options=tp.num_options, split="eval")
    executor = make_executor(config, evals)
    scores, extra = evaluate_swarm(composite, config, executor, evals, dist)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps({"scores": scores, **extra}, indent=2, sort_keys=True) + "\n")
    for name, value in scores.items():
        print(f"{name}: {value:.4f}")


def cmd_export_heatmap(args) -> None:
    if not args.params:
        raise ConfigError("export-heatmap needs --params")
    out = _out(args)
    if args.config or args.graph:
        composite = load_graph(args.graph) if args.graph else _swarm(_config(args))
        dist = load_params(args.params, composite)
        ids, matrix = export_matrix(dist, composite)
    else:
        dist = load_params(args.params)
        ids = heatmap_nodes(dist)
        index = {n: i for i, n in enumerate(ids)}
        matrix = np.zeros((len(ids), len(ids)))
        for (u, v), p in zip(dist.potential_edges, dist.probs):
            matrix[index[u], index[v]] = p
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_heatmap(out, ids, matrix)


def cmd_adversarial_exp(args) -> None:
    config = _config(args)
    out = _out(args)
    report = run_adversarial_experiment(config, out)
    for name, value in report.scores.items():
        print(f"{name}: {value:.4f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmgraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--executor", choices=["mock", "http"], help="override the config executor")
        p.add_argument("--out", help="output directory (file for export-heatmap)")
        p.set_defaults(func=func)
        return p

    p = add("run", cmd_run, "execute a graph file on one question")
    p.add_argument("--graph", help="graph definition file")
    p.add_argument("--question", required=True)
    p.add_argument("--gold", help="correct answer letter (mock executor)")
    p.add_argument("--problem-id", default="cli")

    p = add("optimize-edges", cmd_optimize_edges, "learn edge probabilities with REINFORCE")
    p.add_argument("--resume", help="parameter file to continue from")

    p = add("optimize-nodes", cmd_optimize_nodes, "optimize node prompts on the scripted task")
    p.add_argument("--improver", choices=sorted(IMPROVERS), default="greedy")
    p.add_argument("--problems", type=int, default=40)

    p = add("eval", cmd_eval, "evaluate baseline/full/random/optimized graphs")
    p.add_argument("--params", help="learned parameter file")

    p = add("export-heatmap", cmd_export_heatmap, "write edge probabilities as a CSV matrix")
    p.add_argument("--params", help="learned parameter file")
    p.add_argument("--graph", help="graph file supplying required edges")

    add("adversarial-exp", cmd_adversarial_exp, "truthful vs adversarial swarm experiment")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    offline = args.executor != "http"
    try:
        if offline:
            with no_network():
                args.func(args)
        else:
            args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SwarmGraphError, OSError, RuntimeError, ValueError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
