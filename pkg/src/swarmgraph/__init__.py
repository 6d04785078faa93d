"""Agent swarms as DAGs with learnable connectivity and self-improving prompts.

Agents are DAGs of operation nodes; swarms compose agents with learnable
cross-agent edges.  ``reinforce`` optimizes edge probabilities with a
score-function gradient and ``nodeopt`` optimizes node prompts from execution
history.
"""
from .agents import (
    AgentTemplate, DecisionStrategy, build_adversarial_agent, build_cot_chain, build_decision_agent,
    build_decision_node, build_io_agent, build_reflexion_agent, build_tot_chain, majority_vote,
)
from .edges import (
    EdgeDistribution, GraphSample, export_matrix, grad_log_prob, log_prob, new_distribution,
    realize, sample,
)
from .graph import (
    AgentGraph, CompositeGraph, Demo, ExecutionTrace, Node, NodeContext, NodeId, Prompt,
    RoutineKind, compose, execute, prune, topological_sort, validate_dag,
)
from .nodeopt import (
    HistoryStore, NodeOptConfig, greedy_demo_improver, optimize_nodes, record, ucb1_demo_improver,
)
from .reinforce import AdamState, EdgeOptConfig, adam_step, estimate_gradient, optimize_edges

__version__ = "0.1.0"
