"""Improving a node's prompt from its own execution history.

The scripted solver answers half its inputs until it is shown one correct
worked example. The greedy improver replays recent inputs with the current
prompt and with a resampled set of demos, keeping whichever does better; the
UCB1 improver treats "add demo k" as bandit arms.
"""
# %%
import numpy as np

from swarmgraph.graph import NodeId
from swarmgraph.harness import DemoFlipTask
from swarmgraph.nodeopt import NodeOptConfig, greedy_demo_improver, ucb1_demo_improver, ucb1_select

node = NodeId("solver", "answer")
for name, improver in (("greedy", greedy_demo_improver), ("ucb1", ucb1_demo_improver)):
    task = DemoFlipTask(seed=0)
    run = task.optimize(improver, NodeOptConfig(seed=0), num_problems=24)
    classes = [task.prompt_class(prompts[node].demos) for _, prompts in run.updates]
    print(f"{name:6s} prompt after each update: {classes}")
    scores = np.array(run.scores)
    print(f"       accuracy first 8 problems {scores[:8].mean():.2f}, last 8 {scores[-8:].mean():.2f}")

# %% [markdown]
# The bandit on its own: two Bernoulli arms, 100 pulls.

# %%
rng = np.random.default_rng(1)
result = ucb1_select(lambda arm: float(rng.random() < (0.5, 0.8)[arm]), 2, 100)
print("plays", result.plays, "means", np.round(result.means, 2), "best arm", result.best_arm)
