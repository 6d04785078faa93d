"""Learning to cut adversarial agents out of a voting swarm.

Two truthful agents (85% accurate) and two adversaries (always wrong) vote
through a majority node. Connecting everyone hurts; REINFORCE on the edge
probabilities learns to keep only the truthful voters.
"""
# %%
import tempfile
from pathlib import Path

from swarmgraph.harness import ExperimentConfig, run_adversarial_experiment

config = ExperimentConfig(seed=0)
out = Path(tempfile.mkdtemp(prefix="adversarial-"))
report = run_adversarial_experiment(config, out)

# %%
for name, score in report.scores.items():
    print(f"{name:15s} {score:.3f}")
print("potential edges:", report.details["num_potential_edges"])

# %% [markdown]
# Learned probabilities of the edges into the decision node.

# %%
for edge, p in report.details["final_probs"].items():
    if edge.endswith("decision/decide"):
        print(f"{edge:40s} {p:.3f}")

print("artifacts in", out, sorted(p.name for p in out.iterdir()))
