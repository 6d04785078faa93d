"""Talking to an OpenAI-compatible endpoint.

This script never touches the network: an in-process transport plays the
server, first rate-limiting and then answering. Point ``base_url`` at a real
endpoint and export the API key to use a live model instead.
"""
# %%
import os
import tempfile

import httpx

from swarmgraph.backends import HttpExecutor, HttpExecutorConfig
from swarmgraph.graph import execute
from swarmgraph.harness import build_adversarial_swarm, generate_tasks

replies = iter([429, 200, 200])


def fake_server(request: httpx.Request) -> httpx.Response:
    status = next(replies)
    if status != 200:
        return httpx.Response(status)
    return httpx.Response(200, json={"choices": [{"message": {"content": "B"}}]})


os.environ.setdefault("OPENAI_API_KEY", "sk-local-demo")
config = HttpExecutorConfig(base_url="http://localhost:8000", cache_dir=tempfile.mkdtemp())
executor = HttpExecutor(config, client=httpx.Client(transport=httpx.MockTransport(fake_server)),
                        sleep=lambda s: print(f"backing off {s:.1f}s"))

# %%
swarm = build_adversarial_swarm(2, 0)
graph = swarm.with_edges([(a.output, swarm.output) for a in swarm.agents[:-1]])
task = generate_tasks(1, seed=0)[0]
trace = execute(graph, task.prompt, executor, problem_id=task.problem_id)
print("answer:", trace.final_output, "| LLM calls:", executor.calls)
# both agents send identical requests, so the second is a cache hit
print("cached responses:", len(os.listdir(config.cache_dir)))
