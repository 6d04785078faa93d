"""Turn a node, its context and the task input into a chat request.

Layout of ``user_content`` for ordinary LLM nodes, one section per block::

    ### Instruction        (only when the prompt has an instruction)
    ### Example input      (one pair per demo, in prompt order)
    ### Example output
    ### Context from <agent/local>   (one per context entry, in context order)
    ### Input              (task input wrapped by the node's input template)

Each header is followed by its body and a newline.  Inside bodies, any line
starting with ``#`` or ``\\`` is escaped with a leading ``\\``, so headers can
only come from the layout and the rendering is injective.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any

from ..graph import Node, NodeContext, NodeId
from ..templates import DECISION_TEMPLATES, INPUT_TEMPLATES

DEFAULT_SYSTEM_PROMPT = "You are a helpful assistant."


@dataclass(frozen=True)
class ExecutorRequest:
    system_prompt: str
    user_content: str
    temperature: float
    node_id: NodeId
    nonce: int
    problem_id: Any = None

    @property
    def messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system_prompt},
            {"role": "user", "content": self.user_content},
        ]


def escape_body(text: str) -> str:
    return "\n".join(
        "\\" + line if line.startswith(("#", "\\")) else line for line in text.split("\n")
    )


def nonce_for(seed: int, node_id: NodeId, problem_id: Any) -> int:
    digest = hashlib.blake2b(f"{seed}|{node_id}|{problem_id!r}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def system_prompt_for(node: Node) -> str:
    system = node.params.get("system", DEFAULT_SYSTEM_PROMPT)
    role = node.params.get("role")
    return f"You are a {role}. {system}" if role else system


def render_input(node: Node, x: str) -> str:
    template = INPUT_TEMPLATES.get(node.params.get("template", "io"), "{question}")
    fields = {k: v for k, v in node.params.items() if isinstance(v, (str, int, float))}
    fields["question"] = x
    return template.format_map(fields)


def render_user_content(node: Node, context: NodeContext, x: str) -> str:
    sections = []
    if node.prompt.instruction:
        sections.append(("Instruction", node.prompt.instruction))
    for demo in node.prompt.demos:
        sections.append(("Example input", demo.shown_input))
        sections.append(("Example output", demo.shown_output))
    for entry in context:
        sections.append((f"Context from {entry.producer}", entry.output))
    sections.append(("Input", render_input(node, x)))
    return "".join(f"### {header}\n{escape_body(body)}\n" for header, body in sections)


def render_decision_content(node: Node, context: NodeContext, x: str) -> str:
    template = DECISION_TEMPLATES[node.params["decision_template"]]
    answers = "\n".join(f"Answer {i + 1}: {a}" for i, a in enumerate(context.outputs))
    return template.format(
        question=x, formatted_answers=answers, constraint=node.params.get("constraint", "")
    )


def render_request(node: Node, context: NodeContext, x: str, *, temperature: float = 0.0,
                   seed: int = 0, problem_id: Any = None) -> ExecutorRequest:
    if "decision_template" in node.params:
        content = render_decision_content(node, context, x)
    else:
        content = render_user_content(node, context, x)
    return ExecutorRequest(
        system_prompt_for(node), content, temperature, node.id,
        nonce_for(seed, node.id, problem_id), problem_id,
    )
