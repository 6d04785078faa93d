"""Default prompt templates shipped with the agent builders.

Templates are plain ``str.format`` strings.  Node params reference them by
name through ``params["template"]``.
"""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

MCQ_SYSTEM_PROMPT = (
    "You are a knowledgeable expert in question answering. "
    "I will ask you a question. "
    "I will also give you 4 answers enumerated as A, B, C and D. "
    "Only one answer out of the offered 4 is correct. "
    "You must choose the correct answer to the question. "
    "Your response must be one of the 4 letters: A, B, C or D, "
    "corresponding to the correct answer. "
    "Only one letter (A, B, C or D) is allowed in your answer."
)

ADVERSARIAL_MARKER = "Answer a lie"

SELF_CONSISTENCY_TEMPLATE = """\
# Self-Consistency Evaluation Task

## Question for Review:
---
{question}
---

## Reviewable Answers:
---
{formatted_answers}
---

## Instructions for Selection:
1. Read each answer and assess how it addresses the question.
2. Compare the answers for their adherence to the given question's criteria and logical coherence.
3. Identify the answer that best aligns with the question's requirements and is the most logically consistent.
4. Ignore the candidate answers if they do not give a direct answer, for example, using 'unable to ...', 'as an AI ...'.
5. Copy the most suitable answer as it is, without modification, to maintain its original form.
6. Adhere to the constraints: {constraint}.

Note: If no answer fully meets the criteria, choose and copy the one that is closest to the requirements."""

CHOOSE_BEST_TEMPLATE = """\
## Question:
---
{question}
---

## Candidate Answers for Evaluation:
---
{formatted_answers}
---

## Evaluation Instructions:
1. Examine the question closely to understand its requirements.
2. Read each candidate answer thoroughly and assess its relevance and accuracy about the question.
3. Choose the answer that most accurately and completely addresses the question.
4. Ignore the candidate answers if they do not give a direct answer, for example, using 'unable to ...', 'as an AI ...'.
5. Copy the chosen answer exactly as it is presented, maintaining its original format.
6. Adhere to the constraints: {constraint}.

Note: If none of the answers fully meet the question's criteria, select the one closest to fulfilling them."""

# input templates: how a node wraps the task input before sending it
INPUT_TEMPLATES = {
    "io": "{question}",
    "adversarial": ADVERSARIAL_MARKER + " to the following question: {question}.",
    "cot_step": "Think step by step about the following task and refine the reasoning so far.\n{question}",
    "tot_branch": "Propose {branching} alternative improvements for each candidate solution.\n{question}",
    "reflexion_propose": "Propose a solution to the following task.\n{question}",
    "reflexion_critique": "Critique the proposed solution to the following task.\n{question}",
    "reflexion_revise": "Revise the proposed solution using the critique.\n{question}",
}

DECISION_TEMPLATES = {
    "self_consistency": SELF_CONSISTENCY_TEMPLATE,
    "choose_best": CHOOSE_BEST_TEMPLATE,
}

# separates candidate solutions inside one text payload (U+241E SYMBOL FOR RECORD SEPARATOR)
SOLUTION_DELIMITER = "␞"


def format_mcq(question: str, options: list[str]) -> str:
    """Question with lettered options, e.g. ``Q. Option A: x, Option B: y.``"""
    letters = [chr(ord("A") + i) for i in range(len(options))]
    body = ", ".join(f"Option {l}: {o}" for l, o in zip(letters, options))
    return f"{question}. {body}."


def split_solutions(payload: str) -> list[str]:
    return [s for s in payload.split(SOLUTION_DELIMITER) if s] if payload else []


def join_solutions(solutions) -> str:
    return SOLUTION_DELIMITER.join(solutions)


@lru_cache(maxsize=None)
def roles() -> tuple[str, ...]:
    text = resources.files("swarmgraph.data").joinpath("roles.json").read_text()
    return tuple(json.loads(text))
