"""Prompt templates shipped as plain-text files with $-placeholders."""

from functools import lru_cache
from importlib import resources
from string import Template

TEMPLATE_NAMES = (
    "intent_generation",
    "successor_monotonic",
    "successor_unconstrained",
    "likert_judge",
    "pairwise_judge",
    "codegen_plan",
    "codegen_full_repo",
    "codegen_instruction_only",
)


@lru_cache(maxsize=None)
def load_template(name: str) -> Template:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown template: {name}")
    text = resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")
    return Template(text)
