"""Successor functions that mutate plans, and the expander that applies them.

Two modes: monotonic successors append exactly one new step and keep the
parent's steps untouched; unconstrained successors propose a full
replacement step sequence and may modify, delete, or reorder anything.
Proposals come back from the chat provider as a <steps> block; unchanged
intents reuse the parent's grounding verbatim, only new or modified
intents hit the grounding function.
"""

from __future__ import annotations

import logging
import string
from dataclasses import dataclass

from .errors import GroundingError, ProviderError, SearchError
from .intents import Grounder, GroundingResult
from .mining import SymbolCatalog
from .plans import PlanNode, PlanStep, PlanTree
from .prompts import load_template
from .providers import ChatProvider, ChatRequest

logger = logging.getLogger(__name__)

MONOTONIC = "monotonic"
UNCONSTRAINED = "unconstrained"
SUCCESSOR_MODES = (MONOTONIC, UNCONSTRAINED)

# Seed distance between retries of one proposal call; keeps retry seeds
# clear of the consecutive sibling seeds.
RETRY_SEED_STRIDE = 7_919


@dataclass(frozen=True)
class SuccessorProposal:
    """Pre-grounding output of one successor call."""

    mode: str
    intents: tuple[str, ...]
    raw_response: str
    parse_ok: bool

    def __post_init__(self):
        if self.parse_ok:
            if self.mode == MONOTONIC and len(self.intents) != 1:
                raise ValueError("monotonic proposals carry exactly one intent")
            if not self.intents:
                raise ValueError("parseable proposals carry at least one intent")


def parse_steps_block(response: str) -> list[str]:
    """Extract step lines from the first <steps>…</steps> block.

    Tolerates surrounding prose and numbered or bulleted lines; returns
    an empty list when no well-formed block is present.
    """
    start = response.find("<steps>")
    if start < 0:
        return []
    end = response.find("</steps>", start)
    if end < 0:
        return []
    steps = []
    for raw in response[start + len("<steps>") : end].splitlines():
        text = raw.strip()
        if not text:
            continue
        text = text.lstrip("-*").strip()
        head, _, rest = text.partition(".")
        if head.isdigit() and rest.strip():
            text = rest.strip()
        if text:
            steps.append(text)
    return steps


def render_steps_for_prompt(plan: PlanNode, catalog: SymbolCatalog) -> str:
    """Numbered current steps with their top symbols' signatures."""
    if not plan.steps:
        return "(no steps yet)"
    lines = []
    for i, step in enumerate(plan.steps, start=1):
        lines.append(f"{i}. {step.intent}")
        if step.grounding_failed or not step.symbols.hits:
            lines.append("   (no symbols retrieved)")
            continue
        for hit in step.symbols.hits:
            symbol = catalog.get(hit.id)
            signature = symbol.signature if symbol is not None else "(unknown symbol)"
            lines.append(f"   - {hit.id}: {signature}")
    return "\n".join(lines)


def _propose(
    plan: PlanNode,
    provider: ChatProvider,
    mode: str,
    template: string.Template,
    catalog: SymbolCatalog,
    temperature: float,
    seed: int | None,
    retries: int,
) -> SuccessorProposal:
    prompt = template.substitute(
        query=plan.query, steps=render_steps_for_prompt(plan, catalog)
    )
    response = ""
    for attempt in range(retries + 1):
        call_seed = None if seed is None else seed + RETRY_SEED_STRIDE * attempt
        response = provider.complete(
            ChatRequest(
                messages=(("user", prompt),),
                temperature=temperature,
                seed=call_seed,
                tag="successor",
            )
        )
        lines = parse_steps_block(response)
        if lines:
            intents = tuple(lines[:1]) if mode == MONOTONIC else tuple(lines)
            return SuccessorProposal(mode=mode, intents=intents, raw_response=response, parse_ok=True)
    return SuccessorProposal(mode=mode, intents=(), raw_response=response, parse_ok=False)


def propose_monotonic(
    plan: PlanNode,
    provider: ChatProvider,
    catalog: SymbolCatalog,
    template: string.Template | None = None,
    temperature: float = 1.0,
    seed: int | None = None,
    retries: int = 2,
) -> SuccessorProposal:
    """Propose one intent to append; the parent's steps stay untouched."""
    template = template or load_template("successor_monotonic")
    return _propose(plan, provider, MONOTONIC, template, catalog, temperature, seed, retries)


def propose_unconstrained(
    plan: PlanNode,
    provider: ChatProvider,
    catalog: SymbolCatalog,
    template: string.Template | None = None,
    temperature: float = 1.0,
    seed: int | None = None,
    retries: int = 2,
) -> SuccessorProposal:
    """Propose a complete replacement step sequence."""
    template = template or load_template("successor_unconstrained")
    return _propose(plan, provider, UNCONSTRAINED, template, catalog, temperature, seed, retries)


class Expander:
    """Draws proposals, re-grounds changed intents, inserts children.

    Grounding reuse: a proposed intent whose text exactly matches one of
    the parent's step intents inherits that step's GroundingResult with
    no new query. Siblings with identical intent sequences collapse to
    one child.
    """

    def __init__(
        self,
        provider: ChatProvider,
        grounder: Grounder,
        catalog: SymbolCatalog,
        mode: str = UNCONSTRAINED,
        branching_factor: int = 3,
        temperature: float = 1.0,
        base_seed: int = 0,
        max_depth: int = 20,
        retries: int = 2,
    ):
        if mode not in SUCCESSOR_MODES:
            raise ValueError(f"unknown successor mode: {mode}")
        if branching_factor < 1:
            raise ValueError("branching factor must be >= 1")
        self.provider = provider
        self.grounder = grounder
        self.catalog = catalog
        self.mode = mode
        self.branching_factor = branching_factor
        self.temperature = temperature
        self.base_seed = base_seed
        self.max_depth = max_depth
        self.retries = retries

    def _call_seed(self, node_id: int, sibling: int) -> int:
        # sibling index recoverable as seed % branching_factor
        return (self.base_seed * 1_000_003 + node_id) * self.branching_factor + sibling

    def _ground_step(self, intent: str, reuse: dict[str, PlanStep]) -> PlanStep:
        parent_step = reuse.get(intent)
        if parent_step is not None:
            return parent_step
        try:
            result = self.grounder.ground(intent)
            return PlanStep(intent=intent, symbols=result)
        except GroundingError as exc:
            logger.warning("grounding failed for intent %r: %s", intent[:60], exc)
            return PlanStep(
                intent=intent,
                symbols=GroundingResult(query_text=intent),
                grounding_failed=True,
            )

    def expand(self, tree: PlanTree, node_id: int) -> list[PlanNode]:
        """Expand one node; returns the (possibly empty) list of new children."""
        node = tree.nodes[node_id]
        if node.depth >= self.max_depth:
            raise SearchError(f"node {node_id} is at the depth cap and cannot expand")

        propose = propose_monotonic if self.mode == MONOTONIC else propose_unconstrained
        reuse = {step.intent: step for step in node.steps}
        children: list[PlanNode] = []
        seen: set[tuple[str, ...]] = set()
        try:
            for sibling in range(self.branching_factor):
                proposal = propose(
                    node,
                    self.provider,
                    self.catalog,
                    temperature=self.temperature,
                    seed=self._call_seed(node_id, sibling),
                    retries=self.retries,
                )
                if not proposal.parse_ok:
                    logger.warning("discarding unparseable proposal for node %d", node_id)
                    continue
                if self.mode == MONOTONIC:
                    intents = node.intent_sequence() + proposal.intents
                else:
                    intents = proposal.intents
                if intents in seen:
                    continue
                seen.add(intents)
                steps = tuple(self._ground_step(intent, reuse) for intent in intents)
                children.append(tree.add_child(node_id, steps))
        finally:
            # a provider outage mid-loop must still log the partial expansion
            tree.mark_expanded(node_id, tuple(c.id for c in children))
        return children
