"""Plan scorers: symbol diversity, decomposed Likert judging, and oracle recall.

The Likert scorer asks a judge model for one plan-level score and one
feasibility score per step, all on a 1..7 scale, in a single call. Its
aggregate (half the plan score plus half the mean step score) orders the
frontier during informed search; final plan selection instead uses the
hierarchical sort implemented by `hierarchical_rank`.
"""

from __future__ import annotations

import logging
import re
import string
from dataclasses import dataclass
from typing import Any

from .errors import ProviderError, ScoringError
from .mining import SymbolCatalog
from .plans import PlanNode, plan_digest, union_symbols
from .prompts import load_template
from .providers import ChatProvider, ChatRequest

logger = logging.getLogger(__name__)

LIKERT_MIN = 1
LIKERT_MAX = 7


@dataclass(frozen=True)
class LikertJudgement:
    """Plan-level and per-step scores on the 7-point scale."""

    plan_level: int
    step_levels: tuple[int, ...]
    rationale_text: str | None = None

    def __post_init__(self):
        values = (self.plan_level, *self.step_levels)
        if any(not (LIKERT_MIN <= v <= LIKERT_MAX) for v in values):
            raise ValueError(f"Likert values out of range: {values}")

    def mean_step_level(self) -> float:
        return sum(self.step_levels) / len(self.step_levels)


@dataclass
class ScoreRecord:
    """One scorer's verdict on one plan."""

    scorer: str
    value: float
    detail: Any = None


def diversity_score(plan: PlanNode) -> int:
    """Number of distinct symbols across all steps."""
    return len(union_symbols(plan))


def aggregate_likert(judgement: LikertJudgement) -> float:
    """Collapse a judgement to the single value used for frontier ordering."""
    return 0.5 * (judgement.plan_level + judgement.mean_step_level())


def oracle_score(plan: PlanNode, ground_truth: set[str]) -> float:
    """Recall of the ground-truth symbols within the plan's symbol union."""
    if not ground_truth:
        raise ScoringError("oracle score undefined for empty ground truth")
    return len(union_symbols(plan) & ground_truth) / len(ground_truth)


def hierarchical_rank(nodes: list[PlanNode]) -> list[PlanNode]:
    """Final-selection order: plan-level score first, then mean step score.

    Remaining ties break by ascending creation order, making the order
    total and deterministic. Every node must carry a Likert judgement.
    """
    keyed = []
    for node in nodes:
        record = node.scores.get("likert")
        judgement = record.detail if record is not None else None
        if not isinstance(judgement, LikertJudgement):
            raise ScoringError(f"node {node.id} has no Likert judgement to rank by")
        keyed.append(((-judgement.plan_level, -judgement.mean_step_level(), node.created_order), node))
    keyed.sort(key=lambda pair: pair[0])
    return [node for _, node in keyed]


_SCORE_LINE = re.compile(r"^(plan|step\s+(\d+))\s*:\s*(-?\d+)\s*$", re.IGNORECASE)


def _parse_likert_block(response: str, n_steps: int) -> tuple[int, list[int]] | None:
    start = response.find("<scores>")
    if start < 0:
        return None
    end = response.find("</scores>", start)
    if end < 0:
        return None
    plan_level: int | None = None
    step_levels: dict[int, int] = {}
    for raw in response[start + len("<scores>") : end].splitlines():
        line = raw.strip()
        if not line:
            continue
        match = _SCORE_LINE.match(line)
        if not match:
            return None
        value = int(match.group(3))
        if match.group(2) is None:
            plan_level = value
        else:
            step_levels[int(match.group(2))] = value
    if plan_level is None or set(step_levels) != set(range(1, n_steps + 1)):
        return None
    return plan_level, [step_levels[i] for i in range(1, n_steps + 1)]


def _clamp(value: int, label: str) -> int:
    if value < LIKERT_MIN or value > LIKERT_MAX:
        clamped = min(max(value, LIKERT_MIN), LIKERT_MAX)
        logger.warning("clamping out-of-range Likert %s score %d to %d", label, value, clamped)
        return clamped
    return value


def _steps_with_definitions(plan: PlanNode, catalog: SymbolCatalog) -> str:
    if not plan.steps:
        return "(no steps)"
    lines = []
    for i, step in enumerate(plan.steps, start=1):
        lines.append(f"{i}. {step.intent}")
        if step.grounding_failed or not step.symbols.hits:
            lines.append("   (no symbols retrieved)")
            continue
        for hit in step.symbols.hits:
            symbol = catalog.get(hit.id)
            if symbol is None:
                raise ScoringError(f"step symbol not in catalog: {hit.id}")
            lines.append(f"   - {symbol.id}: {symbol.signature}")
            if symbol.doc:
                lines.append(f"     {symbol.doc.splitlines()[0]}")
    return "\n".join(lines)


def likert_judge(
    plan: PlanNode,
    catalog: SymbolCatalog,
    provider: ChatProvider,
    template: string.Template | None = None,
    retries: int = 2,
) -> LikertJudgement:
    """One judge call scoring the plan and each step on the 1..7 scale.

    Out-of-range values are clamped with a warning rather than rejected;
    a response that never parses raises ScoringError.
    """
    if not plan.steps:
        raise ScoringError("cannot judge a plan with zero steps")
    template = template or load_template("likert_judge")
    prompt = template.substitute(
        query=plan.query, steps=_steps_with_definitions(plan, catalog)
    )
    last = "no attempts"
    for attempt in range(retries + 1):
        try:
            response = provider.complete(
                ChatRequest(
                    messages=(("user", prompt),),
                    temperature=0.0,
                    seed=attempt,
                    tag="likert",
                )
            )
        except ProviderError as exc:
            raise ScoringError(f"likert judge call failed: {exc}") from exc
        parsed = _parse_likert_block(response, len(plan.steps))
        if parsed is not None:
            plan_level, step_levels = parsed
            return LikertJudgement(
                plan_level=_clamp(plan_level, "plan"),
                step_levels=tuple(_clamp(v, f"step {i+1}") for i, v in enumerate(step_levels)),
                rationale_text=response[: response.find("<scores>")].strip() or None,
            )
        last = f"unparseable response: {response[:80]!r}"
    raise ScoringError(f"likert judging failed after {retries + 1} attempts ({last})")


class LikertScorer:
    """Search-facing Likert scorer with a per-plan judgement cache.

    When judging fails outright the node is scored at the scale minimum
    (a synthesized all-1 judgement, flagged in its rationale) so the
    search keeps moving; the incident is logged.
    """

    name = "likert"

    def __init__(self, catalog: SymbolCatalog, provider: ChatProvider, retries: int = 2):
        self.catalog = catalog
        self.provider = provider
        self.retries = retries
        self._cache: dict[tuple[str, str], LikertJudgement] = {}

    def score(self, plan: PlanNode) -> ScoreRecord:
        key = (plan_digest(plan), self.catalog.content_hash)
        judgement = self._cache.get(key)
        if judgement is None:
            try:
                judgement = likert_judge(plan, self.catalog, self.provider, retries=self.retries)
            except ScoringError as exc:
                logger.warning("likert fallback to minimum for node %d: %s", plan.id, exc)
                judgement = LikertJudgement(
                    plan_level=LIKERT_MIN,
                    step_levels=(LIKERT_MIN,) * max(1, len(plan.steps)),
                    rationale_text="fallback: judge response unusable",
                )
            self._cache[key] = judgement
        return ScoreRecord(scorer=self.name, value=aggregate_likert(judgement), detail=judgement)


class DiversityScorer:
    name = "diversity"

    def score(self, plan: PlanNode) -> ScoreRecord:
        return ScoreRecord(scorer=self.name, value=float(diversity_score(plan)))


class OracleScorer:
    name = "oracle"

    def __init__(self, ground_truth: set[str]):
        if not ground_truth:
            raise ScoringError("oracle scorer needs a non-empty ground truth")
        self.ground_truth = set(ground_truth)

    def score(self, plan: PlanNode) -> ScoreRecord:
        return ScoreRecord(scorer=self.name, value=oracle_score(plan, self.ground_truth))
