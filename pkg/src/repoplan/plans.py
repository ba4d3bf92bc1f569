"""Plan steps, plan nodes, and the search tree that holds them.

A plan is an ordered list of steps, each pairing a natural-language
intent with the symbols retrieved for it. The root node carries the bare
user query and zero steps. Nodes are immutable once inserted; only the
search loop mutates the tree.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, is_dataclass, asdict
from typing import TYPE_CHECKING

from .errors import RenderError, SearchError
from .intents import GroundingResult, SymbolHit

if TYPE_CHECKING:
    from .mining import SymbolCatalog
    from .scoring import ScoreRecord


@dataclass(frozen=True)
class PlanStep:
    """One step: an intent plus the grounding retrieved for it."""

    intent: str
    symbols: GroundingResult
    grounding_failed: bool = False

    def __post_init__(self):
        if not self.intent:
            raise ValueError("step intent must be non-empty")
        if not self.symbols.hits and not self.grounding_failed:
            raise ValueError("empty grounding must be flagged as failed")


@dataclass
class PlanNode:
    """A plan plus its position in the search tree."""

    id: int
    query: str
    steps: tuple[PlanStep, ...]
    parent: int | None
    depth: int
    created_order: int
    children: list[int] = field(default_factory=list)
    scores: dict[str, "ScoreRecord"] = field(default_factory=dict)

    @property
    def is_root(self) -> bool:
        return self.parent is None

    def intent_sequence(self) -> tuple[str, ...]:
        return tuple(s.intent for s in self.steps)


def union_symbols(plan: PlanNode) -> set[str]:
    """Set union of symbol ids over all plan steps; empty for the root."""
    ids: set[str] = set()
    for step in plan.steps:
        ids.update(step.symbols.symbol_ids())
    return ids


def plan_digest(plan: PlanNode) -> str:
    payload = json.dumps(
        [[s.intent, list(s.symbols.symbol_ids())] for s in plan.steps], ensure_ascii=False
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class PlanTree:
    """Single-owner search tree; see `validate` for the invariants."""

    def __init__(self):
        self.nodes: dict[int, PlanNode] = {}
        self.root_id: int | None = None
        self.expansion_log: list[tuple[int, tuple[int, ...]]] = []
        self.expanded: set[int] = set()
        self._counter = 0

    def add_root(self, query: str) -> PlanNode:
        if self.root_id is not None:
            raise SearchError("tree already has a root")
        node = PlanNode(
            id=self._counter,
            query=query,
            steps=(),
            parent=None,
            depth=0,
            created_order=self._counter,
        )
        self._counter += 1
        self.nodes[node.id] = node
        self.root_id = node.id
        return node

    def add_child(self, parent_id: int, steps: tuple[PlanStep, ...]) -> PlanNode:
        parent = self.nodes[parent_id]
        node = PlanNode(
            id=self._counter,
            query=parent.query,
            steps=steps,
            parent=parent_id,
            depth=parent.depth + 1,
            created_order=self._counter,
        )
        self._counter += 1
        self.nodes[node.id] = node
        parent.children.append(node.id)
        return node

    def mark_expanded(self, node_id: int, child_ids: tuple[int, ...]) -> None:
        self.expansion_log.append((node_id, child_ids))
        self.expanded.add(node_id)

    def non_root_ids(self) -> list[int]:
        return [nid for nid in self.nodes if nid != self.root_id]

    def validate(self, branching_factor: int | None = None, max_depth: int | None = None) -> None:
        """Raise SearchError on any structural invariant violation."""
        if self.root_id is None:
            raise SearchError("tree has no root")
        root = self.nodes[self.root_id]
        if root.depth != 0 or root.parent is not None or root.steps:
            raise SearchError("malformed root node")
        reachable = set()
        queue = [self.root_id]
        while queue:
            nid = queue.pop()
            if nid in reachable:
                raise SearchError(f"node {nid} reached twice")
            reachable.add(nid)
            queue.extend(self.nodes[nid].children)
        if reachable != set(self.nodes):
            raise SearchError("unreachable nodes present")
        for node in self.nodes.values():
            if node.parent is not None:
                parent = self.nodes[node.parent]
                if node.id not in parent.children:
                    raise SearchError(f"broken parent link at node {node.id}")
                if node.depth != parent.depth + 1:
                    raise SearchError(f"bad depth at node {node.id}")
            if max_depth is not None and node.depth > max_depth:
                raise SearchError(f"node {node.id} exceeds max depth")
        if branching_factor is not None:
            bound = 1 + branching_factor * len(self.expansion_log)
            if len(self.nodes) > bound:
                raise SearchError(f"{len(self.nodes)} nodes exceeds bound {bound}")


def _score_detail_to_jsonable(detail):
    if detail is None or isinstance(detail, (str, int, float, bool)):
        return detail
    if is_dataclass(detail):
        return asdict(detail)
    if isinstance(detail, dict):
        return detail
    return str(detail)


def plan_to_dict(plan: PlanNode) -> dict:
    """Canonical machine form of one plan (stable key order)."""
    return {
        "query": plan.query,
        "steps": [
            {
                "intent": step.intent,
                "symbols": [
                    {"id": hit.id, "similarity": hit.similarity} for hit in step.symbols.hits
                ],
                "grounding_failed": step.grounding_failed,
            }
            for step in plan.steps
        ],
        "scores": {
            name: {
                "scorer": record.scorer,
                "value": record.value,
                "detail": _score_detail_to_jsonable(record.detail),
            }
            for name, record in plan.scores.items()
        },
        "lineage": {
            "id": plan.id,
            "parent": plan.parent,
            "depth": plan.depth,
            "created_order": plan.created_order,
        },
    }


def plan_from_dict(payload: dict) -> PlanNode:
    """Rebuild a PlanNode from its canonical JSON form (children omitted)."""
    from .scoring import ScoreRecord  # local import to avoid a cycle

    steps = tuple(
        PlanStep(
            intent=raw["intent"],
            symbols=GroundingResult(
                query_text=raw["intent"],
                hits=tuple(SymbolHit(id=h["id"], similarity=h["similarity"]) for h in raw["symbols"]),
            ),
            grounding_failed=raw.get("grounding_failed", False),
        )
        for raw in payload["steps"]
    )
    lineage = payload["lineage"]
    node = PlanNode(
        id=lineage["id"],
        query=payload["query"],
        steps=steps,
        parent=lineage["parent"],
        depth=lineage["depth"],
        created_order=lineage["created_order"],
    )
    for name, raw in payload.get("scores", {}).items():
        node.scores[name] = ScoreRecord(
            scorer=raw["scorer"], value=raw["value"], detail=raw.get("detail")
        )
    return node


def render_plan(plan: PlanNode, fmt: str, catalog: "SymbolCatalog") -> str:
    """Serialize a plan as canonical JSON or prompt-ready markdown.

    The markdown form is the enriched query handed to a downstream code
    generator: the request, then numbered steps with each step's top
    symbols and signatures.
    """
    for step in plan.steps:
        for hit in step.symbols.hits:
            if catalog.get(hit.id) is None:
                raise RenderError(f"symbol not in catalog: {hit.id}")

    if fmt == "json":
        return json.dumps(plan_to_dict(plan), ensure_ascii=False, indent=2) + "\n"
    if fmt != "markdown":
        raise ValueError(f"unknown render format: {fmt}")

    lines = ["# Enriched query", "", plan.query.strip(), "", "## Plan", ""]
    if not plan.steps:
        lines.append("(no steps)")
    for i, step in enumerate(plan.steps, start=1):
        lines.append(f"{i}. {step.intent}")
        if step.grounding_failed:
            lines.append("   (grounding failed; no symbols retrieved)")
            continue
        lines.append("   Symbols:")
        for hit in step.symbols.hits:
            symbol = catalog.get(hit.id)
            lines.append(f"   - `{hit.id}`: `{symbol.signature}` (similarity {hit.similarity:.3f})")
        if i < len(plan.steps):
            lines.append("")
    return "\n".join(lines).rstrip() + "\n"
