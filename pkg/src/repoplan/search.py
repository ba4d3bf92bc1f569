"""Plan-space traversal: best-first, depth-first, and linear strategies.

The loop selects an unexpanded node, expands it through the successor
function, scores the new children eagerly, and repeats until the
expansion budget runs out or nothing expandable remains. Best-first
picks the highest-scoring unexpanded node (ties to the earliest
created); depth-first pops a stack seeded in child-insertion order;
linear follows the single deepest node, which with branching factor 1
and the monotonic successor reduces the tree to a chain.

A provider outage mid-search degrades the result instead of discarding
completed work. The trace is a list of JSON-serializable events
(node_created, node_expanded, node_scored, search_completed).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .errors import ConfigError, ProviderError
from .intents import Grounder, IntentIndex
from .mining import SymbolCatalog
from .plans import PlanNode, PlanTree
from .providers import ProviderSet
from .scoring import DiversityScorer, LikertScorer, OracleScorer, hierarchical_rank
from .successors import Expander, MONOTONIC, SUCCESSOR_MODES

logger = logging.getLogger(__name__)

STRATEGIES = ("best_first", "depth_first", "linear")
SCORERS = ("diversity", "likert", "oracle")


@dataclass
class SearchConfig:
    """Knobs for one search run; linear forces f=1 and monotonic mode."""

    strategy: str = "best_first"
    successor_mode: str = "unconstrained"
    branching_factor: int = 3
    budget: int = 80
    max_depth: int = 20
    scorer: str = "diversity"
    seed: int = 0
    retrieval_k: int = 5

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy: {self.strategy}")
        if self.successor_mode not in SUCCESSOR_MODES:
            raise ConfigError(f"unknown successor mode: {self.successor_mode}")
        if self.scorer not in SCORERS:
            raise ConfigError(f"unknown scorer: {self.scorer}")
        if self.branching_factor < 1:
            raise ConfigError("branching_factor must be >= 1")
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.retrieval_k < 1:
            raise ConfigError("retrieval_k must be >= 1")
        if self.strategy == "linear" and (
            self.branching_factor != 1 or self.successor_mode != MONOTONIC
        ):
            raise ConfigError(
                "linear search requires branching_factor=1 and the monotonic successor"
            )


@dataclass
class SearchStats:
    expansions: int = 0
    chat_calls: int = 0
    grounding_calls: int = 0
    wall_time: float = 0.0


@dataclass
class SearchResult:
    """Tree, ranking, and accounting for one finished search."""

    tree: PlanTree
    best: int | None
    ranked: list[int]
    stats: SearchStats
    degraded: bool = False
    events: list[dict] = field(default_factory=list)


def select_next(
    tree: PlanTree,
    strategy: str,
    scorer_name: str,
    max_depth: int,
    stack: list[int],
) -> int | None:
    """Pick the next node to expand, or None when the frontier is exhausted.

    The frontier is every unexpanded node below the depth cap. The
    depth-first stack is consumed destructively in LIFO order.
    """
    def expandable(nid: int) -> bool:
        return nid not in tree.expanded and tree.nodes[nid].depth < max_depth

    if strategy == "depth_first":
        while stack:
            nid = stack.pop()
            if expandable(nid):
                return nid
        return None

    candidates = [nid for nid in tree.nodes if expandable(nid)]
    if not candidates:
        return None
    if strategy == "linear":
        return max(candidates, key=lambda nid: (tree.nodes[nid].depth, -tree.nodes[nid].created_order))

    def score_of(nid: int) -> float:
        record = tree.nodes[nid].scores.get(scorer_name)
        return record.value if record is not None else float("-inf")

    return min(candidates, key=lambda nid: (-score_of(nid), tree.nodes[nid].created_order))


def _build_scorer(config: SearchConfig, catalog, providers, ground_truth):
    if config.scorer == "diversity":
        return DiversityScorer()
    if config.scorer == "oracle":
        if not ground_truth:
            raise ConfigError("oracle scorer needs ground-truth symbol ids")
        return OracleScorer(set(ground_truth))
    if providers.likert is None:
        raise ConfigError("likert scorer needs a likert provider")
    return LikertScorer(catalog, providers.likert)


def search(
    query: str,
    catalog: SymbolCatalog,
    index: IntentIndex,
    config: SearchConfig,
    providers: ProviderSet,
    ground_truth: set[str] | None = None,
) -> SearchResult:
    """Run one budgeted plan search and rank every explored plan.

    The final ranking uses hierarchical sorting for the Likert scorer
    and descending score (creation order breaking ties) otherwise; the
    root never participates. A run that produced no valid children comes
    back flagged degraded with `best` absent.
    """
    if not query.strip():
        raise ConfigError("query must be non-empty")
    if index.source_catalog_hash != catalog.content_hash:
        raise ConfigError(
            "index/catalog mismatch: the index was built from a different catalog "
            f"({index.source_catalog_hash[:12]} vs {catalog.content_hash[:12]}); re-index"
        )

    started = time.monotonic()
    scorer = _build_scorer(config, catalog, providers, ground_truth)
    grounder = Grounder(index, providers.embedder, k=config.retrieval_k)
    expander = Expander(
        provider=providers.successor,
        grounder=grounder,
        catalog=catalog,
        mode=config.successor_mode,
        branching_factor=config.branching_factor,
        base_seed=config.seed,
        max_depth=config.max_depth,
    )

    chat_calls_before = providers.successor.calls + (
        providers.likert.calls if providers.likert is not None else 0
    )
    tree = PlanTree()
    events: list[dict] = []
    root = tree.add_root(query)
    events.append({"event": "node_created", "node": root.id, "parent": None, "depth": 0, "intents": []})

    stack: list[int] = [root.id]
    stats = SearchStats()
    degraded = False

    while stats.expansions < config.budget:
        nid = select_next(tree, config.strategy, scorer_name=config.scorer,
                          max_depth=config.max_depth, stack=stack)
        if nid is None:
            break
        try:
            children = expander.expand(tree, nid)
        except ProviderError as exc:
            logger.warning("provider outage while expanding node %d: %s", nid, exc)
            stats.expansions += 1
            partial = list(tree.expansion_log[-1][1]) if tree.expansion_log else []
            for child_id in partial:
                child = tree.nodes[child_id]
                events.append({
                    "event": "node_created",
                    "node": child.id,
                    "parent": nid,
                    "depth": child.depth,
                    "intents": list(child.intent_sequence()),
                })
            events.append({"event": "node_expanded", "node": nid, "children": partial,
                           "error": str(exc)})
            degraded = True
            break
        stats.expansions += 1
        events.append({"event": "node_expanded", "node": nid, "children": [c.id for c in children]})
        for child in children:
            events.append({
                "event": "node_created",
                "node": child.id,
                "parent": nid,
                "depth": child.depth,
                "intents": list(child.intent_sequence()),
            })
            record = scorer.score(child)
            child.scores[record.scorer] = record
            events.append({
                "event": "node_scored",
                "node": child.id,
                "scorer": record.scorer,
                "value": record.value,
            })
            stack.append(child.id)

    ranked = _rank(tree, config.scorer)
    best = ranked[0] if ranked else None
    if best is None:
        degraded = True
        logger.warning("search finished with no valid plans; result is degraded")

    stats.chat_calls = (
        providers.successor.calls
        + (providers.likert.calls if providers.likert is not None else 0)
        - chat_calls_before
    )
    stats.grounding_calls = grounder.calls
    stats.wall_time = time.monotonic() - started
    events.append({
        "event": "search_completed",
        "expansions": stats.expansions,
        "chat_calls": stats.chat_calls,
        "grounding_calls": stats.grounding_calls,
        "best": best,
        "degraded": degraded,
    })
    return SearchResult(tree=tree, best=best, ranked=ranked, stats=stats,
                        degraded=degraded, events=events)


def _rank(tree: PlanTree, scorer_name: str) -> list[int]:
    nodes = [tree.nodes[nid] for nid in tree.non_root_ids()]
    scored = [n for n in nodes if scorer_name in n.scores]
    if scorer_name == "likert":
        return [n.id for n in hierarchical_rank(scored)]
    scored.sort(key=lambda n: (-n.scores[scorer_name].value, n.created_order))
    return [n.id for n in scored]
