"""Execution-free metrics for plans and generated code, plus pairwise judging.

The overlap score measures how much of the repository functionality used
by a reference solution also shows up in generated code: usages are
extracted from both texts' syntax trees, filtered to names that exist in
the catalog, and scored as recall of the reference set. Matching is on
unqualified names so aliasing and import renames do not break it.
"""

from __future__ import annotations

import json
import logging
import string
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, JudgingError, UndefinedMetricError
from .mining import SymbolCatalog, extract_usages, load_catalog
from .plans import PlanNode, union_symbols
from .prompts import load_template
from .providers import ChatProvider, ChatRequest

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OverlapReport:
    """Repo-filtered usage sets and the recall score between them."""

    reference_symbols: frozenset[str]
    generated_symbols: frozenset[str]
    matched: frozenset[str]
    score: float
    generated_warning: bool = False
    reference_warning: bool = False


def overlap_score(generated: str, reference: str, catalog: SymbolCatalog) -> OverlapReport:
    """Recall of the reference's repo symbols within the generated code.

    A reference that yields no repo symbols leaves the metric undefined
    and raises; a generated text that barely parses is still scored over
    whatever usages were recovered.
    """
    names = catalog.name_set()
    ref = extract_usages(reference)
    gen = extract_usages(generated)
    reference_symbols = frozenset(ref.names & names)
    generated_symbols = frozenset(gen.names & names)
    if not reference_symbols:
        raise UndefinedMetricError("reference solution uses no symbols from the catalog")
    matched = generated_symbols & reference_symbols
    return OverlapReport(
        reference_symbols=reference_symbols,
        generated_symbols=generated_symbols,
        matched=matched,
        score=100.0 * len(matched) / len(reference_symbols),
        generated_warning=gen.warning,
        reference_warning=ref.warning,
    )


def plan_recall(plan: PlanNode, reference_symbols: set[str]) -> float:
    """Percentage of reference symbol ids present in any plan step."""
    if not reference_symbols:
        raise UndefinedMetricError("plan recall undefined for an empty reference set")
    return 100.0 * len(union_symbols(plan) & reference_symbols) / len(reference_symbols)


@dataclass(frozen=True)
class BestOfN:
    best: float
    average: float


def best_of_n(samples: list[float]) -> BestOfN:
    """Max and mean over per-sample scores."""
    if not samples:
        raise ConfigError("best_of_n needs at least one sample")
    return BestOfN(best=max(samples), average=sum(samples) / len(samples))


def _parse_verdict(response: str) -> str | None:
    start = response.find("<verdict>")
    if start < 0:
        return None
    end = response.find("</verdict>", start)
    if end < 0:
        return None
    verdict = response[start + len("<verdict>") : end].strip().upper()
    return verdict if verdict in ("A", "B") else None


def pairwise_judge(
    code_a: str,
    code_b: str,
    reference: str,
    provider: ChatProvider,
    n_judgments: int = 6,
    template: string.Template | None = None,
) -> str:
    """Majority vote over independent judge calls; returns "a", "b", or "tie".

    Presentation order swaps on alternate calls to cancel position bias.
    More than half unparseable votes is a judging failure.
    """
    if n_judgments < 1:
        raise ConfigError("n_judgments must be >= 1")
    template = template or load_template("pairwise_judge")
    votes = {"a": 0, "b": 0}
    unparseable = 0
    for j in range(n_judgments):
        swapped = j % 2 == 1
        first, second = (code_b, code_a) if swapped else (code_a, code_b)
        prompt = template.substitute(reference=reference, code_first=first, code_second=second)
        response = provider.complete(
            ChatRequest(messages=(("user", prompt),), temperature=1.0, seed=j, tag="judge")
        )
        verdict = _parse_verdict(response)
        if verdict is None:
            unparseable += 1
            continue
        picked_first = verdict == "A"
        if picked_first != swapped:
            votes["a"] += 1
        else:
            votes["b"] += 1
    if unparseable * 2 > n_judgments:
        raise JudgingError(f"{unparseable}/{n_judgments} judge responses were unparseable")
    if votes["a"] > votes["b"]:
        return "a"
    if votes["b"] > votes["a"]:
        return "b"
    return "tie"


@dataclass
class EvalTask:
    """One benchmark task: a reference solution against one catalog."""

    task_id: str
    reference_path: Path
    catalog_path: Path
    query: str | None = None


@dataclass
class TaskResult:
    task_id: str
    sample_scores: list[float]
    aggregate: BestOfN | None
    error: str | None = None


def load_manifest(path: str | Path) -> list[EvalTask]:
    """Read tasks from a JSON manifest or discover them in a directory.

    Directory layout: one subdirectory per task containing query.txt,
    reference.py, and either catalog.jsonl or a repo/ tree to mine.
    """
    path = Path(path)
    if path.is_dir():
        return _discover_tasks(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"unreadable manifest {path}: {exc}") from exc
    tasks = []
    base = path.parent
    for raw in payload.get("tasks", []):
        try:
            tasks.append(
                EvalTask(
                    task_id=raw["id"],
                    reference_path=base / raw["reference"],
                    catalog_path=base / raw["catalog"],
                    query=raw.get("query"),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"manifest task missing field {exc}") from exc
    return tasks


def _discover_tasks(root: Path) -> list[EvalTask]:
    tasks = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        reference = sub / "reference.py"
        catalog = sub / "catalog.jsonl"
        if not reference.is_file() or not catalog.is_file():
            continue
        query_file = sub / "query.txt"
        tasks.append(
            EvalTask(
                task_id=sub.name,
                reference_path=reference,
                catalog_path=catalog,
                query=query_file.read_text(encoding="utf-8").strip() if query_file.is_file() else None,
            )
        )
    return tasks


def _samples_for(task_id: str, generated_dir: Path) -> list[Path]:
    sub = generated_dir / task_id
    if sub.is_dir():
        return sorted(p for p in sub.glob("*.py") if p.is_file())
    single = generated_dir / f"{task_id}.py"
    return [single] if single.is_file() else []


def evaluate_tasks(tasks: list[EvalTask], generated_dir: str | Path) -> list[TaskResult]:
    """Score every task's samples; per-task failures become result rows."""
    generated_dir = Path(generated_dir)
    results = []
    for task in tasks:
        try:
            catalog = load_catalog(task.catalog_path)
            reference = task.reference_path.read_text(encoding="utf-8")
            samples = _samples_for(task.task_id, generated_dir)
            if not samples:
                raise ConfigError(f"no generated samples for task {task.task_id}")
            scores = [
                overlap_score(p.read_text(encoding="utf-8"), reference, catalog).score
                for p in samples
            ]
            results.append(
                TaskResult(task_id=task.task_id, sample_scores=scores, aggregate=best_of_n(scores))
            )
        except Exception as exc:  # per-task isolation: one bad task never kills the run
            logger.warning("task %s failed: %s", task.task_id, exc)
            results.append(
                TaskResult(task_id=task.task_id, sample_scores=[], aggregate=None, error=str(exc))
            )
    return results


def results_to_dict(results: list[TaskResult]) -> dict:
    evaluable = [r for r in results if r.aggregate is not None]
    summary = {
        "tasks": len(results),
        "evaluable": len(evaluable),
        "mean_best": (
            sum(r.aggregate.best for r in evaluable) / len(evaluable) if evaluable else None
        ),
        "mean_average": (
            sum(r.aggregate.average for r in evaluable) / len(evaluable) if evaluable else None
        ),
    }
    rows = [
        {
            "task": r.task_id,
            "samples": len(r.sample_scores),
            "scores": r.sample_scores,
            "best": r.aggregate.best if r.aggregate else None,
            "average": r.aggregate.average if r.aggregate else None,
            "error": r.error,
        }
        for r in results
    ]
    return {"summary": summary, "rows": rows}


def format_report(results: list[TaskResult]) -> str:
    """Plain-text summary table, one row per task."""
    header = f"{'task':<24} {'n':>3} {'best':>7} {'average':>8}  note"
    lines = [header, "-" * len(header)]
    for r in results:
        if r.aggregate is None:
            lines.append(f"{r.task_id:<24} {0:>3} {'-':>7} {'-':>8}  {r.error}")
        else:
            lines.append(
                f"{r.task_id:<24} {len(r.sample_scores):>3} "
                f"{r.aggregate.best:>7.1f} {r.aggregate.average:>8.1f}"
            )
    payload = results_to_dict(results)["summary"]
    if payload["evaluable"]:
        lines.append("-" * len(header))
        lines.append(
            f"{'mean over tasks':<24} {payload['evaluable']:>3} "
            f"{payload['mean_best']:>7.1f} {payload['mean_average']:>8.1f}"
        )
    return "\n".join(lines)
