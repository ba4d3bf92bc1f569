"""Synthetic-intent index: the bridge from natural-language intents to symbols.

Each catalog symbol gets a handful of generated "I want to…" sentences
describing potential uses. Those sentences are embedded, and grounding a
query intent is a cosine scan over all of them: matches are deduplicated
to at most one hit per symbol (keeping that symbol's best similarity) and
the top-k symbols come back. Exhaustive scan is deliberate; catalogs stay
small enough that approximate neighbors would buy nothing.
"""

from __future__ import annotations

import json
import logging
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GenerationError, GroundingError, IndexBuildError, ProviderError
from .mining import Symbol, SymbolCatalog
from .prompts import load_template
from .providers import ChatProvider, ChatRequest, EmbeddingProvider, EmbeddingRequest

logger = logging.getLogger(__name__)

EMBED_BATCH = 128


@dataclass(frozen=True)
class SyntheticIntent:
    """One generated use-sentence for a symbol, with its embedding."""

    symbol_id: str
    text: str
    embedding: tuple[float, ...]
    model_tag: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("synthetic intent text must be non-empty")


@dataclass(frozen=True)
class SymbolHit:
    id: str
    similarity: float


@dataclass(frozen=True)
class GroundingResult:
    """Ranked, per-symbol-deduplicated retrieval hits for one intent."""

    query_text: str
    hits: tuple[SymbolHit, ...] = ()

    def symbol_ids(self) -> tuple[str, ...]:
        return tuple(h.id for h in self.hits)


@dataclass
class IntentIndex:
    """All synthetic intents for one catalog, ready for cosine scanning."""

    entries: tuple[SyntheticIntent, ...]
    dimension: int
    embedder_tag: str
    generator_tag: str
    source_catalog_hash: str
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for entry in self.entries:
            if len(entry.embedding) != self.dimension:
                raise ValueError(
                    f"entry for {entry.symbol_id} has dimension "
                    f"{len(entry.embedding)}, index declares {self.dimension}"
                )

    def matrix(self) -> np.ndarray:
        """Row-normalized float64 embedding matrix, built lazily."""
        if self._matrix is None:
            mat = np.asarray([e.embedding for e in self.entries], dtype=np.float64)
            norms = np.linalg.norm(mat, axis=1, keepdims=True)
            norms[norms == 0] = 1.0
            self._matrix = mat / norms
        return self._matrix

    def distinct_symbols(self) -> frozenset[str]:
        return frozenset(e.symbol_id for e in self.entries)


def _parse_intent_lines(response: str) -> list[str]:
    """Pull intent sentences out of an <intents>…</intents> block."""
    block = _extract_block(response, "intents")
    if block is None:
        return []
    lines = []
    for raw in block.splitlines():
        text = raw.strip()
        if not text:
            continue
        text = text.lstrip("-*").strip()
        head, _, rest = text.partition(".")
        if head.isdigit() and rest.strip():
            text = rest.strip()
        if text:
            lines.append(text)
    return lines


def _extract_block(response: str, name: str) -> str | None:
    open_tag, close_tag = f"<{name}>", f"</{name}>"
    start = response.find(open_tag)
    if start < 0:
        return None
    end = response.find(close_tag, start)
    if end < 0:
        return None
    return response[start + len(open_tag) : end].strip()


def _symbol_prompt_fields(symbol: Symbol) -> dict[str, str]:
    return {
        "symbol_id": symbol.id,
        "kind": symbol.kind,
        "signature": symbol.signature,
        "doc": symbol.doc or "(no documentation)",
        "snippet": symbol.snippet or "(no source available)",
    }


def generate_intents(
    symbol: Symbol,
    n: int,
    generator: ChatProvider,
    template: string.Template | None = None,
    retries: int = 2,
) -> list[str]:
    """Generate up to `n` distinct use-intent sentences for one symbol.

    Duplicates from the provider are collapsed, so fewer than `n`
    sentences is a valid outcome; zero is not.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not symbol.signature:
        raise GenerationError(f"symbol {symbol.id} has an empty signature")
    template = template or load_template("intent_generation")
    prompt = template.substitute(n=str(n), **_symbol_prompt_fields(symbol))
    last_error = "no attempts"
    for attempt in range(retries + 1):
        try:
            response = generator.complete(
                ChatRequest(
                    messages=(("user", prompt),),
                    temperature=0.7,
                    seed=attempt,
                    tag="intent_gen",
                )
            )
        except ProviderError as exc:
            raise GenerationError(f"intent generation failed for {symbol.id}: {exc}") from exc
        texts = []
        for line in _parse_intent_lines(response):
            if line not in texts:
                texts.append(line)
        if texts:
            return texts[:n]
        last_error = f"unparseable response: {response[:80]!r}"
    raise GenerationError(f"intent generation failed for {symbol.id}: {last_error}")


def _embed_texts(embedder: EmbeddingProvider, texts: list[str]) -> list[np.ndarray]:
    vectors: list[np.ndarray] = []
    for start in range(0, len(texts), EMBED_BATCH):
        batch = tuple(texts[start : start + EMBED_BATCH])
        vectors.extend(embedder.embed(EmbeddingRequest(texts=batch, model_tag=embedder.model_tag)))
    return vectors


def build_index(
    catalog: SymbolCatalog,
    generator: ChatProvider,
    embedder: EmbeddingProvider,
    n_per_symbol: int = 5,
    min_success_rate: float = 0.9,
    max_workers: int = 1,
) -> IntentIndex:
    """Generate and embed synthetic intents for every catalog symbol.

    Per-symbol generation failures are tolerated up to the configured
    success-rate floor; beyond that the build fails with the full
    failure list attached.
    """
    if not catalog.symbols:
        raise IndexBuildError("cannot build an index from an empty catalog")

    def one(symbol: Symbol) -> list[str]:
        return generate_intents(symbol, n_per_symbol, generator)

    results: list[list[str] | None] = [None] * len(catalog.symbols)
    failures: list[tuple[str, str]] = []
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = {i: pool.submit(one, s) for i, s in enumerate(catalog.symbols)}
            for i, future in futures.items():
                try:
                    results[i] = future.result()
                except GenerationError as exc:
                    failures.append((catalog.symbols[i].id, str(exc)))
    else:
        for i, symbol in enumerate(catalog.symbols):
            try:
                results[i] = one(symbol)
            except GenerationError as exc:
                failures.append((symbol.id, str(exc)))

    total = len(catalog.symbols)
    succeeded = total - len(failures)
    if succeeded / total < min_success_rate:
        raise IndexBuildError(
            f"only {succeeded}/{total} symbols produced intents "
            f"(floor {min_success_rate:.0%})",
            failures=failures,
        )
    for symbol_id, reason in failures:
        logger.warning("skipping %s: %s", symbol_id, reason)

    pairs = [
        (symbol.id, text)
        for symbol, texts in zip(catalog.symbols, results)
        if texts is not None
        for text in texts
    ]
    vectors = _embed_texts(embedder, [text for _, text in pairs])
    entries = tuple(
        SyntheticIntent(
            symbol_id=symbol_id,
            text=text,
            embedding=tuple(float(x) for x in vec),
            model_tag=embedder.model_tag,
        )
        for (symbol_id, text), vec in zip(pairs, vectors)
    )
    return IntentIndex(
        entries=entries,
        dimension=embedder.dimension,
        embedder_tag=embedder.model_tag,
        generator_tag=generator.model_tag,
        source_catalog_hash=catalog.content_hash,
    )


def ground(
    intent: str,
    index: IntentIndex,
    embedder: EmbeddingProvider,
    k: int = 5,
) -> GroundingResult:
    """Top-k symbols for an intent by cosine similarity, deduplicated.

    Each symbol keeps the best similarity over all of its synthetic
    intents; ties break by ascending symbol id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.entries:
        raise GroundingError("cannot ground against an empty index")
    try:
        (query_vec,) = embedder.embed(
            EmbeddingRequest(texts=(intent,), model_tag=embedder.model_tag)
        )
    except ProviderError as exc:
        raise GroundingError(f"query embedding failed: {exc}") from exc

    query = np.asarray(query_vec, dtype=np.float64)
    norm = np.linalg.norm(query)
    if norm == 0:
        raise GroundingError("query embedded to the zero vector")
    sims = index.matrix() @ (query / norm)

    best: dict[str, float] = {}
    for entry, sim in zip(index.entries, sims):
        value = float(sim)
        prev = best.get(entry.symbol_id)
        if prev is None or value > prev:
            best[entry.symbol_id] = value
    ranked = sorted(best.items(), key=lambda item: (-item[1], item[0]))
    return GroundingResult(
        query_text=intent,
        hits=tuple(SymbolHit(id=sid, similarity=sim) for sid, sim in ranked[:k]),
    )


class Grounder:
    """Bound (index, embedder, k) with a per-query memo and call counter."""

    def __init__(self, index: IntentIndex, embedder: EmbeddingProvider, k: int = 5):
        self.index = index
        self.embedder = embedder
        self.k = k
        self.calls = 0
        self._memo: dict[str, GroundingResult] = {}

    def ground(self, intent: str) -> GroundingResult:
        self.calls += 1
        cached = self._memo.get(intent)
        if cached is None:
            cached = ground(intent, self.index, self.embedder, self.k)
            self._memo[intent] = cached
        return cached


def save_index(index: IntentIndex, path: str | Path) -> None:
    """Write the header-plus-JSONL index format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "dimension": index.dimension,
            "embedder_tag": index.embedder_tag,
            "generator_tag": index.generator_tag,
            "source_catalog_hash": index.source_catalog_hash,
        }
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for entry in index.entries:
            record = {
                "symbol_id": entry.symbol_id,
                "text": entry.text,
                "embedding": list(entry.embedding),
                "model_tag": entry.model_tag,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_index(path: str | Path) -> IntentIndex:
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise IndexBuildError(f"empty index file: {path}")
    header = json.loads(lines[0])
    entries = []
    for line in lines[1:]:
        rec = json.loads(line)
        entries.append(
            SyntheticIntent(
                symbol_id=rec["symbol_id"],
                text=rec["text"],
                embedding=tuple(rec["embedding"]),
                model_tag=rec["model_tag"],
            )
        )
    return IntentIndex(
        entries=tuple(entries),
        dimension=header["dimension"],
        embedder_tag=header["embedder_tag"],
        generator_tag=header["generator_tag"],
        source_catalog_hash=header["source_catalog_hash"],
    )
