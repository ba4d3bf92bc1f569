"""Run configuration: file loading, flag overrides, provider construction.

Config files are YAML or JSON. Precedence is defaults, then file values,
then explicit CLI overrides. Providers are declared per role (successor,
intent_gen, likert, judge, embedder); the mock backends make every
command runnable offline and reproducibly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .mining import DEFAULT_IGNORES, MiningConfig
from .providers import (
    CachingChatProvider,
    CachingEmbeddingProvider,
    ChatProvider,
    EmbeddingProvider,
    MockChatProvider,
    MockEmbeddingProvider,
    OpenAICompatChatProvider,
    OpenAICompatEmbeddingProvider,
    ProviderSet,
    ResponseCache,
)
from .search import SearchConfig

logger = logging.getLogger(__name__)

CHAT_ROLES = ("successor", "intent_gen", "likert", "judge")

# Live model defaults; pure configuration, override freely.
DEFAULT_CHAT_MODELS = {
    "successor": "gpt-4o",
    "likert": "gpt-4o",
    "judge": "gpt-4o",
    "intent_gen": "gpt-4o-mini",
}
DEFAULT_EMBED_MODEL = "text-embedding-3-large"
DEFAULT_EMBED_DIMENSION = 3072


@dataclass
class ProviderConfig:
    """One provider role's backend settings."""

    type: str = "openai"
    model: str = ""
    endpoint: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    dimension: int = DEFAULT_EMBED_DIMENSION
    script: str | None = None
    cache: bool | None = None
    max_attempts: int = 4
    timeout: float = 120.0
    requests_per_sec: float = 2.0
    max_concurrency: int = 4

    def __post_init__(self):
        if self.type not in ("openai", "mock"):
            raise ConfigError(f"unknown provider type: {self.type}")


@dataclass
class PathsConfig:
    repo_root: str = "."
    catalog: str = "repoplan_out/catalog.jsonl"
    index: str = "repoplan_out/intents.jsonl"
    cache_dir: str = "repoplan_out/cache"
    output_dir: str = "repoplan_out"


@dataclass
class IndexingConfig:
    n_per_symbol: int = 5
    min_success_rate: float = 0.9
    max_workers: int = 1


@dataclass
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    mining: MiningConfig = field(default_factory=MiningConfig)
    indexing: IndexingConfig = field(default_factory=IndexingConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    providers: dict[str, ProviderConfig] = field(default_factory=dict)

    def provider(self, role: str) -> ProviderConfig:
        return self.providers.get(role, ProviderConfig())


def _build_section(cls, raw: dict, label: str):
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown {label} config keys: {sorted(unknown)}")
    return cls(**raw)


def load_run_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Build one RunConfig from an optional file plus CLI overrides.

    `overrides` maps dotted section keys, e.g. {"search": {"budget": 12}}.
    """
    raw: dict = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = (json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)) or {}
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config root must be a mapping: {path}")

    for section, values in (overrides or {}).items():
        merged = dict(raw.get(section, {}))
        merged.update({k: v for k, v in values.items() if v is not None})
        raw[section] = merged

    mining_raw = dict(raw.get("mining", {}))
    if "ignore" in mining_raw:
        mining_raw["ignore"] = tuple(mining_raw["ignore"])
    else:
        mining_raw["ignore"] = DEFAULT_IGNORES

    providers_raw = raw.get("providers", {})
    if not isinstance(providers_raw, dict):
        raise ConfigError("providers section must be a mapping of role -> settings")
    providers = {
        role: _build_section(ProviderConfig, dict(cfg), f"providers.{role}")
        for role, cfg in providers_raw.items()
    }

    try:
        return RunConfig(
            paths=_build_section(PathsConfig, dict(raw.get("paths", {})), "paths"),
            mining=_build_section(MiningConfig, mining_raw, "mining"),
            indexing=_build_section(IndexingConfig, dict(raw.get("indexing", {})), "indexing"),
            search=_build_section(SearchConfig, dict(raw.get("search", {})), "search"),
            providers=providers,
        )
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def _load_mock_script(path: str | None) -> tuple[dict, dict]:
    if path is None:
        return {}, {}
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"unreadable mock script {path}: {exc}") from exc
    scripts = {}
    for key, response in payload.get("by_digest", {}).items():
        tag, _, digest = key.partition(":")
        if not digest:
            raise ConfigError(f"mock script key must be 'tag:digest': {key!r}")
        scripts[(tag, digest)] = response
    return scripts, payload.get("sequences", {})


def build_chat_provider(cfg: ProviderConfig, role: str, cache_dir: str | None) -> ChatProvider:
    if cfg.type == "mock":
        scripts, sequences = _load_mock_script(cfg.script)
        provider: ChatProvider = MockChatProvider(
            scripts=scripts, sequences=sequences, model_tag=f"mock-chat-{role}"
        )
    else:
        provider = OpenAICompatChatProvider(
            model=cfg.model or DEFAULT_CHAT_MODELS.get(role, "gpt-4o"),
            endpoint=cfg.endpoint,
            api_key_env=cfg.api_key_env,
            max_attempts=cfg.max_attempts,
            timeout=cfg.timeout,
            requests_per_sec=cfg.requests_per_sec,
            max_concurrency=cfg.max_concurrency,
        )
    use_cache = cfg.cache if cfg.cache is not None else cfg.type == "openai"
    if use_cache and cache_dir:
        provider = CachingChatProvider(provider, ResponseCache(cache_dir))
    return provider


def build_embedder(cfg: ProviderConfig, cache_dir: str | None) -> EmbeddingProvider:
    if cfg.type == "mock":
        provider: EmbeddingProvider = MockEmbeddingProvider(dimension=cfg.dimension)
    else:
        provider = OpenAICompatEmbeddingProvider(
            model=cfg.model or DEFAULT_EMBED_MODEL,
            dimension=cfg.dimension,
            endpoint=cfg.endpoint,
            api_key_env=cfg.api_key_env,
            max_attempts=cfg.max_attempts,
            timeout=cfg.timeout,
        )
    use_cache = cfg.cache if cfg.cache is not None else cfg.type == "openai"
    if use_cache and cache_dir:
        provider = CachingEmbeddingProvider(provider, ResponseCache(cache_dir))
    return provider


def build_provider_set(config: RunConfig, roles: tuple[str, ...]) -> ProviderSet:
    """Construct the providers the requested roles need."""
    cache_dir = config.paths.cache_dir
    embedder = build_embedder(config.provider("embedder"), cache_dir)
    chats = {
        role: build_chat_provider(config.provider(role), role, cache_dir)
        for role in roles
        if role in CHAT_ROLES
    }
    return ProviderSet(
        successor=chats.get("successor", MockChatProvider()),
        embedder=embedder,
        likert=chats.get("likert"),
        judge=chats.get("judge"),
        intent_gen=chats.get("intent_gen"),
    )
