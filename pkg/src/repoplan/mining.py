"""Mine a source tree into a symbol catalog; extract symbol usages from text.

The miner walks every non-ignored ``.py`` file and records top-level
functions, classes, methods of top-level classes, and module-level
variable assignments. Nested and local definitions are skipped so ids
stay stable. Parsing uses parso, an error-tolerant concrete-syntax-tree
parser: files that parse with errors are skipped with a warning during
mining, while `extract_usages` harvests whatever it can from partially
parseable text.

Catalog file format (line-delimited JSON): a single header line with
repo_root / language / content_hash / created_at, then one Symbol object
per line.
"""

from __future__ import annotations

import datetime
import fnmatch
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import parso

from .errors import EmptyCatalogError, MiningError, UnsupportedLanguageError

logger = logging.getLogger(__name__)

SYMBOL_KINDS = ("function", "class", "method", "variable")

DEFAULT_IGNORES = (
    ".*",
    "__pycache__",
    "node_modules",
    "build",
    "dist",
    "vendor",
    "venv",
)


@dataclass(frozen=True)
class Symbol:
    """One definable entity mined from the repository."""

    id: str
    name: str
    kind: str
    file: str
    span: tuple[int, int]
    signature: str
    doc: str | None = None
    snippet: str | None = None

    def __post_init__(self):
        if self.kind not in SYMBOL_KINDS:
            raise ValueError(f"unknown symbol kind: {self.kind}")
        if not self.id.endswith(self.name):
            raise ValueError(f"id {self.id!r} does not end with name {self.name!r}")
        if self.span[0] > self.span[1]:
            raise ValueError(f"bad span {self.span} for {self.id}")


@dataclass
class SymbolCatalog:
    """Immutable collection of every symbol mined from one repository."""

    repo_root: str
    language: str
    symbols: tuple[Symbol, ...]
    created_at: str
    content_hash: str
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        seen = set()
        for sym in self.symbols:
            if sym.id in seen:
                raise ValueError(f"duplicate symbol id: {sym.id}")
            seen.add(sym.id)

    def get(self, symbol_id: str) -> Symbol | None:
        return self._by_id().get(symbol_id)

    def _by_id(self) -> dict[str, Symbol]:
        cached = getattr(self, "_id_map", None)
        if cached is None:
            cached = {s.id: s for s in self.symbols}
            object.__setattr__(self, "_id_map", cached)
        return cached

    def name_set(self) -> frozenset[str]:
        return frozenset(s.name for s in self.symbols)

    def id_set(self) -> frozenset[str]:
        return frozenset(s.id for s in self.symbols)


@dataclass
class MiningConfig:
    """Knobs for one mining run."""

    ignore: tuple[str, ...] = DEFAULT_IGNORES
    include_private: bool = True
    snippet_limit: int = 2048
    language: str = "python"


def _timestamp() -> str:
    """Mining time in UTC; honors SOURCE_DATE_EPOCH for reproducible runs."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        moment = datetime.datetime.fromtimestamp(int(epoch), tz=datetime.timezone.utc)
    else:
        moment = datetime.datetime.now(tz=datetime.timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def _is_ignored(relpath: Path, patterns: tuple[str, ...]) -> bool:
    posix = relpath.as_posix()
    for pattern in patterns:
        if "/" in pattern:
            if fnmatch.fnmatch(posix, pattern):
                return True
        elif any(fnmatch.fnmatch(part, pattern) for part in relpath.parts):
            return True
    return False


def _module_path(relpath: Path) -> str:
    parts = list(relpath.with_suffix("").parts)
    if len(parts) > 1 and parts[-1] == "__init__":
        parts = parts[:-1]
    return ".".join(parts)


def _end_line(node) -> int:
    line, col = node.end_pos
    return line - 1 if col == 0 else line


def _one_line(text: str) -> str:
    return " ".join(text.split())


def _truncate_bytes(text: str, limit: int) -> str:
    raw = text.encode("utf-8")
    if len(raw) <= limit:
        return text
    return raw[:limit].decode("utf-8", errors="ignore")


def _header_text(node) -> str:
    """Declaration text of a def/class up to and including the colon."""
    parts = []
    for child in node.children:
        if child.type == "suite":
            break
        parts.append(child.get_code(include_prefix=bool(parts)))
    return _one_line("".join(parts))


def _doc_text(node) -> str | None:
    doc_node = node.get_doc_node()
    if doc_node is None:
        return None
    try:
        import ast

        return ast.literal_eval(doc_node.get_code(include_prefix=False))
    except (ValueError, SyntaxError):
        return doc_node.get_code(include_prefix=False)


def _unwrap(node):
    """Peel decorated/async wrappers down to the funcdef/classdef inside."""
    while node.type in ("decorated", "async_stmt", "async_funcdef"):
        inner = [c for c in node.children if c.type in ("funcdef", "classdef", "decorated")]
        if not inner:
            return None
        node = inner[0]
    return node if node.type in ("funcdef", "classdef") else None


def _span_of(node) -> tuple[int, int]:
    outer = node
    while outer.parent is not None and outer.parent.type in ("decorated", "async_stmt", "async_funcdef"):
        outer = outer.parent
    return (outer.start_pos[0], _end_line(outer))


def _snippet_of(node, limit: int) -> str:
    outer = node
    while outer.parent is not None and outer.parent.type in ("decorated", "async_stmt", "async_funcdef"):
        outer = outer.parent
    return _truncate_bytes(outer.get_code(include_prefix=False).rstrip("\n"), limit)


def _plain_assignment_names(expr_stmt) -> list:
    """Name targets of a plain or annotated assignment; tuple targets skipped."""
    has_eq = any(
        getattr(c, "value", None) == "=" and c.type == "operator" for c in expr_stmt.children
    )
    ann = [c for c in expr_stmt.children if c.type == "annassign"]
    if ann:
        has_eq = any(getattr(c, "value", None) == "=" for c in ann[0].children)
    if not has_eq:
        return []
    return [
        name
        for name in expr_stmt.get_defined_names()
        if name.parent is expr_stmt and name.type == "name"
    ]


def _mine_file(relpath: Path, source: str, config: MiningConfig) -> list[Symbol]:
    tree = parso.parse(source)
    if next(_iter_error_nodes(tree), None) is not None:
        raise MiningError(f"parse errors in {relpath.as_posix()}")

    module = _module_path(relpath)
    symbols: list[Symbol] = []

    def allowed(*names: str) -> bool:
        return config.include_private or not any(n.startswith("_") for n in names)

    def add(node, kind: str, qualifier: str | None = None):
        name = node.name.value
        parts = [module] + ([qualifier] if qualifier else []) + [name]
        symbols.append(
            Symbol(
                id=".".join(p for p in parts if p),
                name=name,
                kind=kind,
                file=relpath.as_posix(),
                span=_span_of(node),
                signature=_header_text(node),
                doc=_doc_text(node),
                snippet=_snippet_of(node, config.snippet_limit),
            )
        )

    for child in tree.children:
        node = _unwrap(child) if child.type in ("decorated", "async_stmt", "async_funcdef") else child
        if node is None:
            continue
        if node.type == "funcdef":
            if allowed(node.name.value):
                add(node, "function")
        elif node.type == "classdef":
            if not allowed(node.name.value):
                continue
            add(node, "class")
            for method in node.iter_funcdefs():
                if allowed(node.name.value, method.name.value):
                    add(method, "method", qualifier=node.name.value)
        elif node.type == "simple_stmt":
            stmt = node.children[0]
            if stmt.type != "expr_stmt":
                continue
            for name in _plain_assignment_names(stmt):
                if not allowed(name.value):
                    continue
                code = stmt.get_code(include_prefix=False).rstrip("\n")
                symbols.append(
                    Symbol(
                        id=f"{module}.{name.value}" if module else name.value,
                        name=name.value,
                        kind="variable",
                        file=relpath.as_posix(),
                        span=(node.start_pos[0], _end_line(node)),
                        signature=_one_line(code.splitlines()[0]) if code else name.value,
                        doc=None,
                        snippet=_truncate_bytes(code, config.snippet_limit),
                    )
                )
    return symbols


def mine_repository(root: str | Path, config: MiningConfig | None = None) -> SymbolCatalog:
    """Parse every non-ignored source file under `root` into a catalog.

    Unparseable files are skipped with a warning; a root with no source
    files at all raises `EmptyCatalogError`.
    """
    config = config or MiningConfig()
    if config.language != "python":
        raise UnsupportedLanguageError(f"unsupported language: {config.language}")
    root = Path(root)
    if not root.is_dir():
        raise MiningError(f"not a readable directory: {root}")

    try:
        files = sorted(
            p.relative_to(root)
            for p in root.rglob("*.py")
            if p.is_file() and not _is_ignored(p.relative_to(root), config.ignore)
        )
    except OSError as exc:
        raise MiningError(f"cannot walk {root}: {exc}") from exc
    if not files:
        raise EmptyCatalogError(f"no {config.language} source files under {root}")

    warnings: list[str] = []
    symbols: list[Symbol] = []
    hasher = hashlib.sha256()
    seen_ids: set[str] = set()
    for relpath in files:
        full = root / relpath
        try:
            raw = full.read_bytes()
            mined = _mine_file(relpath, raw.decode("utf-8"), config)
        except (OSError, UnicodeDecodeError, MiningError) as exc:
            message = f"skipped {relpath.as_posix()}: {exc}"
            warnings.append(message)
            logger.warning("%s", message)
            continue
        hasher.update(relpath.as_posix().encode("utf-8"))
        hasher.update(b"\0")
        hasher.update(raw)
        hasher.update(b"\0")
        for sym in mined:
            if sym.id in seen_ids:
                message = f"duplicate symbol id {sym.id} in {relpath.as_posix()}; keeping first"
                warnings.append(message)
                logger.warning("%s", message)
                continue
            seen_ids.add(sym.id)
            symbols.append(sym)

    symbols.sort(key=lambda s: (s.file, s.span[0]))
    return SymbolCatalog(
        repo_root=str(root),
        language=config.language,
        symbols=tuple(symbols),
        created_at=_timestamp(),
        content_hash=hasher.hexdigest(),
        warnings=tuple(warnings),
    )


def _iter_error_nodes(tree):
    stack = [tree]
    while stack:
        node = stack.pop()
        if node.type in ("error_node", "error_leaf"):
            yield node
        stack.extend(getattr(node, "children", []))


@dataclass(frozen=True)
class ExtractedUsages:
    """Usage names harvested from source text, plus a parse-health flag."""

    names: frozenset[str]
    warning: bool = False


def _collect_import_names(node, names: set[str]) -> None:
    try:
        for path in node.get_paths():
            for leaf in path:
                if leaf.type == "name":
                    names.add(leaf.value)
    except Exception:  # partially recovered import inside an error region
        _scan_leaves(node, names)


def _collect_chain_names(node, names: set[str]) -> None:
    """Call and attribute names from an atom_expr/power trailer chain."""
    children = node.children
    base = children[0]
    for i, child in enumerate(children[1:], start=1):
        if child.type != "trailer":
            continue
        first = child.children[0]
        if getattr(first, "value", None) == ".":
            for leaf in child.children[1:]:
                if leaf.type == "name":
                    names.add(leaf.value)
        elif getattr(first, "value", None) == "(" and i == 1 and base.type == "name":
            names.add(base.value)


def _collect_decorator_names(node, names: set[str]) -> None:
    # @name is a call position on the bare name; @a.b(...) payloads are
    # atom_expr nodes the generic walk already handles.
    for item in node.children:
        if item.type == "name":
            names.add(item.value)
        elif item.type == "dotted_name":
            parts = [leaf.value for leaf in item.children if leaf.type == "name"]
            names.update(parts[1:] if len(parts) > 1 else parts)


def _scan_leaves(error_node, names: set[str]) -> None:
    """Best-effort call/attr/import harvest inside an error region."""
    leaves = []
    stack = [error_node]
    while stack:
        node = stack.pop(0)
        children = getattr(node, "children", None)
        if children:
            stack = list(children) + stack
        else:
            leaves.append(node)
    in_import = False
    prev_value = ""
    for i, leaf in enumerate(leaves):
        value = getattr(leaf, "value", "")
        if leaf.type == "keyword" and value in ("import", "from"):
            in_import = True
        elif leaf.type in ("newline", "endmarker") or value == ";":
            in_import = False
        elif leaf.type == "name":
            nxt = leaves[i + 1] if i + 1 < len(leaves) else None
            nxt_value = getattr(nxt, "value", "") if nxt is not None else ""
            if in_import:
                if prev_value != "as":
                    names.add(value)
            elif prev_value == ".":
                names.add(value)
            elif nxt_value == "(" and prev_value != ".":
                names.add(value)
        prev_value = value


def extract_usages(source: str, language: str = "python") -> ExtractedUsages:
    """Names used in call positions, attribute accesses, and imports.

    Pure function of its inputs. Partially parseable text yields partial
    results with `warning=True`; totally unparseable text yields an empty
    set with the warning set.
    """
    if language != "python":
        raise UnsupportedLanguageError(f"unsupported language: {language}")
    if not source.strip():
        return ExtractedUsages(frozenset(), False)

    tree = parso.parse(source)
    names: set[str] = set()
    warning = False
    stack = [tree]
    while stack:
        node = stack.pop()
        kind = node.type
        if kind in ("import_name", "import_from"):
            _collect_import_names(node, names)
            continue
        if kind in ("atom_expr", "power"):
            _collect_chain_names(node, names)
        elif kind == "decorator":
            _collect_decorator_names(node, names)
        elif kind in ("error_node", "error_leaf"):
            warning = True
            if kind == "error_node":
                _scan_leaves(node, names)
            continue
        stack.extend(getattr(node, "children", []))
    return ExtractedUsages(frozenset(names), warning)


def save_catalog(catalog: SymbolCatalog, path: str | Path) -> None:
    """Write the line-delimited JSON catalog format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "repo_root": catalog.repo_root,
            "language": catalog.language,
            "content_hash": catalog.content_hash,
            "created_at": catalog.created_at,
        }
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for sym in catalog.symbols:
            record = {
                "id": sym.id,
                "name": sym.name,
                "kind": sym.kind,
                "file": sym.file,
                "span": list(sym.span),
                "signature": sym.signature,
                "doc": sym.doc,
                "snippet": sym.snippet,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_catalog(path: str | Path) -> SymbolCatalog:
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise MiningError(f"empty catalog file: {path}")
    header = json.loads(lines[0])
    symbols = []
    for line in lines[1:]:
        rec = json.loads(line)
        symbols.append(
            Symbol(
                id=rec["id"],
                name=rec["name"],
                kind=rec["kind"],
                file=rec["file"],
                span=(rec["span"][0], rec["span"][1]),
                signature=rec["signature"],
                doc=rec.get("doc"),
                snippet=rec.get("snippet"),
            )
        )
    return SymbolCatalog(
        repo_root=header["repo_root"],
        language=header["language"],
        symbols=tuple(symbols),
        created_at=header["created_at"],
        content_hash=header["content_hash"],
    )
