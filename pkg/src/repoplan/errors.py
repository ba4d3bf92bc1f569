"""Exception taxonomy shared across the package.

The CLI maps these onto its documented exit codes; library callers can
catch `RepoplanError` to handle anything raised by this package.
"""


class RepoplanError(Exception):
    """Base class for all errors raised by repoplan."""


class ConfigError(RepoplanError):
    """Invalid configuration, CLI usage, or inconsistent inputs."""


class MiningError(RepoplanError):
    """Failure while mining a repository into a symbol catalog."""


class EmptyCatalogError(MiningError):
    """The mined root contained no source files of the configured language."""


class UnsupportedLanguageError(MiningError):
    """A language tag the parse backend has no grammar for."""


class ProviderError(RepoplanError):
    """A chat or embedding backend failed after exhausting retries."""


class ScriptMissError(ProviderError):
    """A mock provider had no scripted response for a request (test bug)."""


class GenerationError(RepoplanError):
    """Synthetic intent generation failed for one symbol."""


class IndexBuildError(RepoplanError):
    """Too many symbols failed during index construction.

    Carries the per-symbol failure list in `failures`.
    """

    def __init__(self, message: str, failures: list[tuple[str, str]] | None = None):
        super().__init__(message)
        self.failures = failures or []


class GroundingError(RepoplanError):
    """Embedding the query intent failed; the step stays ungrounded."""


class RenderError(RepoplanError):
    """A plan referenced a symbol id that the catalog cannot resolve."""


class ScoringError(RepoplanError):
    """A scorer could not produce a judgement (unparseable, bad input)."""


class JudgingError(RepoplanError):
    """Pairwise judging failed (more than half the votes unparseable)."""


class UndefinedMetricError(RepoplanError):
    """The overlap metric is undefined (reference has no repo symbols)."""


class SearchError(RepoplanError):
    """Internal search invariant violated (depth cap, bad frontier)."""
