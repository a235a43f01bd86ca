"""Run configuration: a flat ``key = value`` file plus override merging.

Every field can also be supplied programmatically or through CLI flags;
flags win over file values. Relative paths in a config file resolve
against the file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping

from .retrievers import DEFAULT_B, DEFAULT_K1, RetrieverConfig

DATASET_KINDS = ("factoid", "entity_questions", "strategyqa")

_PATH_KEYS = {
    "dataset_path",
    "dump_path",
    "offset_index_path",
    "alias_path",
    "passages_path",
    "bm25_index_path",
    "passage_embeddings_path",
    "question_embeddings_path",
    "annotations_path",
    "output_dir",
    "cache_dir",
}


class ConfigError(ValueError):
    """A config file or override set is unusable."""


@dataclass
class PipelineConfig:
    """Everything one run needs: data, retriever resources, reader, output."""

    dataset_path: Path | None = None
    dataset_kind: str = "factoid"
    retriever: RetrieverConfig = field(default_factory=RetrieverConfig)
    dump_path: Path | None = None
    offset_index_path: Path | None = None
    alias_path: Path | None = None
    passages_path: Path | None = None
    bm25_index_path: Path | None = None
    bm25_k1: float = DEFAULT_K1
    bm25_b: float = DEFAULT_B
    passage_embeddings_path: Path | None = None
    question_embeddings_path: Path | None = None
    annotations_path: Path | None = None
    llm_endpoint: str = "stub:echo"
    llm_timeout_s: float = 30.0
    llm_max_attempts: int = 3
    llm_concurrency: int = 4
    max_generation_tokens: int | None = None
    run_id: str = "run"
    output_dir: Path = Path("runs")
    cache_dir: Path | None = None

    def __post_init__(self):
        if self.dataset_kind not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset_kind {self.dataset_kind!r}")

    @property
    def run_cache_dir(self) -> Path:
        """Retrieval caches live next to the other run artifacts by default."""
        return self.cache_dir if self.cache_dir is not None else self.output_dir

    @property
    def generation_tokens(self) -> int:
        if self.max_generation_tokens is not None:
            return self.max_generation_tokens
        return 1 if self.dataset_kind == "strategyqa" else 10

    @classmethod
    def from_mapping(
        cls, values: Mapping[str, str], base_dir: Path | None = None
    ) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        retriever_keys = {"retriever", "k", "truncate_words"}
        unknown = set(values) - known - retriever_keys
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        def path_of(raw: str) -> Path:
            p = Path(raw)
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            return p

        kwargs: dict = {}
        for key, raw in values.items():
            if key in retriever_keys:
                continue
            if key in _PATH_KEYS:
                kwargs[key] = path_of(raw)
            elif key in ("bm25_k1", "bm25_b", "llm_timeout_s"):
                kwargs[key] = float(raw)
            elif key in ("llm_max_attempts", "llm_concurrency", "max_generation_tokens"):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = raw
        try:
            kwargs["retriever"] = RetrieverConfig(
                kind=values.get("retriever", "entity"),
                k=int(values.get("k", 4)),
                truncate_words=int(values.get("truncate_words", 100)),
            )
            return cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_mapping(self) -> dict[str, str]:
        """Flat string form, the inverse of :meth:`from_mapping`."""
        out: dict[str, str] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None or f.name == "retriever":
                continue
            out[f.name] = str(value)
        out["retriever"] = self.retriever.kind
        out["k"] = str(self.retriever.k)
        out["truncate_words"] = str(self.retriever.truncate_words)
        return out


def parse_config_file(path: Path | str) -> dict[str, str]:
    """Read ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            values[key.strip()] = raw.strip()
    return values


def load_config(
    config_path: Path | str | None = None,
    overrides: Mapping[str, str] | None = None,
) -> PipelineConfig:
    """Merge a config file (if any) with overrides; overrides win."""
    values: dict[str, str] = {}
    base_dir: Path | None = None
    if config_path is not None:
        values.update(parse_config_file(config_path))
        base_dir = Path(config_path).resolve().parent
    if overrides:
        for key, raw in overrides.items():
            if raw is None:
                continue
            values[key] = str(raw)
            if key in _PATH_KEYS:
                # Values given on the command line resolve against the cwd.
                values[key] = str(Path(str(raw)).resolve())
    return PipelineConfig.from_mapping(values, base_dir=base_dir)
