"""Service and backend configuration.

Config files are plain JSON. API keys never appear in them: the HTTP
backends read ``SPELUNKER_LLM_API_KEY`` / ``SPELUNKER_EMBED_API_KEY`` from
the environment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .embedding import DEFAULT_EMBED_DIM, HttpEmbeddingProvider, LocalTrigramEmbedder
from .errors import ConfigError
from .gateway import HttpCompletionBackend, ScriptedMockBackend


@dataclass(frozen=True)
class LlmConfig:
    kind: str = "mock"            # "mock" | "http"
    url: str | None = None
    model: str | None = None
    timeout: float = 30.0
    retries: int = 1
    script: str | None = None     # mock only


@dataclass(frozen=True)
class EmbedConfig:
    kind: str = "local"           # "local" | "http"
    url: str | None = None
    dim: int = DEFAULT_EMBED_DIM
    timeout: float = 30.0


@dataclass(frozen=True)
class RerankConfig:
    enabled: bool = False
    pool_factor: int = 2
    pool_extra: int = 10


@dataclass(frozen=True)
class ServiceConfig:
    index_path: str | None = None
    llm: LlmConfig = field(default_factory=LlmConfig)
    embedding: EmbedConfig = field(default_factory=EmbedConfig)
    rerank: RerankConfig = field(default_factory=RerankConfig)
    port: int = 8000
    cors_origins: tuple[str, ...] = ("*",)
    static_dir: str | None = None

    def __post_init__(self):
        if not (1 <= self.port <= 65535):
            raise ConfigError(f"port must be in [1, 65535], got {self.port}")
        if self.llm.timeout <= 0:
            raise ConfigError(f"llm timeout must be > 0, got {self.llm.timeout}")


def llm_config_from_dict(obj: dict) -> LlmConfig:
    kind = obj.get("kind", "mock")
    if kind not in ("mock", "http"):
        raise ConfigError(f'llm kind must be "mock" or "http", got {kind!r}')
    cfg = LlmConfig(
        kind=kind,
        url=obj.get("url"),
        model=obj.get("model"),
        timeout=float(obj.get("timeout", 30.0)),
        retries=int(obj.get("retries", 1)),
        script=obj.get("script"),
    )
    if kind == "http" and not cfg.url:
        raise ConfigError("http llm backend needs a url")
    if kind == "mock" and not cfg.script:
        raise ConfigError("mock llm backend needs a script file path")
    return cfg


def embed_config_from_dict(obj) -> EmbedConfig:
    if obj == "local" or obj is None:
        return EmbedConfig()
    if not isinstance(obj, dict):
        raise ConfigError(f"embedding config must be an object or \"local\", got {obj!r}")
    kind = obj.get("kind", "local")
    if kind not in ("local", "http"):
        raise ConfigError(f'embedding kind must be "local" or "http", got {kind!r}')
    cfg = EmbedConfig(kind=kind, url=obj.get("url"),
                      dim=int(obj.get("dim", DEFAULT_EMBED_DIM)),
                      timeout=float(obj.get("timeout", 30.0)))
    if kind == "http" and not cfg.url:
        raise ConfigError("http embedding backend needs a url")
    return cfg


def service_config_from_dict(obj: dict) -> ServiceConfig:
    rr = obj.get("rerank", {})
    return ServiceConfig(
        index_path=obj.get("index"),
        llm=llm_config_from_dict(obj.get("llm", {"kind": "mock", "script": None}))
        if obj.get("llm") else LlmConfig(),
        embedding=embed_config_from_dict(obj.get("embedding")),
        rerank=RerankConfig(
            enabled=bool(rr.get("enabled", False)),
            pool_factor=int(rr.get("pool_factor", 2)),
            pool_extra=int(rr.get("pool_extra", 10)),
        ),
        port=int(obj.get("port", 8000)),
        cors_origins=tuple(obj.get("cors_origins", ["*"])),
        static_dir=obj.get("static_dir"),
    )


def load_service_config(path: str | Path) -> ServiceConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return service_config_from_dict(obj)


def load_llm_config(path: str | Path) -> LlmConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read llm config {path}: {exc}") from exc
    return llm_config_from_dict(obj)


def build_llm_backend(cfg: LlmConfig, base_dir: Path | None = None):
    if cfg.kind == "mock":
        script = Path(cfg.script)
        if base_dir is not None and not script.is_absolute():
            script = base_dir / script
        return ScriptedMockBackend.from_file(script)
    return HttpCompletionBackend(url=cfg.url, model=cfg.model or "default",
                                 timeout=cfg.timeout, retries=cfg.retries)


def build_embedder(cfg: EmbedConfig):
    if cfg.kind == "local":
        return LocalTrigramEmbedder(cfg.dim)
    return HttpEmbeddingProvider(cfg.url, dim=cfg.dim, timeout=cfg.timeout)
