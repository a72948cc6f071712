"""HTTP service exposing the search pipeline.

JSON endpoints: health, schema, natural-language query, structured search.
Validation problems map to 400, gateway failures to 502; a re-ranking
failure alone still returns 200 with ``rerank.fallback = true``.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import Body, FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .config import ServiceConfig, build_embedder, build_llm_backend
from .errors import (
    BackendFailure,
    EmptyExtraction,
    SpelunkerError,
    UnparseableResponse,
    ValidationError,
)
from .persist import load_index
from .pipeline import Engine, parse_structured_request, provider_for
from .schema import schema_to_json


def engine_from_config(config: ServiceConfig, base_dir: Path | None = None) -> Engine:
    if not config.index_path:
        raise ValidationError("config does not name an index file")
    index_path = Path(config.index_path)
    if base_dir is not None and not index_path.is_absolute():
        index_path = base_dir / index_path
    tree, dataset = load_index(index_path)
    if dataset.embedder_meta.get("kind") == "http" or config.embedding.kind == "http":
        provider = build_embedder(config.embedding)
        provider = provider_for(dataset, provider)
    else:
        provider = provider_for(dataset)
    backend = build_llm_backend(config.llm, base_dir) if config.llm.script or config.llm.url else None
    return Engine(
        dataset=dataset,
        tree=tree,
        provider=provider,
        llm_backend=backend,
        pool_factor=config.rerank.pool_factor,
        pool_extra=config.rerank.pool_extra,
    )


def create_app(engine: Engine, cors_origins: tuple[str, ...] = ("*",),
               static_dir: str | None = None,
               rerank_default: bool = False) -> FastAPI:
    app = FastAPI(title="spelunker", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/api/schema")
    def schema() -> dict:
        return schema_to_json(engine.dataset.schema)

    @app.post("/api/query")
    def query(payload: dict = Body(...)):
        text = payload.get("text", "")
        k = payload.get("k", 10)
        use_rerank = bool(payload.get("rerank", rerank_default))
        try:
            return engine.ask(str(text or ""), k, use_rerank=use_rerank)
        except ValidationError as exc:
            return _error(400, exc)
        except (BackendFailure, UnparseableResponse, EmptyExtraction) as exc:
            return _error(502, exc)

    @app.post("/api/search")
    def search(payload: dict = Body(...)):
        raw_query = payload.get("structured_query")
        k = payload.get("k", 10)
        weights = payload.get("weights")
        try:
            if not isinstance(raw_query, dict):
                raise ValidationError('"structured_query" must be a JSON object')
            query = parse_structured_request(engine.dataset, raw_query, weights)
            return engine.search(query, k)
        except (ValidationError, EmptyExtraction) as exc:
            return _error(400, exc)

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def _error(status: int, exc: SpelunkerError) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": type(exc).__name__, "detail": str(exc)})


def serve(engine: Engine, port: int, cors_origins: tuple[str, ...] = ("*",),
          static_dir: str | None = None, rerank_default: bool = False) -> None:
    import uvicorn

    app = create_app(engine, cors_origins, static_dir, rerank_default)
    uvicorn.run(app, host="0.0.0.0", port=port, log_level="info")
