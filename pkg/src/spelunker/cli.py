"""Command-line interface.

Every subcommand prints machine-readable JSON on stdout and logs on stderr.
Exit codes: 0 success, 1 validation/config error, 2 backend failure.
Timings are omitted from ``ask``/``search`` output unless ``--timings`` is
passed, so default output is byte-deterministic.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .balltree import build_ball_tree
from .config import (
    EmbedConfig,
    LlmConfig,
    build_embedder,
    build_llm_backend,
    load_llm_config,
    load_service_config,
)
from .data import mock_script
from .errors import (
    BackendFailure,
    EmptyExtraction,
    ProviderFailure,
    SpelunkerError,
    UnparseableResponse,
    ValidationError,
)
from .evalkit import evaluate_extraction, evaluate_retrieval, export_curves_csv, load_truth_cases
from .persist import load_index, save_index
from .pipeline import Engine, parse_structured_request, provider_for
from .preprocess import build_processed_dataset
from .schema import load_csv, load_schema

log = logging.getLogger("spelunker")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_BACKEND = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _emit(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, ensure_ascii=False, separators=(",", ":")))
    sys.stdout.write("\n")


def _parse_json_arg(raw: str, what: str) -> dict:
    if raw == "-":
        raw = sys.stdin.read()
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValidationError(f"{what} must be a JSON object")
    return obj


def _llm_backend(args) -> object:
    if getattr(args, "llm_config", None):
        path = Path(args.llm_config)
        return build_llm_backend(load_llm_config(path), base_dir=path.parent)
    return build_llm_backend(LlmConfig(kind="mock", script=str(mock_script())))


def _load_engine(index_path: str, backend=None) -> Engine:
    tree, dataset = load_index(index_path)
    return Engine(dataset=dataset, tree=tree, provider=provider_for(dataset),
                  llm_backend=backend)


def cmd_index(args) -> int:
    schema = load_schema(args.schema)
    records = load_csv(args.data, schema)
    if args.embedder == "http":
        if not args.embed_url:
            raise ValidationError("--embedder http needs --embed-url")
        provider = build_embedder(EmbedConfig(kind="http", url=args.embed_url,
                                              dim=args.embed_dim))
    else:
        provider = build_embedder(EmbedConfig(kind="local", dim=args.embed_dim))
    dataset = build_processed_dataset(records, schema, provider)
    tree = build_ball_tree(dataset, leaf_size=args.leaf_size)
    save_index(tree, dataset, args.out)
    _emit({"records": dataset.n, "index": str(args.out),
           "embed_dim": dataset.embed_dim, "leaf_size": args.leaf_size})
    return EXIT_OK


def cmd_search(args) -> int:
    engine = _load_engine(args.index)
    raw = _parse_json_arg(args.query, "--query")
    weights = _parse_json_arg(args.weights, "--weights") if args.weights else None
    query = parse_structured_request(engine.dataset, raw, weights)
    _emit(engine.search(query, args.k, include_timings=args.timings))
    return EXIT_OK


def cmd_ask(args) -> int:
    backend = _llm_backend(args)
    engine = _load_engine(args.index, backend)
    _emit(engine.ask(args.text, args.k, use_rerank=args.rerank,
                     include_timings=args.timings))
    return EXIT_OK


def cmd_eval_extraction(args) -> int:
    backend = _llm_backend(args)
    cases = load_truth_cases(args.cases)
    schema = None
    if args.index:
        engine = _load_engine(args.index)
        schema = engine.dataset.schema
    elif args.schema:
        schema = load_schema(args.schema)
    else:
        raise ValidationError("eval extraction needs --index or --schema")
    report = evaluate_extraction(cases, schema, backend)
    Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    _emit({"tp": report["tp"], "fp": report["fp"], "fn": report["fn"],
           "precision": report["precision"], "recall": report["recall"],
           "f1": report["f1"], "mean_jaro": report["mean_jaro"],
           "out": str(args.out)})
    return EXIT_OK


def cmd_eval_retrieval(args) -> int:
    backend = _llm_backend(args) if (args.rerank or args.llm_config) else None
    engine = _load_engine(args.index, backend)
    cases = load_truth_cases(args.truth)
    report = evaluate_retrieval(engine.tree, cases, args.kmax,
                                use_rerank=args.rerank, backend=backend,
                                engine=engine)
    Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(export_curves_csv(report), encoding="utf-8")
    summary = {"cases": report["cases"], "k_max": report["k_max"],
               "knn": report["knn"], "out": str(args.out)}
    if "reranked" in report:
        summary["reranked"] = report["reranked"]
        summary["significance_pooled"] = report["significance"]["pooled"]
    _emit(summary)
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import engine_from_config, serve

    config = load_service_config(args.config)
    if args.port:
        config = type(config)(**{**config.__dict__, "port": args.port})
    engine = engine_from_config(config, base_dir=Path(args.config).parent)
    if args.index:
        engine = _load_engine(args.index, engine.llm_backend)
    serve(engine, config.port, config.cors_origins, config.static_dir,
          rerank_default=config.rerank.enabled)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="spelunker",
                     description="Hybrid similarity search over mixed-type records")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", parents=[], help="build an index from CSV")
    p_index.add_argument("--data", required=True)
    p_index.add_argument("--schema", required=True)
    p_index.add_argument("--out", required=True)
    p_index.add_argument("--embedder", choices=["local", "http"], default="local")
    p_index.add_argument("--embed-dim", type=int, default=64)
    p_index.add_argument("--embed-url")
    p_index.add_argument("--leaf-size", type=int, default=16)
    p_index.set_defaults(func=cmd_index)

    p_search = sub.add_parser("search", help="structured k-NN search")
    p_search.add_argument("--index", required=True)
    p_search.add_argument("--query", required=True,
                          help="JSON object of field targets, or - for stdin")
    p_search.add_argument("--k", type=int, required=True)
    p_search.add_argument("--weights", help="JSON object of per-field weights")
    p_search.add_argument("--timings", action="store_true")
    p_search.set_defaults(func=cmd_search)

    p_ask = sub.add_parser("ask", help="natural-language search via the LLM")
    p_ask.add_argument("--index", required=True)
    p_ask.add_argument("--text", required=True)
    p_ask.add_argument("--k", type=int, required=True)
    p_ask.add_argument("--rerank", action="store_true")
    p_ask.add_argument("--llm-config")
    p_ask.add_argument("--timings", action="store_true")
    p_ask.set_defaults(func=cmd_ask)

    p_eval = sub.add_parser("eval", help="evaluation protocols")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)

    p_ext = eval_sub.add_parser("extraction", help="score LLM structuring")
    p_ext.add_argument("--cases", required=True)
    p_ext.add_argument("--llm-config")
    p_ext.add_argument("--index")
    p_ext.add_argument("--schema")
    p_ext.add_argument("--out", required=True)
    p_ext.set_defaults(func=cmd_eval_extraction)

    p_ret = eval_sub.add_parser("retrieval", help="precision/recall at K")
    p_ret.add_argument("--index", required=True)
    p_ret.add_argument("--truth", required=True)
    p_ret.add_argument("--kmax", type=int, required=True)
    p_ret.add_argument("--rerank", action="store_true")
    p_ret.add_argument("--llm-config")
    p_ret.add_argument("--out", required=True)
    p_ret.add_argument("--csv")
    p_ret.set_defaults(func=cmd_eval_retrieval)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--index")
    p_serve.add_argument("--config", required=True)
    p_serve.add_argument("--port", type=int)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (BackendFailure, UnparseableResponse, EmptyExtraction, ProviderFailure) as exc:
        log.error("%s", exc)
        _emit({"error": type(exc).__name__, "detail": str(exc)})
        return EXIT_BACKEND
    except SpelunkerError as exc:
        log.error("%s", exc)
        _emit({"error": type(exc).__name__, "detail": str(exc)})
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
