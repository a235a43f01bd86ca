"""Command-line client for the retrieval QA service.

Every subcommand talks to the HTTP API: either a remote server given via
``--server-url`` or an in-process application (the default), so the same
request and response schemas are exercised both ways. ``serve`` starts
the long-running server that keeps corpus and indexes warm.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager

import httpx

from .config import ConfigError, load_config
from .llm import TOKEN_ENV_VAR

EPILOG = (
    "When the reader runs behind a remote endpoint, set the environment "
    f"variable {TOKEN_ENV_VAR} to the secret token; it is sent as an "
    "Authorization: Bearer header on every reader request."
)


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--run-id", help="run identifier (directory name under output_dir)")
    parser.add_argument("--k", type=int, help="number of documents to retrieve")
    parser.add_argument(
        "--truncate-words", type=int, help="word budget for entity-retrieved articles"
    )
    parser.add_argument(
        "--retriever",
        choices=["entity", "bm25", "dot_product"],
        help="retrieval backend",
    )
    parser.add_argument(
        "--server-url",
        help="base URL of a running server; default runs the service in process",
    )


def _config_mapping(args: argparse.Namespace) -> dict[str, str]:
    overrides = {
        "run_id": args.run_id,
        "k": args.k,
        "truncate_words": args.truncate_words,
        "retriever": args.retriever,
    }
    config = load_config(args.config, {k: v for k, v in overrides.items() if v is not None})
    return config.to_mapping()


@contextmanager
def _client(args: argparse.Namespace):
    if args.server_url:
        with httpx.Client(base_url=args.server_url, timeout=600.0) as client:
            yield client
        return
    # In-process transport: same request/response path, no socket.
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

        from .service import create_app

        client = TestClient(create_app(), raise_server_exceptions=False)
    with client:
        yield client


def _post(client, path: str, payload: dict) -> dict:
    response = client.post(path, json=payload)
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise SystemExit(f"error ({response.status_code}): {detail}")
    return response.json()


def cmd_build_index(args, client) -> int:
    body = {"dump_path": args.dump}
    if args.index_path:
        body["index_path"] = args.index_path
    result = _post(client, "/pipeline/build-index", body)
    print(
        f"indexed {result['articles']} articles "
        f"({result['total_bytes']} bytes) -> {result['index_path']}"
    )
    return 0


def cmd_segment(args, client) -> int:
    result = _post(
        client,
        "/pipeline/segment",
        {
            "dump_path": args.dump,
            "passages_path": args.out,
            "segment_len": args.segment_len,
        },
    )
    print(
        f"segmented {result['articles']} articles into {result['passages']} "
        f"passages -> {result['passages_path']}"
    )
    return 0


def cmd_retrieve(args, client) -> int:
    result = _post(client, "/pipeline/retrieve", {"config": _config_mapping(args)})
    print(
        f"run {result['run_id']}: cached {result['n_documents']} documents for "
        f"{result['n_questions']} questions in {result['duration_s']:.3f}s "
        f"-> {result['cache_path']}"
    )
    if result["missed_entities"]:
        print(f"warning: {result['missed_entities']} entities had no corpus article")
    return 0


def cmd_ask(args, client) -> int:
    result = _post(client, "/pipeline/ask", {"config": _config_mapping(args)})
    print(
        f"run {result['run_id']}: answered {result['n_questions']} questions "
        f"({result['n_failed']} failed) in {result['duration_s']:.3f}s "
        f"-> {result['exchanges_path']}"
    )
    return 1 if result["n_failed"] else 0


def cmd_evaluate(args, client) -> int:
    result = _post(client, "/pipeline/evaluate", {"config": _config_mapping(args)})
    print(json.dumps(result["metrics"], indent=2))
    print(f"report: {result['report_json_path']}")
    print(f"table:  {result['report_txt_path']}")
    return 0


def cmd_stats(args, client) -> int:
    result = _post(client, "/pipeline/stats", {"config": _config_mapping(args)})
    print(f"questions        {result['n_questions']}")
    print(f"max entities     {result['max_entities']}")
    print(f"avg entities     {result['avg_entities']:.2f}")
    print(f"linked fraction  {result['linked_fraction'] * 100:.1f}%")
    return 0


def cmd_bench(args, client) -> int:
    retrievers = [r.strip() for r in args.retrievers.split(",") if r.strip()]
    result = _post(
        client,
        "/pipeline/bench",
        {"config": _config_mapping(args), "retrievers": retrievers},
    )
    print(result["table"], end="")
    return 0


def cmd_serve(args, client=None) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config) if args.config else None
    uvicorn.run(create_app(config), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entityrag",
        description="Entity-centric retrieval-augmented question answering toolkit.",
        epilog=EPILOG,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def sub(name: str, help_text: str) -> argparse.ArgumentParser:
        p = subparsers.add_parser(name, help=help_text, epilog=EPILOG)
        _common_flags(p)
        return p

    p = sub("build-index", "build the byte-offset article index for a dump file")
    p.add_argument("--dump", required=True, help="path to the corpus dump file")
    p.add_argument("--index-path", help="where to write the offset index sidecar")
    p.set_defaults(handler=cmd_build_index)

    p = sub("segment", "cut dump articles into fixed-length word passages")
    p.add_argument("--dump", required=True)
    p.add_argument("--out", required=True, help="output passages JSONL path")
    p.add_argument("--segment-len", type=int, default=100)
    p.set_defaults(handler=cmd_segment)

    p = sub("retrieve", "run the retrieval stage and cache documents per question")
    p.set_defaults(handler=cmd_retrieve)

    p = sub("ask", "run the answering stage from the retrieval cache")
    p.set_defaults(handler=cmd_ask)

    p = sub("evaluate", "score a finished run and write report.json / report.txt")
    p.set_defaults(handler=cmd_evaluate)

    p = sub("stats", "entity annotation statistics for the configured dataset")
    p.set_defaults(handler=cmd_stats)

    p = sub("bench", "measure retriever time, disk and memory on the dataset")
    p.add_argument(
        "--retrievers",
        default="entity",
        help="comma-separated retriever kinds to benchmark",
    )
    p.set_defaults(handler=cmd_bench)

    p = sub("serve", "start the HTTP service (loads resources once, keeps them warm)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8109)
    p.set_defaults(handler=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    try:
        with _client(args) as client:
            return args.handler(args, client)
    except httpx.HTTPError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
