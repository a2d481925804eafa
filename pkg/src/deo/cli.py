"""Command-line entry point wiring the pipeline together.

Subcommands: decompose, ingest, index, search, optimize, eval, sweep,
trajectory. Exit codes: 0 success, 1 data error, 2 usage error, 3 transport
error. Failures print one JSON diagnostic line to stderr so scripts can
parse them.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import analysis, benchmark
from .clients import ChatClient, EmbeddingClient
from .config import ToolConfig
from .decomposer import (
    DecomposedQuery,
    DecompositionCache,
    decompose,
    decompose_many,
)
from .errors import (
    DeoError,
    MissingDecompositionError,
    TransportError,
)
from .index import FlatIndex
from .ioutil import atomic_write_text, load_texts_jsonl
from .metrics import load_qrels
from .optimizer import DecompositionEmbeddings, optimize_query_embedding
from .store import ingest_corpus, load_store
from .vecmath import pca_fit

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_TRANSPORT = 3


def _fail(exc: BaseException, code: int) -> int:
    line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
    print(line, file=sys.stderr)
    return code


def _tool_config(args) -> ToolConfig:
    cfg = ToolConfig.from_file(args.config) if getattr(args, "config", None) else ToolConfig()
    preset = getattr(args, "preset", None)
    if preset:
        cfg = cfg.with_preset(preset)
    return cfg


def _chat_client(cfg: ToolConfig) -> ChatClient:
    return ChatClient(cfg.chat_client_config(), model=cfg.chat_model,
                      temperature=cfg.temperature)


def _embed_client(cfg: ToolConfig) -> EmbeddingClient:
    return EmbeddingClient(cfg.embed_client_config(), model=cfg.embed_model)


def _resolver(args, cfg: ToolConfig) -> benchmark.EmbeddingResolver:
    store = load_store(args.query_store) if getattr(args, "query_store", None) else None
    offline = bool(getattr(args, "offline", False))
    client = None if offline else _embed_client(cfg)
    return benchmark.EmbeddingResolver(store, client, offline)


def _cached_or_decompose(text: str, query_id: str, cfg: ToolConfig,
                         cache: DecompositionCache | None,
                         offline: bool) -> DecomposedQuery:
    if cache is not None:
        entry = cache.get(text, cfg.chat_model) or cache.lookup(text, "")
        if entry is not None:
            return entry
    if offline:
        raise MissingDecompositionError(
            f"query {query_id!r} has no cached decomposition and --offline is set"
        )
    entry = decompose(text, _chat_client(cfg), query_id=query_id,
                      max_subqueries=cfg.max_subqueries)
    if cache is not None:
        cache.put(entry)
    return entry


def cmd_decompose(args) -> int:
    cfg = _tool_config(args)
    queries = load_texts_jsonl(args.queries)
    cache = DecompositionCache(args.cache)
    before = len(cache)
    results = decompose_many(
        list(queries.items()),
        _chat_client(cfg),
        cache=cache,
        max_subqueries=cfg.max_subqueries,
        concurrency=cfg.concurrency,
    )
    fresh = len(cache) - before
    print(f"decomposed {len(results)} queries ({fresh} new, "
          f"{len(results) - fresh} cached) -> {args.cache}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    cfg = _tool_config(args)
    texts = load_texts_jsonl(args.docs)
    client = _embed_client(cfg)
    report, _ = ingest_corpus(
        texts,
        client.embed,
        args.out,
        batch_size=cfg.batch_size,
        fmt=args.format,
        model=cfg.embed_model,
        resume=args.resume,
    )
    print(f"ingested {report.total} docs ({report.embedded} embedded, "
          f"{report.reused} reused), dim {report.dim}, "
          f"{report.elapsed_seconds:.2f}s -> {args.out}")
    return EXIT_OK


def cmd_index(args) -> int:
    store = load_store(args.store)
    index = FlatIndex.build(store.items())
    print(f"index ok: {len(index)} docs, dim {index.dim}")
    return EXIT_OK


def _print_trec(query_id: str, ranking, run_tag: str) -> None:
    for rank, (doc_id, score) in enumerate(ranking.items(), start=1):
        print(f"{query_id} Q0 {doc_id} {rank} {score:.6f} {run_tag}")


def cmd_search(args) -> int:
    cfg = _tool_config(args)
    store = load_store(args.store)
    index = FlatIndex.build(store.items())
    resolver = _resolver(args, cfg)
    cache = DecompositionCache(args.cache) if args.cache else None

    if args.query is not None:
        # ad-hoc text has no real id; resolve it by text, not the placeholder
        queries = {"q1": args.query}
        ids_resolve = False
    else:
        queries = load_texts_jsonl(args.queries)
        ids_resolve = True

    run_tag = args.run_tag or ("deo" if args.deo else "baseline")
    for query_id in sorted(queries):
        text = queries[query_id]
        rid = query_id if ids_resolve else None
        if args.deo:
            entry = _cached_or_decompose(text, query_id, cfg, cache, args.offline)
            inputs = DecompositionEmbeddings.from_vectors(
                resolver.resolve(text, record_id=rid),
                [resolver.resolve(t) for t in entry.positives],
                [resolver.resolve(t) for t in entry.negatives],
            )
            embedding, _ = optimize_query_embedding(
                inputs, cfg.optimization_config(steps=args.steps)
            )
        else:
            embedding = resolver.resolve(text, record_id=rid)
        _print_trec(query_id, index.search(embedding, k=args.k), run_tag)
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _tool_config(args)
    resolver = _resolver(args, cfg)
    cache = DecompositionCache(args.cache) if args.cache else None
    entry = _cached_or_decompose(args.query, "q1", cfg, cache, args.offline)
    inputs = DecompositionEmbeddings.from_vectors(
        resolver.resolve(args.query),
        [resolver.resolve(t) for t in entry.positives],
        [resolver.resolve(t) for t in entry.negatives],
    )
    opt_cfg = cfg.optimization_config(steps=args.steps)
    final, trace = optimize_query_embedding(inputs, opt_cfg)

    doc = {
        "query": args.query,
        "positives": list(entry.positives),
        "negatives": list(entry.negatives),
        "steps": opt_cfg.steps,
        "final_loss": float(trace.losses[-1]),
        "embedding": [float(x) for x in final],
    }
    if args.out:
        atomic_write_text(args.out + ".embedding.json",
                          json.dumps(doc, indent=2, sort_keys=True) + "\n")
        lines = ["step,loss"]
        lines += [f"{i},{float(loss)!r}" for i, loss in enumerate(trace.losses)]
        atomic_write_text(args.out + ".trace.csv", "\n".join(lines) + "\n")
        print(f"optimized in {opt_cfg.steps} steps, final loss "
              f"{float(trace.losses[-1]):.6f} -> {args.out}.embedding.json")
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def _benchmark_clients(args, offline: bool):
    if offline:
        return None, None
    tool_cfg = (ToolConfig.from_file(args.tool_config)
                if getattr(args, "tool_config", None) else ToolConfig())
    return _chat_client(tool_cfg), _embed_client(tool_cfg)


def cmd_eval(args) -> int:
    cfg = benchmark.BenchmarkConfig.from_file(args.config)
    if args.offline:
        cfg = replace(cfg, offline=True)
    if args.run_dir:
        cfg = replace(cfg, run_dir=args.run_dir)
    chat_client, embed_client = _benchmark_clients(args, cfg.offline)
    report = benchmark.run_benchmark(cfg, chat_client, embed_client)

    report_json = args.report_json or cfg.report_json
    report_csv = args.report_csv or cfg.report_csv
    if report_json:
        report.write_json(report_json)
    if report_csv:
        report.write_csv(report_csv)
    for system in report.metadata["systems"]:
        for metric in report.metadata["metrics"]:
            print(f"{system} {metric} {report.aggregates[system][metric]:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = benchmark.SweepConfig.from_file(args.config)
    if args.out:
        cfg = replace(cfg, out_csv=args.out)
    chat_client, embed_client = _benchmark_clients(args, cfg.base.offline)
    reports, csv_text = benchmark.sweep(cfg, chat_client, embed_client)
    if cfg.out_csv:
        print(f"swept {len(reports)} grid points -> {cfg.out_csv}")
    else:
        print(csv_text, end="")
    return EXIT_OK


def cmd_trajectory(args) -> int:
    cfg = benchmark.BenchmarkConfig.from_file(args.config)
    chat_client, embed_client = _benchmark_clients(args, cfg.offline)
    runner = benchmark._BenchmarkRunner(cfg, chat_client, embed_client)
    queries = runner.queries
    if args.query_id not in queries:
        raise KeyError(f"query id {args.query_id!r} not in {cfg.queries}")
    text = queries[args.query_id]
    inputs = runner.embedded_decomposition(args.query_id, text)
    opt_cfg = cfg.optimization_config(steps=args.steps)
    _, trace = optimize_query_embedding(inputs, opt_cfg)

    basis = pca_fit(runner.index.unit_vectors(), n_components=2)
    plotted = inputs.normalized() if opt_cfg.normalize_inputs else inputs
    qrels = load_qrels(cfg.qrels)
    export = analysis.export_trajectory(
        trace, plotted, runner.index, qrels.get(args.query_id, {}), basis
    )
    analysis.write_trajectory_csv(export, args.out_prefix + ".csv")
    analysis.write_trajectory_json(export, args.out_prefix + ".json")
    analysis.write_trajectory_svg(export, args.out_prefix + ".svg")
    print(f"gold rank {export.baseline_rank} -> {export.final_rank}; "
          f"wrote {args.out_prefix}.csv/.json/.svg")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deo",
        description="Negation-aware retrieval via direct query-embedding optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat key = value tool config file")
        p.add_argument("--preset", choices=("text", "multimodal"),
                       help="loss-weight preset")

    p = sub.add_parser("decompose", help="queries file -> decomposition cache")
    common(p)
    p.add_argument("--queries", required=True, help="JSONL {id, text} queries file")
    p.add_argument("--cache", required=True, help="output decomposition cache (JSONL)")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("ingest", help="docs file -> embedding store")
    common(p)
    p.add_argument("--docs", required=True, help="JSONL {id, text} documents file")
    p.add_argument("--out", required=True, help="output embedding store path")
    p.add_argument("--format", choices=("jsonl", "binary"), default="jsonl")
    p.add_argument("--resume", action="store_true",
                   help="reuse records already present in --out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="validate a store builds a searchable index")
    common(p)
    p.add_argument("--store", required=True, help="embedding store path")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="query a corpus store, optionally with DEO")
    common(p)
    p.add_argument("--store", required=True, help="corpus embedding store")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--query", help="free-text query")
    group.add_argument("--queries", help="JSONL {id, text} queries file")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--deo", action="store_true",
                   help="decompose and optimize before searching")
    p.add_argument("--offline", action="store_true", help="never touch the network")
    p.add_argument("--query-store", help="embedding store for query/sub-query texts")
    p.add_argument("--cache", help="decomposition cache (JSONL)")
    p.add_argument("--steps", type=int, default=None, help="override optimizer steps")
    p.add_argument("--run-tag", default="", help="tag for TREC output lines")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("optimize", help="optimize one query embedding")
    common(p)
    p.add_argument("--query", required=True)
    p.add_argument("--offline", action="store_true")
    p.add_argument("--query-store", help="embedding store for query/sub-query texts")
    p.add_argument("--cache", help="decomposition cache (JSONL)")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", help="output prefix for .embedding.json/.trace.csv")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("eval", help="run a benchmark config")
    p.add_argument("--config", required=True, help="benchmark config file")
    p.add_argument("--tool-config", help="endpoint settings for online benchmarks")
    p.add_argument("--offline", action="store_true")
    p.add_argument("--report-json", default="")
    p.add_argument("--report-csv", default="")
    p.add_argument("--run-dir", default="")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a weight/step grid")
    p.add_argument("--config", required=True, help="sweep config file")
    p.add_argument("--tool-config", help="endpoint settings for online benchmarks")
    p.add_argument("--out", default="", help="output CSV path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("trajectory", help="export one query's optimization path")
    p.add_argument("--config", required=True, help="benchmark config file")
    p.add_argument("--tool-config", help="endpoint settings for online benchmarks")
    p.add_argument("--query-id", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_trajectory)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except TransportError as exc:
        return _fail(exc, EXIT_TRANSPORT)
    except (DeoError, OSError, KeyError, ValueError) as exc:
        return _fail(exc, EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
