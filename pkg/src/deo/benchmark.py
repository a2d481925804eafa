"""Benchmark execution: baseline vs optimized retrieval vs fusion ablations.

A benchmark is one declarative config naming a corpus store, queries, qrels,
a decomposition cache, optimizer settings, and the systems to compare. The
harness is deterministic offline: given cached decompositions and stores it
produces bit-identical reports. Sweeps rerun the same benchmark across a
grid of loss weights and step counts.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import numpy as np

from .config import parse_flat_config, _parse_bool
from .decomposer import DecomposedQuery, DecompositionCache, decompose
from .errors import (
    ConfigError,
    FormatError,
    MissingDecompositionError,
    MissingEmbeddingError,
)
from .index import FlatIndex, RankedList, fuse_mean, rrf_fuse, write_trec_run
from .ioutil import atomic_write_text, load_texts_jsonl
from .metrics import (
    Qrels,
    average_precision_at_k,
    load_qrels,
    ndcg_at_k,
    recall_at_k,
)
from .optimizer import (
    DecompositionEmbeddings,
    OptimizationConfig,
    optimize_query_embedding,
)
from .store import EmbeddingStore, load_store

KNOWN_SYSTEMS = ("baseline", "deo", "avg_only", "rrf_only")
RRF_K = 60.0


def parse_metric_spec(spec: str) -> tuple[str, int]:
    """'ndcg@10' -> ('ndcg', 10); kinds: ndcg, map, recall."""
    name, sep, cutoff = spec.partition("@")
    if not sep:
        raise ConfigError(f"metric {spec!r} lacks an @cutoff")
    name = name.strip().lower()
    if name not in ("ndcg", "map", "recall"):
        raise ConfigError(f"unknown metric kind {name!r}")
    try:
        k = int(cutoff)
    except ValueError:
        raise ConfigError(f"metric {spec!r} has a non-integer cutoff") from None
    if k <= 0:
        raise ConfigError(f"metric {spec!r} cutoff must be positive")
    return name, k


def _compute_metric(spec: str, ranking: RankedList, judgments: dict[str, int]) -> float:
    kind, k = parse_metric_spec(spec)
    if kind == "ndcg":
        return ndcg_at_k(ranking, judgments, k)
    if kind == "map":
        return average_precision_at_k(ranking, judgments, k)
    return recall_at_k(ranking, judgments, k)


def report_timestamp() -> str:
    """UTC ISO-8601 timestamp; SOURCE_DATE_EPOCH pins it for golden files."""
    pinned = os.environ.get("SOURCE_DATE_EPOCH")
    seconds = int(pinned) if pinned else int(time.time())
    return datetime.fromtimestamp(seconds, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class BenchmarkConfig:
    """Declarative benchmark description; paths are absolute after loading."""

    corpus_store: str
    queries: str
    qrels: str
    query_store: str = ""
    cache: str = ""
    systems: tuple[str, ...] = ("baseline", "deo")
    metrics: tuple[str, ...] = ("ndcg@10", "map@100")
    depth: int = 0
    offline: bool = True
    run_dir: str = ""
    report_json: str = ""
    report_csv: str = ""
    model: str = ""
    lambda_p: float = 1.0
    lambda_n: float = 1.0
    lambda_o: float = 0.2
    steps: int = 20
    learning_rate: float = 0.05
    normalize_inputs: bool = True
    config_hash: str = ""

    def __post_init__(self) -> None:
        for system in self.systems:
            if system not in KNOWN_SYSTEMS:
                raise ConfigError(
                    f"unknown system {system!r} (expected one of {', '.join(KNOWN_SYSTEMS)})"
                )
        for spec in self.metrics:
            parse_metric_spec(spec)

    @property
    def search_depth(self) -> int:
        if self.depth > 0:
            return self.depth
        return max(parse_metric_spec(spec)[1] for spec in self.metrics)

    def optimization_config(self, steps: int | None = None) -> OptimizationConfig:
        return OptimizationConfig(
            lambda_p=self.lambda_p,
            lambda_n=self.lambda_n,
            lambda_o=self.lambda_o,
            steps=self.steps if steps is None else steps,
            learning_rate=self.learning_rate,
            normalize_inputs=self.normalize_inputs,
        )

    @classmethod
    def from_file(cls, path) -> "BenchmarkConfig":
        path = os.fspath(path)
        with open(path, "rb") as fh:
            raw = fh.read()
        mapping = parse_flat_config(raw.decode("utf-8"), path)
        base = os.path.dirname(os.path.abspath(path))
        return cls.from_mapping(
            mapping,
            base_dir=base,
            config_hash=hashlib.sha256(raw).hexdigest()[:12],
            path=path,
        )

    @classmethod
    def from_mapping(
        cls, mapping: dict[str, str], base_dir: str = ".", config_hash: str = "", path: str = "<config>"
    ) -> "BenchmarkConfig":
        def resolve(p: str) -> str:
            return p if os.path.isabs(p) else os.path.normpath(os.path.join(base_dir, p))

        kwargs: dict = {"config_hash": config_hash}
        path_keys = {
            "corpus_store", "queries", "qrels", "query_store", "cache",
            "run_dir", "report_json", "report_csv",
        }
        float_keys = {"lambda_p", "lambda_n", "lambda_o", "learning_rate"}
        int_keys = {"depth", "steps"}
        for key, value in mapping.items():
            if key in path_keys:
                kwargs[key] = resolve(value) if value else ""
            elif key in float_keys:
                kwargs[key] = float(value)
            elif key in int_keys:
                kwargs[key] = int(value)
            elif key == "offline" or key == "normalize_inputs":
                kwargs[key] = _parse_bool(value, key)
            elif key == "systems":
                kwargs[key] = tuple(s.strip() for s in value.split(",") if s.strip())
            elif key == "metrics":
                kwargs[key] = tuple(m.strip() for m in value.split(",") if m.strip())
            elif key == "model":
                kwargs[key] = value
            else:
                raise ConfigError(f"{path}: unknown benchmark key {key!r}")
        missing = {"corpus_store", "queries", "qrels"} - set(kwargs)
        if missing:
            raise ConfigError(f"{path}: missing required keys {sorted(missing)}")
        return cls(**kwargs)


class EmbeddingResolver:
    """Looks up embeddings by id or text from a store, else an endpoint.

    Offline mode never touches the network; a miss raises
    MissingEmbeddingError naming the text.
    """

    def __init__(self, store: EmbeddingStore | None = None, client=None, offline: bool = True):
        self.store = store
        self.client = client
        self.offline = offline
        self._memo: dict[str, np.ndarray] = {}

    def resolve(self, text: str, record_id: str | None = None) -> np.ndarray:
        if self.store is not None:
            if record_id is not None and record_id in self.store:
                return self.store.get(record_id)
            if text in self.store:
                return self.store.get(text)
        if text in self._memo:
            return self._memo[text].copy()
        if self.client is not None and not self.offline:
            vec = np.asarray(self.client.embed([text])[0], dtype=np.float64)
            self._memo[text] = vec
            return vec.copy()
        label = record_id or text
        raise MissingEmbeddingError(f"no embedding available for {label!r}")


@dataclass(frozen=True)
class MetricReport:
    """Aggregate and per-query metric values for each evaluated system."""

    metadata: dict
    aggregates: dict
    per_query: dict

    def to_json_obj(self) -> dict:
        return {
            "metadata": self.metadata,
            "aggregates": self.aggregates,
            "per_query": self.per_query,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2, sort_keys=True) + "\n"

    def write_json(self, path) -> None:
        atomic_write_text(path, self.to_json())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["system", "query_id", "metric", "value"])
        systems = self.metadata["systems"]
        metric_names = self.metadata["metrics"]
        for system in systems:
            for query_id in sorted(next(iter(self.per_query[system].values()), {})):
                for metric in metric_names:
                    writer.writerow(
                        [system, query_id, metric, repr(self.per_query[system][metric][query_id])]
                    )
            for metric in metric_names:
                writer.writerow([system, "ALL", metric, repr(self.aggregates[system][metric])])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv())


def _mean(values: list[float]) -> float:
    if not values:
        return 0.0
    return sum(values) / len(values)


class _BenchmarkRunner:
    """Holds loaded data so sweeps can rerun without reloading stores."""

    def __init__(self, cfg: BenchmarkConfig, chat_client=None, embed_client=None):
        self.cfg = cfg
        corpus = load_store(cfg.corpus_store)
        self.corpus_model = corpus.model
        self.index = FlatIndex.build(corpus.items())
        self.queries = load_texts_jsonl(cfg.queries)
        self.qrels: Qrels = load_qrels(cfg.qrels)
        self._check_qrels()
        query_store = load_store(cfg.query_store) if cfg.query_store else None
        self.resolver = EmbeddingResolver(query_store, embed_client, cfg.offline)
        self.cache = DecompositionCache(cfg.cache) if cfg.cache else None
        self.chat_client = chat_client
        self._decompositions: dict[str, DecomposedQuery] = {}

    def _check_qrels(self) -> None:
        known = set(self.index.doc_ids)
        for query_id, judgments in self.qrels.items():
            for doc_id, rel in judgments.items():
                if rel > 0 and doc_id not in known:
                    raise FormatError(
                        f"qrels references doc {doc_id!r} (query {query_id!r}) "
                        "that is not in the corpus store"
                    )

    def decomposition_for(self, query_id: str, text: str) -> DecomposedQuery:
        if query_id in self._decompositions:
            return self._decompositions[query_id]
        entry: DecomposedQuery | None = None
        if self.cache is not None:
            entry = self.cache.lookup(text, self.cfg.model)
        if entry is None:
            if self.chat_client is not None and not self.cfg.offline:
                entry = decompose(text, self.chat_client, query_id=query_id)
                if self.cache is not None:
                    self.cache.put(entry)
            else:
                raise MissingDecompositionError(
                    f"query {query_id!r} has no cached decomposition and the run is offline"
                )
        self._decompositions[query_id] = entry
        return entry

    def embedded_decomposition(self, query_id: str, text: str) -> DecompositionEmbeddings:
        entry = self.decomposition_for(query_id, text)
        original = self.resolver.resolve(text, record_id=query_id)
        positives = [self.resolver.resolve(t) for t in entry.positives]
        negatives = [self.resolver.resolve(t) for t in entry.negatives]
        return DecompositionEmbeddings.from_vectors(original, positives, negatives)

    def rank_query(self, system: str, query_id: str, text: str,
                   opt_cfg: OptimizationConfig, depth: int) -> RankedList:
        if system == "baseline":
            return self.index.search(self.resolver.resolve(text, record_id=query_id), k=depth)
        inputs = self.embedded_decomposition(query_id, text)
        if system == "deo":
            final, _ = optimize_query_embedding(inputs, opt_cfg)
            return self.index.search(final, k=depth)
        if system == "avg_only":
            fused = fuse_mean(
                [inputs.original, *inputs.positives, *inputs.negatives]
            )
            return self.index.search(fused, k=depth)
        if system == "rrf_only":
            sub_vectors = [*inputs.positives, *inputs.negatives]
            if not sub_vectors:
                # nothing to fuse; degrade to the plain query
                return self.index.search(inputs.original, k=depth)
            lists = [self.index.search(v, k=depth) for v in sub_vectors]
            return rrf_fuse(lists, k=depth, k_rrf=RRF_K)
        raise ConfigError(f"unknown system {system!r}")

    def run(self, opt_cfg: OptimizationConfig | None = None) -> MetricReport:
        cfg = self.cfg
        opt_cfg = opt_cfg or cfg.optimization_config()
        depth = cfg.search_depth
        query_ids = sorted(self.queries)
        flagged = [
            qid for qid in query_ids
            if not any(rel > 0 for rel in self.qrels.get(qid, {}).values())
        ]
        scored_ids = [qid for qid in query_ids if qid not in set(flagged)]

        per_query: dict = {}
        aggregates: dict = {}
        rankings_by_system: dict[str, dict[str, RankedList]] = {}
        for system in cfg.systems:
            rankings = {
                qid: self.rank_query(system, qid, self.queries[qid], opt_cfg, depth)
                for qid in query_ids
            }
            rankings_by_system[system] = rankings
            per_query[system] = {}
            aggregates[system] = {}
            for metric in cfg.metrics:
                values = {
                    qid: _compute_metric(metric, rankings[qid], self.qrels.get(qid, {}))
                    for qid in query_ids
                }
                per_query[system][metric] = values
                aggregates[system][metric] = _mean([values[qid] for qid in scored_ids])

        if cfg.run_dir:
            os.makedirs(cfg.run_dir, exist_ok=True)
            for system, rankings in rankings_by_system.items():
                write_trec_run(
                    os.path.join(cfg.run_dir, f"{system}.run"), rankings, run_tag=system
                )

        metadata = {
            "config_hash": cfg.config_hash,
            "timestamp": report_timestamp(),
            "corpus_model": self.corpus_model,
            "chat_model": cfg.model,
            "systems": list(cfg.systems),
            "metrics": list(cfg.metrics),
            "depth": depth,
            "optimizer": {
                "lambda_p": opt_cfg.lambda_p,
                "lambda_n": opt_cfg.lambda_n,
                "lambda_o": opt_cfg.lambda_o,
                "steps": opt_cfg.steps,
                "learning_rate": opt_cfg.learning_rate,
                "normalize_inputs": opt_cfg.normalize_inputs,
            },
            "queries_without_relevant": flagged,
        }
        return MetricReport(metadata=metadata, aggregates=aggregates, per_query=per_query)


def run_benchmark(cfg: BenchmarkConfig, chat_client=None, embed_client=None) -> MetricReport:
    """Evaluate every configured system and return the metric report.

    Writes TREC run files when cfg.run_dir is set; report files are the
    caller's job (the CLI handles them), keeping this function pure apart
    from runs.
    """
    return _BenchmarkRunner(cfg, chat_client, embed_client).run()


@dataclass(frozen=True)
class SweepConfig:
    """Grid of loss-weight triples and step counts over one benchmark."""

    base: BenchmarkConfig
    lambda_triples: tuple[tuple[float, float, float], ...]  # (lambda_o, lambda_p, lambda_n)
    steps_list: tuple[int, ...]
    out_csv: str = ""

    @classmethod
    def from_file(cls, path) -> "SweepConfig":
        path = os.fspath(path)
        with open(path, "rb") as fh:
            raw = fh.read()
        mapping = parse_flat_config(raw.decode("utf-8"), path)
        base_dir = os.path.dirname(os.path.abspath(path))

        lambdas_value = mapping.pop("lambdas", "")
        steps_value = mapping.pop("steps_list", "")
        out_csv = mapping.pop("sweep_csv", "")
        cfg = BenchmarkConfig.from_mapping(
            mapping,
            base_dir=base_dir,
            config_hash=hashlib.sha256(raw).hexdigest()[:12],
            path=path,
        )

        triples: list[tuple[float, float, float]] = []
        if lambdas_value:
            for chunk in lambdas_value.split(";"):
                chunk = chunk.strip()
                if not chunk:
                    continue
                parts = [p.strip() for p in chunk.split(":")]
                if len(parts) != 3:
                    raise ConfigError(
                        f"{path}: lambda triple {chunk!r} must be lambda_o:lambda_p:lambda_n"
                    )
                try:
                    triples.append((float(parts[0]), float(parts[1]), float(parts[2])))
                except ValueError:
                    raise ConfigError(f"{path}: non-numeric lambda in {chunk!r}") from None
        if not triples:
            triples = [(cfg.lambda_o, cfg.lambda_p, cfg.lambda_n)]

        steps_list: list[int] = []
        if steps_value:
            for chunk in steps_value.split(","):
                chunk = chunk.strip()
                if not chunk:
                    continue
                try:
                    steps_list.append(int(chunk))
                except ValueError:
                    raise ConfigError(f"{path}: non-integer steps {chunk!r}") from None
        if not steps_list:
            steps_list = [cfg.steps]

        if not os.path.isabs(out_csv) and out_csv:
            out_csv = os.path.normpath(os.path.join(base_dir, out_csv))
        return cls(
            base=cfg,
            lambda_triples=tuple(triples),
            steps_list=tuple(steps_list),
            out_csv=out_csv,
        )


def sweep(cfg: SweepConfig, chat_client=None, embed_client=None) -> tuple[list[MetricReport], str]:
    """Run the benchmark once per grid point.

    Returns the reports (grid order: lambda triples outer, steps inner) and
    a CSV whose rows are lambda_o, lambda_p, lambda_n, steps, then the
    optimized system's aggregate for each configured metric.
    """
    if "deo" not in cfg.base.systems:
        raise ConfigError("sweep requires the 'deo' system in the benchmark config")
    runner = _BenchmarkRunner(cfg.base, chat_client, embed_client)
    reports: list[MetricReport] = []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["lambda_o", "lambda_p", "lambda_n", "steps", *cfg.base.metrics]
    )
    for lambda_o, lambda_p, lambda_n in cfg.lambda_triples:
        for steps in cfg.steps_list:
            point = replace(
                cfg.base,
                lambda_o=lambda_o,
                lambda_p=lambda_p,
                lambda_n=lambda_n,
                steps=steps,
                run_dir="",
            )
            runner.cfg = point
            report = runner.run(point.optimization_config())
            reports.append(report)
            writer.writerow(
                [
                    repr(lambda_o),
                    repr(lambda_p),
                    repr(lambda_n),
                    steps,
                    *(repr(report.aggregates["deo"][m]) for m in cfg.base.metrics),
                ]
            )
    csv_text = buf.getvalue()
    if cfg.out_csv:
        atomic_write_text(cfg.out_csv, csv_text)
    return reports, csv_text
