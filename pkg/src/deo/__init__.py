"""Training-free negation-aware retrieval via direct query-embedding optimization.

The pipeline: decompose a query into positive/negative sub-queries with a
chat model, embed everything through a frozen encoder endpoint, optimize the
query embedding against a contrastive objective, and search an exact flat
cosine index with the result.
"""

from .analysis import TrajectoryExport, export_trajectory, render_svg
from .benchmark import (
    BenchmarkConfig,
    EmbeddingResolver,
    MetricReport,
    SweepConfig,
    run_benchmark,
    sweep,
)
from .clients import ChatClient, ClientConfig, EmbeddingClient
from .config import ToolConfig
from .decomposer import (
    DecomposedQuery,
    DecompositionCache,
    build_decomposition_prompt,
    decompose,
    decompose_many,
    parse_decomposition_response,
)
from .errors import (
    ConfigError,
    DeoError,
    DimensionMismatchError,
    DuplicateIdError,
    EmptyBatchError,
    EmptyInputError,
    EmptyListError,
    EmptyQueryError,
    FormatError,
    InsufficientDataError,
    MissingDecompositionError,
    MissingEmbeddingError,
    MissingGoldError,
    NotStronglyConvexError,
    ParseError,
    TransportError,
    ZeroVectorError,
)
from .index import FlatIndex, RankedList, fuse_mean, rrf_fuse, write_trec_run
from .metrics import (
    PairwiseInstance,
    average_precision_at_k,
    load_qrels,
    ndcg_at_k,
    pairwise_score,
    recall_at_k,
)
from .optimizer import (
    DecompositionEmbeddings,
    OptimizationConfig,
    OptimizationTrace,
    closed_form_optimum,
    convexity_margin,
    deo_gradient,
    deo_loss,
    multimodal_preset,
    optimize_query_embedding,
    text_preset,
)
from .store import EmbeddingStore, IngestReport, embed_texts, ingest_corpus, load_store, save_store
from .vecmath import (
    PcaBasis,
    cosine_similarity,
    l2_normalize,
    pca_fit,
    pca_project,
    squared_euclidean,
)

__version__ = "0.1.0"
