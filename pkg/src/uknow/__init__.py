"""uknow: build, persist, and reason over five-view multimodal knowledge graphs.

Pipeline: parse corpora (image-text pairs and labeled news), validate
per-item feature manifests, assign level-tagged node ids, materialize
coded edges for the five knowledge views, persist/split/measure the
graph, train translation embeddings with an optional neighbor-aggregation
plug-in, and compute knowledge-augmented similarity and retrieval metrics.
"""

__version__ = "0.1.0"

from .corpus import (
    EVENT_CATEGORIES,
    CorpusSummary,
    NewsRecord,
    PairRecord,
    parse_news_manifest,
    parse_pair_manifest,
    split_event,
    validate_corpus,
)
from .errors import (
    CorruptStoreError,
    DanglingEdgeError,
    DanglingOwnerError,
    DivergenceError,
    DuplicateIdError,
    InvalidEventError,
    MalformedLineError,
    MissingManifestError,
    RegistryViolationError,
    SchemaError,
    UKnowError,
    UndefinedSimilarityError,
    UnknownCodeError,
)
from .features import (
    Detection,
    EntityMention,
    FeatureRecord,
    FeatureStore,
    Owner,
    cosine,
    load_feature_manifest,
    stub_detections,
    stub_entities,
    stub_featurize,
)
from .symbolize import (
    EdgeRegistry,
    NodeId,
    NodeTable,
    Origin,
    RegistryEntry,
    assign_nodes,
    edge_registry,
)
from .construct import (
    Edge,
    Graph,
    assemble_graph,
    build_annotation_edges,
    build_graph,
    build_internal_edges,
    build_similarity_edges,
)
from .store import (
    Split,
    Stats,
    SweepPoint,
    compute_stats,
    load_graph,
    load_split,
    save_graph,
    save_split,
    split,
    tau_sweep,
)
from .plugin import (
    PluginParams,
    build_neighbor_lists,
    init_plugin,
    plugin_backward,
    plugin_forward,
)
from .reasoning import (
    EmbeddingTable,
    Model,
    TrainConfig,
    TripleQuery,
    TripleSet,
    evaluate,
    init_embeddings,
    load_model,
    margin_loss,
    metrics_from_ranks,
    neighbor_aggregate,
    rank_answer,
    save_model,
    train,
    transe_score,
)
from .scoring import (
    KnowledgeEmbedding,
    build_zk,
    classification_eval,
    fact_retrieval_inputs,
    retrieval_eval,
    score_tik,
    score_tik_terms,
)
