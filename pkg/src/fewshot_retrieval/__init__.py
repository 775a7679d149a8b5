"""Retrieval-augmented few-shot classification over precomputed embeddings."""

from .augment import (
    AugmentedEpisode,
    FeatureMatrix,
    augment,
    augment_batch,
    build_features,
    compose_query_embedding,
)
from .episodes import Episode, EpisodeConfig, sample_batch, sample_episode
from .errors import DataError, NumericError
from .index import (
    SearchHit,
    VectorIndex,
    build_compact_index,
    build_index,
    measure_recall,
    search,
    search_batch,
)
from .store import (
    ClassTextEmbeddings,
    EmbeddingCorpus,
    SyntheticSpec,
    generate_synthetic,
    load_corpus,
    save_corpus,
)

__version__ = "0.1.0"
