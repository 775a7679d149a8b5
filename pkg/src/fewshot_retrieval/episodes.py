"""Seeded N-way K-shot episode sampling."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DataError
from .store import ClassTextEmbeddings, EmbeddingCorpus

# stream tags keep the per-purpose RNG keys disjoint
STREAMS = {"train": 0, "val": 1, "test": 2, "init": 3}
A_SWEEP = (0, 1, 2, 5, 20, 50)


@dataclass(frozen=True)
class EpisodeConfig:
    n_way: int = 10
    k_shot: int = 1
    q_query: int = 5
    a_augment: int = 0
    alpha_t: float = 0.8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_way < 2:
            raise DataError("n_way must be >= 2")
        if self.k_shot < 1 or self.q_query < 1:
            raise DataError("k_shot and q_query must be >= 1")
        if self.a_augment < 0:
            raise DataError("a_augment must be >= 0")
        if not 0.0 <= self.alpha_t <= 1.0:
            raise DataError("alpha_t must lie in [0, 1]")

    def with_(self, **changes) -> "EpisodeConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Episode:
    """One N-way task. Rows are class-major: class 0's rows first, then class 1's..."""

    classes: tuple[str, ...]
    support_ids: tuple[str, ...]
    support_vectors: np.ndarray
    support_labels: np.ndarray
    query_ids: tuple[str, ...]
    query_vectors: np.ndarray
    query_labels: np.ndarray
    class_text: np.ndarray

    @property
    def n_way(self) -> int:
        return len(self.classes)

    @property
    def k_shot(self) -> int:
        return len(self.support_ids) // self.n_way

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]


def episode_rng(seed: int, stream: str | int, index: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream, index)``."""
    tag = STREAMS[stream] if isinstance(stream, str) else int(stream)
    key = np.random.SeedSequence([int(seed) & (2**64 - 1), tag, int(index)])
    return np.random.Generator(np.random.Philox(key))


def eligible_classes(corpus: EmbeddingCorpus, split: str, min_rows: int) -> list[str]:
    return [c for c, rows in corpus.class_rows(split).items() if len(rows) >= min_rows]


def sample_episode(
    corpus: EmbeddingCorpus,
    text: ClassTextEmbeddings,
    split: str,
    config: EpisodeConfig,
    episode_index: int,
) -> Episode:
    by_class = corpus.class_rows(split)
    need = config.k_shot + config.q_query
    if len(by_class) < config.n_way:
        raise DataError(
            f"split {split!r} has {len(by_class)} classes, episode needs {config.n_way}"
        )
    short = [c for c, rows in by_class.items() if len(rows) < need]
    if short:
        raise DataError(f"class {short[0]!r} has fewer than K+Q={need} rows in split {split!r}")

    rng = episode_rng(config.seed, split, episode_index)
    names = list(by_class)
    chosen = [names[i] for i in rng.choice(len(names), size=config.n_way, replace=False)]
    support_rows, query_rows = [], []
    for label in chosen:
        rows = rng.choice(by_class[label], size=need, replace=False)
        support_rows.append(rows[: config.k_shot])
        query_rows.append(rows[config.k_shot :])
    s = np.concatenate(support_rows)
    q = np.concatenate(query_rows)
    vectors = corpus.vectors
    return Episode(
        classes=tuple(chosen),
        support_ids=tuple(corpus.ids[i] for i in s),
        support_vectors=vectors[s].astype(np.float64),
        support_labels=np.repeat(np.arange(config.n_way), config.k_shot),
        query_ids=tuple(corpus.ids[i] for i in q),
        query_vectors=vectors[q].astype(np.float64),
        query_labels=np.repeat(np.arange(config.n_way), config.q_query),
        class_text=np.stack([np.asarray(text[c], dtype=np.float64) for c in chosen]),
    )


def sample_batch(
    corpus: EmbeddingCorpus,
    text: ClassTextEmbeddings,
    split: str,
    config: EpisodeConfig,
    first_index: int,
    batch_size: int,
) -> list[Episode]:
    """``batch_size`` episodes with consecutive indices starting at ``first_index``."""
    return [
        sample_episode(corpus, text, split, config, first_index + j) for j in range(batch_size)
    ]


def episode_queries(
    corpus: EmbeddingCorpus,
    text: ClassTextEmbeddings,
    split: str,
    config: EpisodeConfig,
    n_queries: int,
) -> np.ndarray:
    """Retrieval query vectors (one per class per episode) from consecutive episodes."""
    from .augment import compose_query_embedding

    out: list[np.ndarray] = []
    i = 0
    while len(out) < n_queries:
        ep = sample_episode(corpus, text, split, config, i)
        k = ep.k_shot
        for c in range(ep.n_way):
            out.append(
                compose_query_embedding(
                    ep.class_text[c], ep.support_vectors[c * k : (c + 1) * k], config.alpha_t
                )
            )
        i += 1
    return np.stack(out[:n_queries])
