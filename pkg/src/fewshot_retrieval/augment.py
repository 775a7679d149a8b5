"""Retrieval augmentation of support sets and feature-matrix assembly."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .episodes import Episode, EpisodeConfig
from .errors import DataError
from .index import VectorIndex, search_batch

SUPPORT, RETRIEVED, QUERY = "support", "retrieved", "query"


def compose_query_embedding(
    e_t: np.ndarray, support_vectors: np.ndarray, alpha_t: float
) -> np.ndarray:
    """Blend the class text embedding with the mean support embedding.

    Returns ``normalize(alpha_t * e_t + (1 - alpha_t) * mean(support_vectors))``.
    """
    if not 0.0 <= alpha_t <= 1.0:
        raise DataError("alpha_t must lie in [0, 1]")
    support_vectors = np.atleast_2d(np.asarray(support_vectors, dtype=np.float64))
    if support_vectors.shape[0] < 1:
        raise DataError("need at least one support vector")
    e_t = np.asarray(e_t, dtype=np.float64)
    mixed = alpha_t * e_t + (1.0 - alpha_t) * support_vectors.mean(axis=0)
    norm = np.linalg.norm(mixed)
    if norm <= 1e-12:
        raise DataError("degenerate query: text and support embeddings cancel")
    # already-unit inputs (alpha in {0, 1}) pass through untouched
    if abs(norm - 1.0) <= 1e-6:
        return mixed
    return mixed / norm


@dataclass(frozen=True, eq=False)
class AugmentedEpisode:
    """An episode plus ``A`` retrieved rows per class.

    ``retrieved_vectors`` has shape ``(N, A, d)``; retrieved rows carry the
    label of the class whose query fetched them.
    """

    base: Episode
    retrieved_ids: tuple[tuple[str, ...], ...]
    retrieved_vectors: np.ndarray
    retrieved_scores: np.ndarray

    @property
    def a_augment(self) -> int:
        return self.retrieved_vectors.shape[1]


def augment(episode: Episode, index: VectorIndex, config: EpisodeConfig) -> AugmentedEpisode:
    """Retrieve ``A`` rows per class with query ``E_Q``, skipping the episode's support ids."""
    return augment_batch([episode], index, config)[0]


def augment_batch(
    episodes: Sequence[Episode], index: VectorIndex, config: EpisodeConfig
) -> list[AugmentedEpisode]:
    """``augment`` for several episodes, sharing one batched search."""
    a = config.a_augment
    if a < 0:
        raise DataError("a_augment must be >= 0")
    for ep in episodes:
        if index.dim != ep.dim:
            raise DataError(f"index dim {index.dim} != episode dim {ep.dim}")
    if a == 0:
        return [
            AugmentedEpisode(ep, ((),) * ep.n_way, np.zeros((ep.n_way, 0, ep.dim)), np.zeros((ep.n_way, 0)))
            for ep in episodes
        ]
    queries = [
        compose_query_embedding(
            ep.class_text[c], ep.support_vectors[c * ep.k_shot : (c + 1) * ep.k_shot], config.alpha_t
        )
        for ep in episodes
        for c in range(ep.n_way)
    ]
    found = iter(search_batch(index, np.stack(queries), a + max(ep.k_shot for ep in episodes)))
    out = []
    for ep in episodes:
        n, d = ep.n_way, ep.dim
        support = set(ep.support_ids)
        ids, vecs, scores = [], np.empty((n, a, d)), np.empty((n, a))
        for c in range(n):
            hits = [h for h in next(found) if h.id not in support][:a]
            if len(hits) < a:
                raise DataError(
                    f"index yields only {len(hits)} hits for class {ep.classes[c]!r}, need {a}"
                )
            ids.append(tuple(h.id for h in hits))
            vecs[c] = np.stack([h.vector for h in hits])
            scores[c] = [h.score for h in hits]
        out.append(AugmentedEpisode(ep, tuple(ids), vecs, scores))
    return out


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Design matrix rows with labels, loss weights and origin flags."""

    x: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    origin: np.ndarray

    @property
    def rows(self) -> int:
        return self.x.shape[0]

    @property
    def width(self) -> int:
        return self.x.shape[1]

    def select(self, origin: str) -> "FeatureMatrix":
        mask = self.origin == origin
        return FeatureMatrix(self.x[mask], self.labels[mask], self.weights[mask], self.origin[mask])


def _with_channel(x: np.ndarray, channel: np.ndarray) -> np.ndarray:
    return np.concatenate([x, channel[:, None]], axis=1)


def build_features(
    aug: AugmentedEpisode, similarity_channel: bool = False
) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Stack support rows then retrieved rows (both class-major); queries separately.

    With ``similarity_channel`` an extra column is appended: 1.0 for support
    and query rows, the retrieval score clamped to [0, 1] for retrieved rows.
    """
    ep = aug.base
    n, a, d = ep.n_way, aug.a_augment, ep.dim
    if aug.retrieved_vectors.shape[2] != d:
        raise DataError("retrieved vectors disagree with episode dim")
    n_s = ep.support_vectors.shape[0]
    ret_x = aug.retrieved_vectors.reshape(n * a, d)
    ret_w = np.clip(aug.retrieved_scores.reshape(n * a), 0.0, 1.0)
    x = np.concatenate([ep.support_vectors, ret_x], axis=0)
    weights = np.concatenate([np.ones(n_s), ret_w])
    labels = np.concatenate([ep.support_labels, np.repeat(np.arange(n), a)])
    origin = np.array([SUPPORT] * n_s + [RETRIEVED] * (n * a))
    qx = ep.query_vectors
    if similarity_channel:
        x = _with_channel(x, np.concatenate([np.ones(n_s), ret_w]))
        qx = _with_channel(qx, np.ones(qx.shape[0]))
    support_x = FeatureMatrix(x, labels, weights, origin)
    query_x = FeatureMatrix(
        qx, ep.query_labels.copy(), np.ones(qx.shape[0]), np.array([QUERY] * qx.shape[0])
    )
    return support_x, query_x


def retrieval_purity(aug: AugmentedEpisode, id_to_label: dict[str, str]) -> float:
    """Fraction of retrieved rows whose ground-truth label matches the querying class."""
    total = hits = 0
    for c, ids in enumerate(aug.retrieved_ids):
        for i in ids:
            total += 1
            hits += id_to_label.get(i) == aug.base.classes[c]
    return hits / total if total else 1.0
