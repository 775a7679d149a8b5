"""Cosine top-k search: exact scan, inverted-file ANN and compact sub-indexes."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .store import (
    ClassTextEmbeddings,
    EmbeddingCorpus,
    load_corpus,
    read_matrix,
    save_corpus,
    write_matrix,
)

KMEANS_ITERS = 25


@dataclass(frozen=True)
class SearchHit:
    id: str
    score: float
    vector: np.ndarray
    row: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class AnnParams:
    nlist: int = 64
    nprobe: int = 8


@dataclass(eq=False)
class VectorIndex:
    """Search structure over an immutable corpus.

    In ``ann`` mode rows are bucketed by nearest k-means centroid and a search
    scans only the ``nprobe`` buckets whose centroids are closest to the query.
    """

    corpus: EmbeddingCorpus
    mode: str = "exact"
    ann_params: AnnParams = field(default_factory=AnnParams)
    centroids: np.ndarray | None = None
    inverted_lists: list[np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("exact", "ann"):
            raise DataError(f"unknown index mode {self.mode!r}")
        self._vectors64 = self.corpus.vectors.astype(np.float64)
        # ties broken by ascending id: precompute each row's rank in id order
        order = np.argsort(np.asarray(self.corpus.ids, dtype=object), kind="stable")
        self._id_rank = np.empty(len(order), dtype=np.int64)
        self._id_rank[order] = np.arange(len(order))

    @property
    def dim(self) -> int:
        return self.corpus.dim

    def __len__(self) -> int:
        return self.corpus.rows

    def with_nprobe(self, nprobe: int) -> "VectorIndex":
        if self.mode != "ann":
            return self
        if not 1 <= nprobe <= self.ann_params.nlist:
            raise DataError(f"nprobe must lie in [1, {self.ann_params.nlist}]")
        clone = VectorIndex.__new__(VectorIndex)
        clone.__dict__.update(self.__dict__)
        clone.ann_params = AnnParams(self.ann_params.nlist, nprobe)
        return clone

    def candidate_rows(self, query: np.ndarray) -> np.ndarray | None:
        """Rows scanned for ``query``; ``None`` means all rows."""
        if self.mode == "exact":
            return None
        d2 = np.sum((self.centroids - query[None, :]) ** 2, axis=1)
        probe = np.argsort(d2, kind="stable")[: self.ann_params.nprobe]
        return np.concatenate([self.inverted_lists[p] for p in probe])

    def scores(self, rows: np.ndarray | None, query: np.ndarray) -> np.ndarray:
        # einsum reduces each row the same way however many rows are scanned,
        # so ann and exact scores for a shared row agree bit for bit (BLAS gemv does not)
        vecs = self._vectors64 if rows is None else self._vectors64[rows]
        return np.einsum("ij,j->i", vecs, query)


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans(
    x: np.ndarray, k: int, seed: int = 0, iters: int = KMEANS_ITERS
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded Lloyd k-means with k-means++ seeding and empty-cluster repair.

    Returns ``(centroids, assignment)``. An empty cluster steals the point of
    the current largest cluster that lies farthest from that cluster's centroid.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if k < 1 or k > n:
        raise DataError(f"k-means needs 1 <= k <= n (k={k}, n={n})")
    rng = np.random.default_rng(seed)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # fewer distinct points than k; fall back to any unused row
            pick = rng.integers(n)
        else:
            pick = int(rng.choice(n, p=closest / total))
        centers[j] = x[pick]
        closest = np.minimum(closest, _sq_dists(x, centers[j : j + 1])[:, 0])

    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        dist = _sq_dists(x, centers)
        assign = np.argmin(dist, axis=1)
        counts = np.bincount(assign, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            big = int(np.argmax(counts))
            members = np.flatnonzero(assign == big)
            far = members[np.argmax(dist[members, big])]
            assign[far] = empty
            counts[big] -= 1
            counts[empty] += 1
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, x)
        centers = sums / counts[:, None]
    assign = np.argmin(_sq_dists(x, centers), axis=1)
    counts = np.bincount(assign, minlength=k)
    for empty in np.flatnonzero(counts == 0):
        big = int(np.argmax(counts))
        members = np.flatnonzero(assign == big)
        far = members[np.argmax(np.sum((x[members] - centers[big]) ** 2, axis=1))]
        assign[far] = empty
        centers[empty] = x[far]
        counts[big] -= 1
        counts[empty] += 1
    return centers, assign


def build_index(
    corpus: EmbeddingCorpus,
    mode: str = "exact",
    ann_params: AnnParams | None = None,
    seed: int = 0,
) -> VectorIndex:
    ann_params = ann_params or AnnParams()
    if mode != "ann":
        return VectorIndex(corpus, mode, ann_params)
    if ann_params.nlist < 1:
        raise DataError("nlist must be >= 1 in ann mode")
    if corpus.rows == 0:
        raise DataError("cannot build an ann index over an empty corpus")
    if ann_params.nlist > corpus.rows:
        raise DataError(f"nlist={ann_params.nlist} exceeds corpus rows={corpus.rows}")
    if not 1 <= ann_params.nprobe <= ann_params.nlist:
        raise DataError("nprobe must lie in [1, nlist]")
    centers, assign = kmeans(corpus.vectors, ann_params.nlist, seed=seed)
    # stored as f32 on disk; round now so a reloaded index probes identically
    centers = centers.astype(np.float32).astype(np.float64)
    lists = [np.flatnonzero(assign == c) for c in range(ann_params.nlist)]
    return VectorIndex(corpus, "ann", ann_params, centers, lists)


def _unit_queries(index: VectorIndex, queries: np.ndarray) -> np.ndarray:
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.ndim != 2 or queries.shape[1] != index.dim:
        raise DataError(f"query dim {queries.shape[-1]} != index dim {index.dim}")
    norms = np.linalg.norm(queries, axis=1)
    if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
        raise DataError("query vector is zero or non-finite")
    return queries / norms[:, None]


def _top_hits(index: VectorIndex, rows: np.ndarray | None, scores: np.ndarray, a: int) -> list[SearchHit]:
    """Best ``a`` of ``scores`` (over ``rows``, or all rows when ``None``)."""
    n = scores.shape[0]
    if n == 0:
        return []
    a = min(a, n)
    if a < n:
        kth = np.partition(scores, n - a)[n - a]
        keep = np.flatnonzero(scores >= kth)
    else:
        keep = np.arange(n)
    global_rows = keep if rows is None else rows[keep]
    order = np.lexsort((index._id_rank[global_rows], -scores[keep]))[:a]
    vectors = index.corpus.vectors
    return [
        SearchHit(
            index.corpus.ids[global_rows[i]],
            float(scores[keep[i]]),
            vectors[global_rows[i]],
            int(global_rows[i]),
        )
        for i in order
    ]


def search(index: VectorIndex, query: np.ndarray, a: int) -> list[SearchHit]:
    """Top-``a`` hits by cosine score, descending, ties by ascending id."""
    if a < 0:
        raise DataError("a must be >= 0")
    query = np.asarray(query, dtype=np.float64)
    if query.ndim != 1:
        raise DataError("search takes a single query vector")
    q = _unit_queries(index, query)[0]
    if a == 0 or len(index) == 0:
        return []
    rows = index.candidate_rows(q)
    return _top_hits(index, rows, index.scores(rows, q), a)


def search_batch(
    index: VectorIndex, queries: np.ndarray, a: int, chunk: int = 256
) -> list[list[SearchHit]]:
    """``search`` for each row of ``queries``.

    Exact mode scores a chunk of queries with one matrix product, so scores
    may differ from single-query ``search`` in the last bits.
    """
    if a < 0:
        raise DataError("a must be >= 0")
    qs = _unit_queries(index, queries)
    if a == 0 or len(index) == 0:
        return [[] for _ in qs]
    if index.mode != "exact":
        out = []
        for q in qs:
            rows = index.candidate_rows(q)
            out.append(_top_hits(index, rows, index.scores(rows, q), a))
        return out
    out: list[list[SearchHit]] = []
    for lo in range(0, len(qs), chunk):
        block = qs[lo : lo + chunk] @ index._vectors64.T
        out.extend(_top_hits(index, None, row, a) for row in block)
    return out


def build_compact_index(
    full: VectorIndex,
    eval_corpus: EmbeddingCorpus,
    text_embeddings: ClassTextEmbeddings,
    per_image_k: int = 20,
    per_class_k: int = 100,
) -> VectorIndex:
    """Exact index over the union of neighbors of every eval row and class name."""
    rows: set[int] = set()
    for hits in search_batch(full, eval_corpus.vectors, per_image_k):
        rows.update(h.row for h in hits)
    labels = sorted(set(eval_corpus.labels))
    if labels:
        text = np.stack([text_embeddings[label] for label in labels])
        for hits in search_batch(full, text, per_class_k):
            rows.update(h.row for h in hits)
    if not rows:
        raise DataError("compact index would be empty")
    return build_index(full.corpus.subset(sorted(rows)), "exact")


def measure_recall(
    reference: VectorIndex,
    candidate: VectorIndex,
    queries: Iterable[np.ndarray],
    a: int,
) -> float:
    """Mean over queries of |top-a(candidate) & top-a(reference)| / a."""
    if a <= 0:
        raise DataError("recall needs a >= 1")
    if reference.dim != candidate.dim:
        raise DataError("indexes disagree on dim")
    recalls = []
    for q in queries:
        ref = {h.id for h in search(reference, q, a)}
        got = {h.id for h in search(candidate, q, a)}
        recalls.append(len(ref & got) / a)
    if not recalls:
        raise DataError("recall needs at least one query")
    return float(np.mean(recalls))


def save_index(index: VectorIndex, path: str | os.PathLike) -> None:
    """Write a JSON descriptor at ``path`` plus corpus/centroid files beside it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    corpus_file = path.with_name(path.stem + ".corpus.rafc")
    save_corpus(index.corpus, corpus_file)
    desc = {
        "mode": index.mode,
        "nlist": index.ann_params.nlist,
        "nprobe": index.ann_params.nprobe,
        "corpus": corpus_file.name,
    }
    if index.mode == "ann":
        centroid_file = path.with_name(path.stem + ".centroids.rafc")
        write_matrix(index.centroids, centroid_file)
        sizes = [len(lst) for lst in index.inverted_lists]
        desc["centroids"] = centroid_file.name
        desc["list_offsets"] = np.concatenate([[0], np.cumsum(sizes)]).astype(int).tolist()
        desc["list_rows"] = np.concatenate(index.inverted_lists).astype(int).tolist()
    path.write_text(json.dumps(desc))


def load_index(path: str | os.PathLike) -> VectorIndex:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such index descriptor")
    try:
        desc = json.loads(path.read_text())
        mode = desc["mode"]
        params = AnnParams(int(desc["nlist"]), int(desc["nprobe"]))
        corpus = load_corpus(path.with_name(desc["corpus"]))
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed index descriptor ({exc})") from None
    if mode != "ann":
        return VectorIndex(corpus, mode, params)
    centroids = read_matrix(path.with_name(desc["centroids"])).astype(np.float64)
    offsets = desc["list_offsets"]
    rows = np.asarray(desc["list_rows"], dtype=np.int64)
    lists = [rows[offsets[i] : offsets[i + 1]] for i in range(len(offsets) - 1)]
    if len(lists) != params.nlist or centroids.shape[0] != params.nlist:
        raise DataError(f"{path}: inverted lists disagree with nlist")
    return VectorIndex(corpus, "ann", params, centroids, lists)
