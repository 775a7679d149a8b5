"""Embedding corpora: binary storage, metadata manifests and a synthetic generator.

A corpus file is a fixed 20-byte little-endian header followed by a row-major
float32 payload::

    magic   4s   b"RAFC"
    version u32  1
    dim     u32
    count   u64

Row metadata lives in a sidecar JSON manifest next to the binary
(``<path>.json``) with schema ``{"dim", "rows": [{id, label, split}], "classes"}``.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError

MAGIC = b"RAFC"
VERSION = 1
HEADER = struct.Struct("<4sIIQ")
SPLITS = ("train", "val", "test")
NORM_TOL = 1e-4
DISTRACTOR_LABEL = "__distractor__"

# rows already unit-norm to f32 precision are left untouched so save/load is bit-exact
_RENORM_TOL = 1e-6


def manifest_path(path: str | os.PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def normalize_rows(vectors: np.ndarray) -> np.ndarray:
    """L2-normalize rows in f64 and return float32; raises on zero rows."""
    vectors = np.asarray(vectors)
    if vectors.shape[0] == 0:
        return vectors.astype(np.float32)
    norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
    if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
        bad = int(np.flatnonzero((norms == 0.0) | ~np.isfinite(norms))[0])
        raise DataError(f"zero or non-finite vector at row {bad}; cannot normalize")
    off = np.abs(norms - 1.0) > _RENORM_TOL
    out = vectors.astype(np.float32, copy=True)
    if np.any(off):
        out[off] = (vectors[off].astype(np.float64) / norms[off, None]).astype(np.float32)
    return out


@dataclass(frozen=True, eq=False)
class EmbeddingCorpus:
    """Immutable matrix of unit-norm embeddings plus per-row metadata."""

    vectors: np.ndarray
    ids: tuple[str, ...]
    labels: tuple[str, ...]
    splits: tuple[str, ...]
    _by_split: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2:
            raise DataError("vectors must be a 2-d matrix")
        n = self.vectors.shape[0]
        if not (len(self.ids) == len(self.labels) == len(self.splits) == n):
            raise DataError(
                f"row count mismatch: {n} vectors, {len(self.ids)} ids, "
                f"{len(self.labels)} labels, {len(self.splits)} splits"
            )
        if len(set(self.ids)) != n:
            seen: set[str] = set()
            dup = next(i for i in self.ids if i in seen or seen.add(i))
            raise DataError(f"duplicate id {dup!r}")
        bad = set(self.splits) - set(SPLITS)
        if bad:
            raise DataError(f"unknown split(s) {sorted(bad)}")
        if n:
            norms = np.linalg.norm(self.vectors.astype(np.float64), axis=1)
            if np.any(np.abs(norms - 1.0) > NORM_TOL):
                raise DataError("vectors must be unit-norm; use EmbeddingCorpus.build")
        self.vectors.setflags(write=False)

    @classmethod
    def build(
        cls,
        vectors: np.ndarray,
        ids: Sequence[str],
        labels: Sequence[str],
        splits: Sequence[str] | str = "train",
    ) -> "EmbeddingCorpus":
        """Normalize ``vectors`` and wrap them with metadata."""
        vectors = np.asarray(vectors)
        if vectors.ndim != 2:
            raise DataError("vectors must be a 2-d matrix")
        if isinstance(splits, str):
            splits = [splits] * vectors.shape[0]
        return cls(normalize_rows(vectors), tuple(ids), tuple(labels), tuple(splits))

    @classmethod
    def empty(cls, dim: int) -> "EmbeddingCorpus":
        return cls(np.zeros((0, dim), dtype=np.float32), (), (), ())

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def rows(self) -> int:
        return self.vectors.shape[0]

    def __len__(self) -> int:
        return self.rows

    @property
    def classes(self) -> list[str]:
        return sorted(set(self.labels))

    def class_rows(self, split: str) -> dict[str, np.ndarray]:
        """Map label -> row indices (ascending) for rows in ``split``."""
        cached = self._by_split.get(split)
        if cached is None:
            groups: dict[str, list[int]] = {}
            for i, (label, s) in enumerate(zip(self.labels, self.splits)):
                if s == split:
                    groups.setdefault(label, []).append(i)
            cached = {k: np.asarray(v, dtype=np.int64) for k, v in sorted(groups.items())}
            self._by_split[split] = cached
        return cached

    def class_splits(self) -> dict[str, str]:
        return dict(zip(self.labels, self.splits))

    def subset(self, rows: Iterable[int]) -> "EmbeddingCorpus":
        rows = np.asarray(list(rows), dtype=np.int64)
        return EmbeddingCorpus(
            self.vectors[rows].copy(),
            tuple(self.ids[i] for i in rows),
            tuple(self.labels[i] for i in rows),
            tuple(self.splits[i] for i in rows),
        )


@dataclass(frozen=True, eq=False)
class ClassTextEmbeddings:
    """Per-class text embedding (one unit vector per label)."""

    entries: Mapping[str, np.ndarray]

    def __post_init__(self) -> None:
        for label, v in self.entries.items():
            if abs(float(np.linalg.norm(np.asarray(v, dtype=np.float64))) - 1.0) > NORM_TOL:
                raise DataError(f"text embedding for {label!r} is not unit-norm")

    def __getitem__(self, label: str) -> np.ndarray:
        try:
            return self.entries[label]
        except KeyError:
            raise DataError(f"no text embedding for class {label!r}") from None

    def __contains__(self, label: str) -> bool:
        return label in self.entries

    @property
    def labels(self) -> list[str]:
        return list(self.entries)

    def check_covers(self, corpus: EmbeddingCorpus) -> None:
        missing = sorted(set(corpus.labels) - set(self.entries))
        if missing:
            raise DataError(f"missing text embeddings for classes {missing[:5]}")

    def to_corpus(self, class_splits: Mapping[str, str] | None = None) -> EmbeddingCorpus:
        labels = list(self.entries)
        if not labels:
            return EmbeddingCorpus.empty(0)
        splits = [(class_splits or {}).get(label, "train") for label in labels]
        vectors = np.stack([np.asarray(self.entries[k], dtype=np.float32) for k in labels])
        return EmbeddingCorpus.build(vectors, labels, labels, splits)

    @classmethod
    def from_corpus(cls, corpus: EmbeddingCorpus) -> "ClassTextEmbeddings":
        return cls({label: corpus.vectors[i] for i, label in enumerate(corpus.labels)})


def save_corpus(corpus: EmbeddingCorpus, path: str | os.PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(corpus.vectors, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, corpus.dim, corpus.rows))
        fh.write(payload.tobytes())
    manifest = {
        "dim": corpus.dim,
        "rows": [
            {"id": i, "label": lab, "split": s}
            for i, lab, s in zip(corpus.ids, corpus.labels, corpus.splits)
        ],
        "classes": corpus.classes,
    }
    manifest_path(path).write_text(json.dumps(manifest))


def read_header(path: str | os.PathLike) -> tuple[int, int]:
    """Return ``(dim, count)`` after validating magic and version."""
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    if len(raw) != HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, dim, count = HEADER.unpack(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    return dim, count


def write_matrix(matrix: np.ndarray, path: str | os.PathLike) -> None:
    """Write a bare header + float32 payload (no manifest, no normalization)."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, matrix.shape[1], matrix.shape[0]))
        fh.write(matrix.tobytes())


def read_matrix(path: str | os.PathLike) -> np.ndarray:
    dim, count = read_header(path)
    payload = os.path.getsize(path) - HEADER.size
    if payload != count * dim * 4:
        raise DataError(f"{path}: row count mismatch: header declares {count} rows of dim {dim}")
    return np.fromfile(path, dtype="<f4", offset=HEADER.size, count=count * dim).reshape(count, dim)


def load_corpus(path: str | os.PathLike, mmap: bool = False) -> EmbeddingCorpus:
    """Load a corpus file and its manifest, normalizing vectors to unit length."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    dim, count = read_header(path)
    payload = os.path.getsize(path) - HEADER.size
    if payload != count * dim * 4:
        raise DataError(
            f"{path}: row count mismatch: header declares {count} rows of dim {dim}, "
            f"payload holds {payload} bytes"
        )
    mpath = manifest_path(path)
    if not mpath.exists():
        raise DataError(f"{mpath}: manifest missing")
    try:
        manifest = json.loads(mpath.read_text())
        rows = manifest["rows"]
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{mpath}: malformed manifest ({exc})") from None
    if "dim" in manifest and int(manifest["dim"]) != dim:
        raise DataError(f"{path}: dim mismatch: binary {dim}, manifest {manifest['dim']}")
    if len(rows) != count:
        raise DataError(f"{path}: row count mismatch: manifest {len(rows)}, binary {count}")
    if mmap and count:
        vectors = np.memmap(path, dtype="<f4", mode="r", offset=HEADER.size, shape=(count, dim))
    else:
        vectors = np.fromfile(path, dtype="<f4", offset=HEADER.size, count=count * dim)
        vectors = vectors.reshape(count, dim)
    vectors = normalize_rows(np.asarray(vectors, dtype=np.float32))
    try:
        ids = [str(r["id"]) for r in rows]
        labels = [str(r["label"]) for r in rows]
        splits = [str(r.get("split", "train")) for r in rows]
    except (KeyError, TypeError) as exc:
        raise DataError(f"{mpath}: malformed row entry ({exc})") from None
    return EmbeddingCorpus(vectors, tuple(ids), tuple(labels), tuple(splits))


def save_text_embeddings(
    text: ClassTextEmbeddings,
    path: str | os.PathLike,
    class_splits: Mapping[str, str] | None = None,
) -> None:
    save_corpus(text.to_corpus(class_splits), path)


def load_text_embeddings(path: str | os.PathLike) -> ClassTextEmbeddings:
    return ClassTextEmbeddings.from_corpus(load_corpus(path))


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the Gaussian-cluster corpus generator."""

    n_classes: int = 67
    per_class: int = 30
    corpus_per_class: int = 500
    dim: int = 64
    intra_class_noise: float = 0.2
    text_noise: float = 0.1
    distractor_fraction: float = 0.3
    seed: int = 7
    label_prefix: str = "class"

    def validate(self) -> None:
        if self.n_classes < 2:
            raise DataError("n_classes must be >= 2")
        if self.dim < 1:
            raise DataError("dim must be positive")
        if self.per_class < 0 or self.corpus_per_class < 0:
            raise DataError("row counts must be non-negative")
        if self.intra_class_noise < 0 or self.text_noise < 0:
            raise DataError("noise scales must be non-negative")
        if not 0.0 <= self.distractor_fraction < 1.0:
            raise DataError("distractor_fraction must lie in [0, 1)")


def split_classes(n_classes: int, rng: np.random.Generator) -> list[str]:
    """Assign each class index a split, 70/15/15 by class after a seeded shuffle."""
    n_val = int(math.floor(0.15 * n_classes + 0.5))
    n_test = int(math.floor(0.15 * n_classes + 0.5))
    n_train = n_classes - n_val - n_test
    order = rng.permutation(n_classes)
    out = [""] * n_classes
    for rank, c in enumerate(order):
        out[c] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return out


def _noisy(centroid: np.ndarray, sigma: float, count: int, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal((count, centroid.shape[0])) * sigma
    rows = centroid[None, :] + noise
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def generate_synthetic(
    spec: SyntheticSpec,
) -> tuple[EmbeddingCorpus, EmbeddingCorpus, ClassTextEmbeddings]:
    """Draw an evaluation corpus, a retrieval repository and class text embeddings.

    Every class gets a random unit centroid. Evaluation and repository rows
    are ``normalize(centroid + N(0, sigma^2 I))``; the text embedding is the
    centroid perturbed by ``text_noise``. Distractor rows are uniform on the
    sphere and carry the label ``__distractor__``.
    """
    spec.validate()
    streams = np.random.SeedSequence(spec.seed).spawn(6)
    rng_centroid, rng_split, rng_eval, rng_ret, rng_dis, rng_text = (
        np.random.default_rng(s) for s in streams
    )
    width = len(str(spec.n_classes - 1))
    names = [f"{spec.label_prefix}_{c:0{width}d}" for c in range(spec.n_classes)]
    centroids = rng_centroid.standard_normal((spec.n_classes, spec.dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    class_split = split_classes(spec.n_classes, rng_split)

    eval_vecs, eval_ids, eval_labels, eval_splits = [], [], [], []
    ret_vecs, ret_ids, ret_labels, ret_splits = [], [], [], []
    text: dict[str, np.ndarray] = {}
    for c, name in enumerate(names):
        eval_vecs.append(_noisy(centroids[c], spec.intra_class_noise, spec.per_class, rng_eval))
        ret_vecs.append(_noisy(centroids[c], spec.intra_class_noise, spec.corpus_per_class, rng_ret))
        for j in range(spec.per_class):
            eval_ids.append(f"{spec.label_prefix}_e{c:0{width}d}_{j:05d}")
        for j in range(spec.corpus_per_class):
            ret_ids.append(f"{spec.label_prefix}_r{c:0{width}d}_{j:05d}")
        eval_labels += [name] * spec.per_class
        eval_splits += [class_split[c]] * spec.per_class
        ret_labels += [name] * spec.corpus_per_class
        ret_splits += [class_split[c]] * spec.corpus_per_class
        text[name] = _noisy(centroids[c], spec.text_noise, 1, rng_text)[0].astype(np.float32)

    n_class_rows = spec.n_classes * spec.corpus_per_class
    n_dis = int(round(n_class_rows * spec.distractor_fraction / (1.0 - spec.distractor_fraction)))
    if n_dis:
        dis = rng_dis.standard_normal((n_dis, spec.dim))
        ret_vecs.append(dis / np.linalg.norm(dis, axis=1, keepdims=True))
        ret_ids += [f"{spec.label_prefix}_d{j:07d}" for j in range(n_dis)]
        ret_labels += [DISTRACTOR_LABEL] * n_dis
        ret_splits += ["train"] * n_dis

    def _stack(parts: list[np.ndarray]) -> np.ndarray:
        if not parts:
            return np.zeros((0, spec.dim), dtype=np.float32)
        return np.concatenate(parts).astype(np.float32)

    eval_corpus = EmbeddingCorpus(_stack(eval_vecs), tuple(eval_ids), tuple(eval_labels), tuple(eval_splits))
    retrieval = EmbeddingCorpus(_stack(ret_vecs), tuple(ret_ids), tuple(ret_labels), tuple(ret_splits))
    return eval_corpus, retrieval, ClassTextEmbeddings(text)
