import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fewshot_retrieval import DataError, EmbeddingCorpus, SyntheticSpec, generate_synthetic, load_corpus, save_corpus
from fewshot_retrieval.store import (
    DISTRACTOR_LABEL,
    HEADER,
    ClassTextEmbeddings,
    load_text_embeddings,
    manifest_path,
    read_header,
    save_text_embeddings,
    split_classes,
)


def test_axis_rows_are_normalized_on_load(tmp_path):
    raw = np.array([[1, 0, 0, 0], [0, 2, 0, 0], [0, 0, 0, 3]], dtype=np.float32)
    corpus = EmbeddingCorpus.build(raw, ["a", "b", "c"], ["x", "y", "z"])
    save_corpus(corpus, tmp_path / "c.rafc")
    loaded = load_corpus(tmp_path / "c.rafc")
    np.testing.assert_array_equal(loaded.vectors, np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1]]))


def test_unnormalized_payload_is_normalized_at_load(tmp_path):
    path = tmp_path / "raw.rafc"
    save_corpus(EmbeddingCorpus.build(np.eye(2), ["a", "b"], ["x", "y"]), path)
    data = bytearray(path.read_bytes())
    data[HEADER.size : HEADER.size + 8] = np.array([3.0, 4.0], dtype="<f4").tobytes()
    path.write_bytes(bytes(data))
    np.testing.assert_allclose(load_corpus(path).vectors[0], [0.6, 0.8], atol=1e-7)


def test_manifest_with_extra_ids_is_row_count_mismatch(tmp_path):
    path = tmp_path / "c.rafc"
    save_corpus(EmbeddingCorpus.build(np.eye(3)[:2], ["a", "b"], ["x", "x"]), path)
    meta = json.loads(manifest_path(path).read_text())
    meta["rows"].append({"id": "c", "label": "x", "split": "train"})
    manifest_path(path).write_text(json.dumps(meta))
    with pytest.raises(DataError, match="row count mismatch"):
        load_corpus(path)


def test_truncated_payload_is_rejected(tmp_path):
    path = tmp_path / "c.rafc"
    save_corpus(EmbeddingCorpus.build(np.eye(3), ["a", "b", "c"], ["x"] * 3), path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(DataError):
        load_corpus(path)


def test_bad_magic_and_dim_mismatch(tmp_path):
    path = tmp_path / "c.rafc"
    save_corpus(EmbeddingCorpus.build(np.eye(3), ["a", "b", "c"], ["x"] * 3), path)
    meta = json.loads(manifest_path(path).read_text())
    meta["dim"] = 4
    manifest_path(path).write_text(json.dumps(meta))
    with pytest.raises(DataError, match="dim mismatch"):
        load_corpus(path)
    path.write_bytes(b"NOPE" + path.read_bytes()[4:])
    with pytest.raises(DataError):
        read_header(path)


def test_duplicate_ids_and_zero_vectors_are_errors():
    with pytest.raises(DataError, match="duplicate id"):
        EmbeddingCorpus.build(np.eye(2), ["a", "a"], ["x", "y"])
    with pytest.raises(DataError, match="zero"):
        EmbeddingCorpus.build(np.zeros((1, 3)), ["a"], ["x"])


def test_empty_and_single_row_files(tmp_path):
    save_corpus(EmbeddingCorpus.empty(8), tmp_path / "e.rafc")
    empty = load_corpus(tmp_path / "e.rafc")
    assert empty.rows == 0 and empty.dim == 8
    assert read_header(tmp_path / "e.rafc") == (8, 0)

    one = EmbeddingCorpus.build(np.ones((1, 8)), ["a"], ["x"])
    save_corpus(one, tmp_path / "one.rafc")
    assert (tmp_path / "one.rafc").stat().st_size == HEADER.size + 8 * 4


def test_large_round_trip_checksum(tmp_path, rng):
    corpus = EmbeddingCorpus.build(
        rng.standard_normal((10_000, 32)), [f"i{j}" for j in range(10_000)], ["x"] * 10_000
    )
    path = tmp_path / "big.rafc"
    save_corpus(corpus, path)
    for mmap in (False, True):
        loaded = load_corpus(path, mmap=mmap)
        assert hashlib.sha256(loaded.vectors.tobytes()).digest() == hashlib.sha256(corpus.vectors.tobytes()).digest()
        assert loaded.ids == corpus.ids and loaded.labels == corpus.labels


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(1, 20),
    dim=st.integers(1, 9),
    seed=st.integers(0, 2**32 - 1),
    splits=st.lists(st.sampled_from(["train", "val", "test"]), min_size=20, max_size=20),
)
def test_save_load_is_identity(tmp_path_factory, n, dim, seed, splits):
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, dim))
    x[np.linalg.norm(x, axis=1) == 0] = 1.0
    corpus = EmbeddingCorpus.build(x, [f"id{i}" for i in range(n)], [f"l{i % 3}" for i in range(n)], splits[:n])
    path = tmp_path_factory.mktemp("rt") / "c.rafc"
    save_corpus(corpus, path)
    loaded = load_corpus(path)
    assert loaded.vectors.tobytes() == corpus.vectors.tobytes()
    assert (loaded.ids, loaded.labels, loaded.splits) == (corpus.ids, corpus.labels, corpus.splits)
    assert np.all(np.abs(np.linalg.norm(loaded.vectors.astype(np.float64), axis=1) - 1) <= 1e-4)


def test_text_embeddings_round_trip(tmp_path):
    text = ClassTextEmbeddings({"a": np.array([1.0, 0.0], np.float32), "b": np.array([0.0, 1.0], np.float32)})
    save_text_embeddings(text, tmp_path / "t.rafc")
    back = load_text_embeddings(tmp_path / "t.rafc")
    assert back.labels == ["a", "b"]
    np.testing.assert_array_equal(back["b"], [0.0, 1.0])
    with pytest.raises(DataError):
        back["missing"]


def test_synthetic_is_a_pure_function_of_its_spec():
    spec = SyntheticSpec(n_classes=12, per_class=6, corpus_per_class=15)
    first, second = generate_synthetic(spec), generate_synthetic(spec)
    for a, b in zip(first[:2], second[:2]):
        assert a.vectors.tobytes() == b.vectors.tobytes()
        assert (a.ids, a.labels, a.splits) == (b.ids, b.labels, b.splits)
    assert all(np.array_equal(first[2][k], second[2][k]) for k in first[2].labels)


def test_zero_noise_rows_equal_centroid_and_text():
    spec = SyntheticSpec(n_classes=6, per_class=4, corpus_per_class=5, intra_class_noise=0, text_noise=0)
    eval_corpus, retrieval, text = generate_synthetic(spec)
    for label, row in zip(eval_corpus.labels, eval_corpus.vectors):
        np.testing.assert_array_equal(row, text[label])
    for label, row in zip(retrieval.labels, retrieval.vectors):
        if label != DISTRACTOR_LABEL:
            np.testing.assert_array_equal(row, text[label])


def test_distractor_bookkeeping():
    spec = SyntheticSpec(n_classes=5, per_class=2, corpus_per_class=7, distractor_fraction=0.0)
    assert generate_synthetic(spec)[1].rows == 35
    _, ret, _ = generate_synthetic(SyntheticSpec(n_classes=5, per_class=2, corpus_per_class=7))
    assert ret.labels.count(DISTRACTOR_LABEL) == round(35 * 0.3 / 0.7)


def test_splits_partition_classes():
    eval_corpus, _, _ = generate_synthetic(SyntheticSpec())
    by_split = {s: set(eval_corpus.class_rows(s)) for s in ("train", "val", "test")}
    assert {s: len(c) for s, c in by_split.items()} == {"train": 47, "val": 10, "test": 10}
    assert not (by_split["train"] & by_split["val"]) and not (by_split["val"] & by_split["test"])
    assert split_classes(20, np.random.default_rng(0)).count("test") == 3


def test_small_noise_rows_sit_nearest_their_own_centroid():
    spec = SyntheticSpec(n_classes=40, per_class=20, corpus_per_class=1, intra_class_noise=0.05, text_noise=0)
    eval_corpus, _, text = generate_synthetic(spec)
    centroids = np.stack([text[c] for c in text.labels])
    nearest = np.argmax(eval_corpus.vectors @ centroids.T, axis=1)
    assert [text.labels[i] for i in nearest] == list(eval_corpus.labels)


def test_invalid_specs():
    for bad in (dict(n_classes=1), dict(intra_class_noise=-1), dict(distractor_fraction=1.0)):
        with pytest.raises(DataError):
            generate_synthetic(SyntheticSpec(**bad))
