import numpy as np
import pytest

from fewshot_retrieval import EmbeddingCorpus, SyntheticSpec, build_compact_index, build_index, generate_synthetic
from fewshot_retrieval.learners.training import Dataset

# a zero-noise world small enough to train on in seconds
ZERO_NOISE = SyntheticSpec(
    n_classes=30, per_class=8, corpus_per_class=20, intra_class_noise=0.0, text_noise=0.0,
    distractor_fraction=0.0, seed=11,
)


def make_dataset(spec: SyntheticSpec, name: str = "syn") -> Dataset:
    eval_corpus, retrieval, text = generate_synthetic(spec)
    compact = build_compact_index(build_index(retrieval), eval_corpus, text)
    return Dataset(name, eval_corpus, text, compact)


@pytest.fixture(scope="session")
def fixed_world():
    """The fixed synthetic spec: eval corpus, retrieval corpus, text, full exact index."""
    eval_corpus, retrieval, text = generate_synthetic(SyntheticSpec())
    return eval_corpus, retrieval, text, build_index(retrieval)


@pytest.fixture(scope="session")
def fixed_dataset(fixed_world):
    eval_corpus, _, text, full = fixed_world
    return Dataset("syn", eval_corpus, text, build_compact_index(full, eval_corpus, text))


@pytest.fixture(scope="session")
def zero_noise_dataset():
    return make_dataset(ZERO_NOISE, "zero")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_corpus(rng, n=1000, dim=16, n_labels=5, prefix="r") -> EmbeddingCorpus:
    ids = [f"{prefix}{i:05d}" for i in range(n)]
    labels = [f"c{i % n_labels}" for i in range(n)]
    return EmbeddingCorpus.build(rng.standard_normal((n, dim)), ids, labels)


# criterion number -> one PASS/FAIL line, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
