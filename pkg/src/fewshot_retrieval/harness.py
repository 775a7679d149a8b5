"""Experiment runners: augmentation sweep, retrieval meta-learning ablation, cross-evaluation."""

from __future__ import annotations

import csv
import logging
import os
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .episodes import A_SWEEP, EpisodeConfig
from .errors import DataError
from .index import load_index
from .learners.training import (
    META_RETRIEVAL,
    Dataset,
    TrainSettings,
    check_choice,
    evaluate,
    feature_width,
    train_model,
)
from .store import load_corpus, load_text_embeddings

log = logging.getLogger(__name__)

EXPERIMENTS = ("sweep", "ablation", "cross-eval")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    dataset_a: Dataset
    dataset_b: Dataset | None = None
    methods: tuple[str, ...] = ("lr", "maml", "protonet")
    a_sweep: tuple[int, ...] = A_SWEEP
    meta_retrieval: str = "none"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    episode: EpisodeConfig = EpisodeConfig()
    settings: TrainSettings = TrainSettings()

    def __post_init__(self) -> None:
        if self.name not in EXPERIMENTS:
            raise DataError(f"unknown experiment {self.name!r}")
        if not self.a_sweep:
            raise DataError("a_sweep must not be empty")
        if any(a < 0 for a in self.a_sweep):
            raise DataError("every A must be >= 0")
        if not self.methods or not self.seeds:
            raise DataError("need at least one method and one seed")
        for m in self.methods:
            check_choice(m, self.meta_retrieval)
        if self.name == "cross-eval" and self.dataset_b is None:
            raise DataError("cross-eval needs a second dataset")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    dataset_train: str
    dataset_eval: str
    method: str
    A: int
    meta_retrieval: str
    seed: int
    test_accuracy: float
    accuracy_std: float
    wall_time_seconds: float
    input_width: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.test_accuracy <= 1.0:
            raise DataError(f"accuracy {self.test_accuracy} outside [0, 1]")

    def sort_key(self) -> tuple:
        return (self.experiment, self.method, self.A, self.seed,
                self.meta_retrieval, self.dataset_train, self.dataset_eval)


COLUMNS = tuple(f.name for f in fields(ResultRow))


def load_dataset(
    name: str, corpus: str | os.PathLike, text_embeddings: str | os.PathLike, index: str | os.PathLike
) -> Dataset:
    """Eval corpus, class text embeddings and a saved retrieval index."""
    ds = Dataset(name, load_corpus(corpus), load_text_embeddings(text_embeddings), load_index(index))
    ds.text.check_covers(ds.corpus)
    if ds.index.dim != ds.corpus.dim:
        raise DataError(f"{name}: index dim {ds.index.dim} != corpus dim {ds.corpus.dim}")
    return ds


def _cells(spec: ExperimentSpec, method: str) -> list[int]:
    # zero-shot uses neither support nor retrieved rows, so A collapses to 0
    return [0] if method == "zs" else sorted(set(spec.a_sweep))


def _train_and_eval(
    spec: ExperimentSpec,
    method: str,
    a: int,
    seed: int,
    meta_retrieval: str,
    train_ds: Dataset,
    eval_sets: Sequence[Dataset],
) -> list[ResultRow]:
    cfg = spec.episode.with_(a_augment=a, seed=seed)
    start = time.perf_counter()
    model = train_model(method, train_ds, cfg, spec.settings, meta_retrieval)
    trained = time.perf_counter() - start
    width = 0 if method == "zs" else feature_width(train_ds.corpus.dim, meta_retrieval)
    rows = []
    for ds in eval_sets:
        t0 = time.perf_counter()
        acc = evaluate(model, ds, cfg, spec.settings)
        rows.append(ResultRow(
            spec.name, train_ds.name, ds.name, method, a, meta_retrieval, seed,
            float(acc.mean()), float(acc.std()), trained + time.perf_counter() - t0, width,
        ))
        log.info("%s %s A=%d seed=%d %s->%s acc=%.4f", spec.name, method, a, seed,
                 train_ds.name, ds.name, acc.mean())
    return rows


def _grid(spec: ExperimentSpec, meta_levels: Sequence[str]) -> list[ResultRow]:
    methods = list(spec.methods)
    jobs = []
    for method in methods:
        # ZS has no learner to feed retrieval features to
        levels = ["none"] if method == "zs" else meta_levels
        jobs += [(a, seed, meta, method) for meta in levels for a in _cells(spec, method) for seed in spec.seeds]
    if "lr" in methods and 0 not in spec.a_sweep:
        # LR at A=0 is the reference line every sweep is read against
        jobs += [(0, seed, "none", "lr") for seed in spec.seeds]
    rows: list[ResultRow] = []
    # grouped by (A, seed, meta) so consecutive models reuse the cached episode features
    for a, seed, meta, method in sorted(jobs, key=lambda j: j[:3]):
        rows += _train_and_eval(spec, method, a, seed, meta, spec.dataset_a, [spec.dataset_a])
    return sorted(rows, key=ResultRow.sort_key)


def run_sweep(spec: ExperimentSpec) -> list[ResultRow]:
    """One row per (method, A, seed); ZS once per seed."""
    return _grid(spec, [spec.meta_retrieval])


def run_ablation(spec: ExperimentSpec) -> list[ResultRow]:
    """The sweep repeated for every meta-retrieval setting."""
    return _grid(spec, META_RETRIEVAL)


def run_cross_eval(spec: ExperimentSpec) -> list[ResultRow]:
    """Train on each dataset; evaluate on its own test split and on the other's."""
    a_ds, b_ds = spec.dataset_a, spec.dataset_b
    if a_ds.corpus.dim != b_ds.corpus.dim:
        raise DataError("cross-eval datasets must share a dimension")
    pairs = [(a_ds, [a_ds, b_ds]), (b_ds, [b_ds, a_ds])]
    rows: list[ResultRow] = []
    jobs = sorted((a, seed, i, method) for i, method in enumerate(spec.methods) for a in _cells(spec, method)
                  for seed in spec.seeds)
    # grouped by (A, seed) so consecutive models reuse the cached episode features
    for a, seed, _, method in jobs:
        for train_ds, eval_sets in pairs:
            rows += _train_and_eval(spec, method, a, seed, spec.meta_retrieval, train_ds, eval_sets)
    return sorted(rows, key=ResultRow.sort_key)


RUNNERS = {"sweep": run_sweep, "ablation": run_ablation, "cross-eval": run_cross_eval}


def run_experiment(spec: ExperimentSpec) -> list[ResultRow]:
    return RUNNERS[spec.name](spec)


def _format(row: ResultRow) -> list[str]:
    return [
        row.experiment, row.dataset_train, row.dataset_eval, row.method, str(row.A),
        row.meta_retrieval, str(row.seed), f"{row.test_accuracy:.4f}", f"{row.accuracy_std:.4f}",
        f"{row.wall_time_seconds:.3f}", str(row.input_width),
    ]


def emit_csv(rows: Sequence[ResultRow], path: str | os.PathLike) -> None:
    """Header plus one RFC 4180 record per row, sorted deterministically."""
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        writer.writerow(COLUMNS)
        for row in sorted(rows, key=ResultRow.sort_key):
            writer.writerow(_format(row))


def read_csv(path: str | os.PathLike) -> list[ResultRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise DataError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            ResultRow(
                r["experiment"], r["dataset_train"], r["dataset_eval"], r["method"], int(r["A"]),
                r["meta_retrieval"], int(r["seed"]), float(r["test_accuracy"]),
                float(r["accuracy_std"]), float(r["wall_time_seconds"]), int(r["input_width"]),
            )
            for r in reader
        ]


def mean_accuracy(rows: Sequence[ResultRow], **match) -> float:
    """Mean test accuracy over rows whose attributes equal ``match``."""
    picked = [r.test_accuracy for r in rows if all(getattr(r, k) == v for k, v in match.items())]
    if not picked:
        raise DataError(f"no rows match {match}")
    return float(np.mean(picked))
