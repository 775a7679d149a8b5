"""Meta-training loops and episodic evaluation for every method."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from ..augment import augment_batch, build_features
from ..episodes import EpisodeConfig, eligible_classes, episode_rng, sample_batch
from ..errors import DataError
from ..index import VectorIndex
from ..store import ClassTextEmbeddings, EmbeddingCorpus
from .logreg import lr_fit_predict
from .maml import MamlConfig, MamlState, init_maml, maml_outer_step, maml_predict
from .optim import Adam
from .protonet import ProtoConfig, ProtoState, init_protonet, protonet_loss, protonet_step
from .zeroshot import zero_shot_predict

log = logging.getLogger(__name__)

METHODS = ("lr", "maml", "protonet", "zs")
TRAINED = ("maml", "protonet")
META_RETRIEVAL = ("none", "fine", "coarse", "both")


@dataclass(frozen=True, eq=False)
class Dataset:
    """An evaluation corpus with its class text embeddings and retrieval index."""

    name: str
    corpus: EmbeddingCorpus
    text: ClassTextEmbeddings
    index: VectorIndex


@dataclass(frozen=True)
class TrainSettings:
    maml: MamlConfig = MamlConfig()
    proto: ProtoConfig = ProtoConfig()
    batch_size: int = 8
    max_steps: int = 200
    test_episodes: int = 200
    val_every: int = 50
    val_episodes: int = 20


def uses_channel(meta_retrieval: str) -> bool:
    return meta_retrieval in ("fine", "both")


def uses_coarse(meta_retrieval: str) -> bool:
    return meta_retrieval in ("coarse", "both")


def check_choice(method: str, meta_retrieval: str) -> None:
    if method not in METHODS:
        raise DataError(f"unknown method {method!r}")
    if meta_retrieval not in META_RETRIEVAL:
        raise DataError(f"unknown meta_retrieval {meta_retrieval!r}")


def maml_config_for(base: MamlConfig, meta_retrieval: str) -> MamlConfig:
    """Coarse-grained meta-retrieval = learned inner rates plus similarity-weighted loss."""
    if uses_coarse(meta_retrieval):
        return replace(base, weighted_loss=True, learn_inner_lrs=True)
    return base


def feature_width(dim: int, meta_retrieval: str) -> int:
    return dim + (1 if uses_channel(meta_retrieval) else 0)


# batches shared by every model that sees the same (dataset, config, split, episode range)
FEATURE_CACHE = 512


@lru_cache(maxsize=FEATURE_CACHE)
def _batch_features(ds: Dataset, split: str, config: EpisodeConfig, start: int, count: int, channel: bool):
    """Augmented ``(support_x, query_x)`` pairs for episodes ``start..start+count-1``; read-only."""
    episodes = sample_batch(ds.corpus, ds.text, split, config, start, count)
    out = tuple(build_features(aug, channel) for aug in augment_batch(episodes, ds.index, config))
    for pair in out:
        for fm in pair:
            for a in (fm.x, fm.labels, fm.weights, fm.origin):
                a.setflags(write=False)
    return out


def _features(ds: Dataset, split: str, config: EpisodeConfig, start: int, count: int, meta_retrieval: str):
    return _batch_features(ds, split, config, start, count, uses_channel(meta_retrieval))


@dataclass
class TrainedModel:
    method: str
    meta_retrieval: str
    state: MamlState | ProtoState | None = None
    maml_config: MamlConfig | None = None
    train_loss_curve: list[float] = field(default_factory=list)
    val_accuracy_curve: list[tuple[int, float]] = field(default_factory=list)
    steps: int = 0


def train_model(
    method: str,
    train_ds: Dataset,
    episode_config: EpisodeConfig,
    settings: TrainSettings,
    meta_retrieval: str = "none",
) -> TrainedModel:
    """Meta-train on the train split; ``lr`` and ``zs`` return an empty model."""
    check_choice(method, meta_retrieval)
    model = TrainedModel(method, meta_retrieval)
    if method not in TRAINED:
        return model
    width = feature_width(train_ds.corpus.dim, meta_retrieval)
    rng = episode_rng(episode_config.seed, "init", 0)
    if method == "maml":
        model.maml_config = maml_config_for(settings.maml, meta_retrieval)
        model.state = init_maml(width, episode_config.n_way, model.maml_config, rng)
    else:
        params = init_protonet(width, settings.proto, rng)
        model.state = ProtoState(params, Adam(settings.proto.outer_lr))

    can_validate = (
        len(eligible_classes(train_ds.corpus, "val", episode_config.k_shot + episode_config.q_query))
        >= episode_config.n_way
    )
    for step in range(settings.max_steps):
        batch = _features(
            train_ds, "train", episode_config, step * settings.batch_size, settings.batch_size, meta_retrieval
        )
        if method == "maml":
            model.state, loss = maml_outer_step(model.state, batch, model.maml_config)
        else:
            model.state, loss = protonet_step(model.state, batch, settings.proto)
        model.train_loss_curve.append(loss)
        model.steps = step + 1
        if can_validate and settings.val_every and model.steps % settings.val_every == 0:
            acc = evaluate(model, train_ds, episode_config, settings, "val", settings.val_episodes)
            model.val_accuracy_curve.append((model.steps, float(acc.mean())))
            log.debug("%s step %d loss %.4f val %.4f", method, model.steps, loss, acc.mean())
    return model


def episode_accuracy(
    model: TrainedModel,
    ds: Dataset,
    split: str,
    index: int,
    config: EpisodeConfig,
    settings: TrainSettings,
) -> float:
    return _accuracies(model, ds, split, config, index, 1, settings)[0]


def _accuracies(model, ds, split, config, start, count, settings) -> list[float]:
    if model.method == "zs":
        return [
            float(np.mean(zero_shot_predict(ep.query_vectors, ep.class_text) == ep.query_labels))
            for ep in sample_batch(ds.corpus, ds.text, split, config, start, count)
        ]
    out = []
    for support_x, query_x in _features(ds, split, config, start, count, model.meta_retrieval):
        if model.method == "lr":
            preds = lr_fit_predict(support_x, query_x)
        elif model.method == "maml":
            preds = maml_predict(model.state, support_x, query_x, model.maml_config)
        else:
            _, preds, _ = protonet_loss(model.state.params, support_x, query_x, settings.proto)
        out.append(float(np.mean(preds == query_x.labels)))
    return out


def evaluate(
    model: TrainedModel,
    ds: Dataset,
    episode_config: EpisodeConfig,
    settings: TrainSettings,
    split: str = "test",
    n_episodes: int | None = None,
) -> np.ndarray:
    """Per-episode accuracies over episodes ``0..n-1`` of ``split``."""
    n = settings.test_episodes if n_episodes is None else n_episodes
    acc: list[float] = []
    for lo in range(0, n, settings.batch_size):
        acc.extend(_accuracies(model, ds, split, episode_config, lo, min(settings.batch_size, n - lo), settings))
    return np.array(acc)


@dataclass
class TrainReport:
    method: str
    steps: int
    seeds: list[int]
    train_loss_curves: list[list[float]]
    val_accuracy_curves: list[list[tuple[int, float]]]
    seed_accuracies: list[float]

    @property
    def train_loss_curve(self) -> list[float]:
        return self.train_loss_curves[0] if self.train_loss_curves else []

    @property
    def val_accuracy_curve(self) -> list[tuple[int, float]]:
        return self.val_accuracy_curves[0] if self.val_accuracy_curves else []

    @property
    def final_test_accuracy(self) -> float:
        return float(np.mean(self.seed_accuracies))

    @property
    def final_test_std(self) -> float:
        return float(np.std(self.seed_accuracies))


def train_learner(
    method: str,
    corpus: EmbeddingCorpus,
    text: ClassTextEmbeddings,
    index: VectorIndex,
    settings: TrainSettings,
    episode_config: EpisodeConfig,
    max_steps: int | None = None,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    meta_retrieval: str = "none",
) -> TrainReport:
    """Train and test ``method`` once per seed; accuracy mean/std are across seeds."""
    if max_steps is not None:
        settings = replace(settings, max_steps=max_steps)
    ds = Dataset("data", corpus, text, index)
    report = TrainReport(method, settings.max_steps, list(seeds), [], [], [])
    for seed in seeds:
        cfg = episode_config.with_(seed=seed)
        model = train_model(method, ds, cfg, settings, meta_retrieval)
        acc = evaluate(model, ds, cfg, settings)
        report.train_loss_curves.append(model.train_loss_curve)
        report.val_accuracy_curves.append(model.val_accuracy_curve)
        report.seed_accuracies.append(float(acc.mean()))
        report.steps = model.steps
    return report
