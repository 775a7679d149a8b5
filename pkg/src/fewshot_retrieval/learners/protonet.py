"""Prototypical classifier over a small learned embedding head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..augment import RETRIEVED, SUPPORT, AugmentedEpisode, FeatureMatrix, build_features
from ..errors import DataError, NumericError
from .mlp import MlpParams, backward_from, cross_entropy_grad, forward_cache, init_mlp
from .optim import Adam


@dataclass(frozen=True)
class ProtoConfig:
    hidden: tuple[int, ...] = (64,)
    outer_lr: float = 0.001
    include_retrieved_in_prototypes: bool = True


def init_protonet(in_width: int, config: ProtoConfig, rng: np.random.Generator) -> MlpParams:
    return init_mlp([in_width, *config.hidden], rng)


@dataclass
class ProtoState:
    params: MlpParams
    optimizer: Adam = field(repr=False)


def prototype_rows(support_x: FeatureMatrix, config: ProtoConfig) -> np.ndarray:
    keep = support_x.origin == SUPPORT
    if config.include_retrieved_in_prototypes:
        keep |= support_x.origin == RETRIEVED
    return np.flatnonzero(keep)


def prototypes(params: MlpParams, support_x: FeatureMatrix, config: ProtoConfig) -> np.ndarray:
    """Per-class mean of the embedded prototype rows, shape ``(N, width)``."""
    rows = prototype_rows(support_x, config)
    labels = support_x.labels[rows]
    counts = np.bincount(labels)
    if np.any(counts == 0):
        raise DataError(f"class {int(np.argmin(counts))} has no prototype rows")
    emb, _ = forward_cache(params, support_x.x[rows])
    return (np.eye(len(counts))[labels].T @ emb) / counts[:, None]


def protonet_loss(
    params: MlpParams,
    support_x: FeatureMatrix,
    query_x: FeatureMatrix,
    config: ProtoConfig,
    train: bool = False,
) -> tuple[float, np.ndarray, MlpParams | None]:
    """Query cross-entropy with logits ``-||f(q) - p_c||^2``.

    Returns ``(loss, predictions, gradient)``; the gradient is ``None`` unless
    ``train``.
    """
    rows = prototype_rows(support_x, config)
    labels = support_x.labels[rows]
    n_way = int(max(labels.max(), query_x.labels.max())) + 1
    counts = np.bincount(labels, minlength=n_way)
    if np.any(counts == 0):
        raise DataError(f"class {int(np.argmin(counts))} has no prototype rows")
    x = np.concatenate([support_x.x[rows], query_x.x], axis=0)
    emb, inputs = forward_cache(params, x)
    n_s = len(rows)
    e_s, e_q = emb[:n_s], emb[n_s:]
    onehot = np.eye(n_way)[labels]
    protos = (onehot.T @ e_s) / counts[:, None]
    diff = e_q[:, None, :] - protos[None, :, :]
    logits = -np.sum(diff * diff, axis=2)
    preds = np.argmax(logits, axis=1)
    loss, g = cross_entropy_grad(logits, query_x.labels)
    if not np.isfinite(loss):
        raise NumericError("non-finite prototypical loss")
    if not train:
        return loss, preds, None
    # logits_qc = -||e_q - p_c||^2
    g_eq = -2.0 * np.einsum("qc,qcd->qd", g, diff)
    g_p = 2.0 * np.einsum("qc,qcd->cd", g, diff)
    g_es = onehot @ (g_p / counts[:, None])
    grads, _ = backward_from(params, inputs, np.concatenate([g_es, g_eq], axis=0))
    if not grads.is_finite():
        raise NumericError("non-finite prototypical gradient")
    return loss, preds, grads


def protonet_episode(
    params: MlpParams,
    aug: AugmentedEpisode,
    config: ProtoConfig,
    train: bool = False,
    similarity_channel: bool = False,
) -> tuple[float, np.ndarray]:
    """Loss and query predictions for one augmented episode."""
    support_x, query_x = build_features(aug, similarity_channel)
    loss, preds, _ = protonet_loss(params, support_x, query_x, config, train)
    return loss, preds


def protonet_step(
    state: ProtoState,
    batch: list[tuple[FeatureMatrix, FeatureMatrix]],
    config: ProtoConfig,
) -> tuple[ProtoState, float]:
    """One Adam step on the batch-mean episode loss."""
    if not batch:
        raise DataError("empty batch")
    total = state.params.zeros_like()
    loss_sum = 0.0
    for support_x, query_x in batch:
        loss, _, g = protonet_loss(state.params, support_x, query_x, config, train=True)
        total = total.axpy(1.0, g)
        loss_sum += loss
    grad = total.scale(1.0 / len(batch))
    flat = state.optimizer.step(state.params.flat(), grad.flat())
    return ProtoState(state.params.unflat(flat), state.optimizer), loss_sum / len(batch)
