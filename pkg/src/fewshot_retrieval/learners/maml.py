"""First-order MAML with separate inner learning rates for support and retrieved rows."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..augment import RETRIEVED, SUPPORT, FeatureMatrix
from ..errors import DataError, NumericError
from .mlp import MlpParams, init_mlp, mlp_backward, mlp_forward
from .optim import Adam

ETA_MIN, ETA_MAX = 1e-4, 1.0


@dataclass(frozen=True)
class MamlConfig:
    inner_lr_support: float = 0.04
    inner_lr_retrieval: float = 0.04
    outer_lr: float = 0.001
    inner_steps: int = 5
    hidden: tuple[int, ...] = (128, 32)
    weighted_loss: bool = False
    learn_inner_lrs: bool = False

    def __post_init__(self) -> None:
        if self.inner_lr_support < 0 or self.inner_lr_retrieval < 0 or self.outer_lr < 0:
            raise DataError("learning rates must be non-negative")
        if self.inner_steps < 0:
            raise DataError("inner_steps must be >= 0")


PAPER_MAML = MamlConfig(inner_steps=100)


@dataclass
class MamlState:
    """Meta-parameters, the current inner learning rates and the outer optimizer."""

    params: MlpParams
    eta_support: float
    eta_retrieval: float
    optimizer: Adam = field(repr=False)


def init_maml(
    in_width: int, n_way: int, config: MamlConfig, rng: np.random.Generator
) -> MamlState:
    params = init_mlp([in_width, *config.hidden, n_way], rng, zero_output=True)
    return MamlState(params, config.inner_lr_support, config.inner_lr_retrieval, Adam(config.outer_lr))


def _group(support_x: FeatureMatrix, origin: str, weighted: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
    mask = support_x.origin == origin
    if not mask.any():
        return None
    w = support_x.weights[mask] if weighted else np.ones(int(mask.sum()))
    if w.sum() <= 0.0:
        return None
    return support_x.x[mask], support_x.labels[mask], w


def group_gradients(
    params: MlpParams, support_x: FeatureMatrix, config: MamlConfig
) -> tuple[MlpParams | None, MlpParams | None]:
    """Gradients of the support-row loss and the retrieved-row loss, each a weighted mean.

    Retrieved rows use their similarity weights when ``config.weighted_loss``;
    support rows always weigh 1.
    """
    out = []
    for origin, weighted in ((SUPPORT, False), (RETRIEVED, config.weighted_loss)):
        g = _group(support_x, origin, weighted)
        out.append(None if g is None else mlp_backward(params, *g)[1])
    return out[0], out[1]


def maml_inner_adapt(
    params: MlpParams,
    support_x: FeatureMatrix,
    config: MamlConfig,
    eta_support: float | None = None,
    eta_retrieval: float | None = None,
    return_sums: bool = False,
):
    """Run ``inner_steps`` full-batch steps ``theta -= eta_s g_s + eta_r g_r``.

    With ``return_sums`` also returns the per-group gradient sums over the
    inner steps, used by the learning-rate meta-gradient.
    """
    eta_s = config.inner_lr_support if eta_support is None else eta_support
    eta_r = config.inner_lr_retrieval if eta_retrieval is None else eta_retrieval
    theta = params.copy()
    sum_s = params.zeros_like()
    sum_r = params.zeros_like()
    for _ in range(config.inner_steps):
        g_s, g_r = group_gradients(theta, support_x, config)
        if g_s is not None:
            theta = theta.axpy(-eta_s, g_s)
            sum_s = sum_s.axpy(1.0, g_s)
        if g_r is not None and eta_r != 0.0:
            theta = theta.axpy(-eta_r, g_r)
        if g_r is not None:
            sum_r = sum_r.axpy(1.0, g_r)
    # non-finite values propagate through the remaining steps, so one check suffices
    if not theta.is_finite():
        raise NumericError("non-finite parameters during inner adaptation")
    return (theta, sum_s, sum_r) if return_sums else theta


@dataclass
class MetaGradient:
    params: MlpParams
    eta_support: float
    eta_retrieval: float
    query_loss: float


def maml_meta_gradient(
    state: MamlState,
    batch: Sequence[tuple[FeatureMatrix, FeatureMatrix]],
    config: MamlConfig,
) -> MetaGradient:
    """First-order meta-gradient averaged over a batch of (support, query) matrices.

    The learning-rate gradients use the stop-gradient approximation
    ``dL_q/d eta ~= -grad L_q(theta') . sum_t g_t`` for each row group.
    """
    if not batch:
        raise DataError("meta-gradient needs a non-empty batch")
    total = state.params.zeros_like()
    d_eta_s = d_eta_r = loss_sum = 0.0
    for support_x, query_x in batch:
        adapted, sum_s, sum_r = maml_inner_adapt(
            state.params, support_x, config, state.eta_support, state.eta_retrieval, return_sums=True
        )
        loss, g_q = mlp_backward(adapted, query_x.x, query_x.labels)
        total = total.axpy(1.0, g_q)
        d_eta_s -= g_q.dot(sum_s)
        d_eta_r -= g_q.dot(sum_r)
        loss_sum += loss
    b = float(len(batch))
    grad = total.scale(1.0 / b)
    if not grad.is_finite() or not np.isfinite(d_eta_s) or not np.isfinite(d_eta_r):
        raise NumericError("non-finite meta-gradient")
    return MetaGradient(grad, d_eta_s / b, d_eta_r / b, loss_sum / b)


def maml_outer_step(
    state: MamlState,
    batch: Sequence[tuple[FeatureMatrix, FeatureMatrix]],
    config: MamlConfig,
) -> tuple[MamlState, float]:
    """Apply one Adam step on the first-order meta-gradient; returns (state, mean query loss)."""
    mg = maml_meta_gradient(state, batch, config)
    flat = state.optimizer.step(state.params.flat(), mg.params.flat())
    eta_s, eta_r = state.eta_support, state.eta_retrieval
    if config.learn_inner_lrs:
        eta_s = float(np.clip(eta_s - config.outer_lr * mg.eta_support, ETA_MIN, ETA_MAX))
        eta_r = float(np.clip(eta_r - config.outer_lr * mg.eta_retrieval, ETA_MIN, ETA_MAX))
    return MamlState(state.params.unflat(flat), eta_s, eta_r, state.optimizer), mg.query_loss


def maml_predict(
    state: MamlState, support_x: FeatureMatrix, query_x: FeatureMatrix, config: MamlConfig
) -> np.ndarray:
    adapted = maml_inner_adapt(state.params, support_x, config, state.eta_support, state.eta_retrieval)
    return np.argmax(mlp_forward(adapted, query_x.x), axis=1)
