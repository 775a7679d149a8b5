"""Classifiers over episode feature matrices: LR, first-order MAML, ProtoNet, zero-shot."""

from .logreg import lr_fit, lr_fit_predict
from .maml import MamlConfig, MamlState, maml_inner_adapt, maml_meta_gradient, maml_outer_step
from .mlp import MlpParams, cross_entropy, init_mlp, mlp_backward, mlp_forward
from .protonet import ProtoConfig, protonet_episode, protonet_loss
from .training import Dataset, TrainReport, TrainSettings, evaluate, train_learner, train_model
from .zeroshot import zero_shot_predict

__all__ = [
    "Dataset",
    "MamlConfig",
    "MamlState",
    "MlpParams",
    "ProtoConfig",
    "TrainReport",
    "TrainSettings",
    "cross_entropy",
    "evaluate",
    "init_mlp",
    "lr_fit",
    "lr_fit_predict",
    "maml_inner_adapt",
    "maml_meta_gradient",
    "maml_outer_step",
    "mlp_backward",
    "mlp_forward",
    "protonet_episode",
    "protonet_loss",
    "train_learner",
    "train_model",
    "zero_shot_predict",
]
