import numpy as np
import pytest

from fewshot_retrieval import DataError, EpisodeConfig
from fewshot_retrieval.learners.checkpoint import load_checkpoint, save_checkpoint
from fewshot_retrieval.learners.maml import MamlConfig
from fewshot_retrieval.learners.mlp import init_mlp
from fewshot_retrieval.learners.protonet import ProtoConfig
from fewshot_retrieval.learners.training import (
    TrainSettings,
    evaluate,
    feature_width,
    maml_config_for,
    train_learner,
    train_model,
)

SMALL = TrainSettings(
    maml=MamlConfig(hidden=(16,), inner_steps=3),
    proto=ProtoConfig(hidden=(32, 16), outer_lr=0.01),
    batch_size=4,
    max_steps=20,
    test_episodes=16,
    val_every=10,
    val_episodes=4,
)
FIVE_WAY = EpisodeConfig(n_way=5, k_shot=1, q_query=2, a_augment=2)


def test_zero_steps_returns_the_initial_model(zero_noise_dataset):
    model = train_model("protonet", zero_noise_dataset, FIVE_WAY, TrainSettings(max_steps=0))
    assert model.steps == 0 and model.train_loss_curve == []


def test_protonet_is_perfect_on_zero_noise(zero_noise_dataset):
    model = train_model("protonet", zero_noise_dataset, FIVE_WAY, SMALL)
    assert evaluate(model, zero_noise_dataset, FIVE_WAY, SMALL).min() == 1.0
    assert len(model.train_loss_curve) == 20 and [s for s, _ in model.val_accuracy_curve] == [10, 20]


@pytest.mark.parametrize("method,meta", [("maml", "both"), ("protonet", "fine")])
def test_training_is_bit_reproducible(zero_noise_dataset, method, meta):
    a = train_model(method, zero_noise_dataset, FIVE_WAY, SMALL, meta)
    b = train_model(method, zero_noise_dataset, FIVE_WAY, SMALL, meta)
    assert a.train_loss_curve == b.train_loss_curve
    np.testing.assert_array_equal(a.state.params.flat(), b.state.params.flat())
    c = train_model(method, zero_noise_dataset, FIVE_WAY.with_(seed=1), SMALL, meta)
    assert a.train_loss_curve != c.train_loss_curve


def test_meta_retrieval_variants():
    assert feature_width(64, "none") == feature_width(64, "coarse") == 64
    assert feature_width(64, "fine") == feature_width(64, "both") == 65
    base = MamlConfig()
    coarse = maml_config_for(base, "coarse")
    assert coarse.weighted_loss and coarse.learn_inner_lrs
    assert maml_config_for(base, "fine") == base


def test_unknown_choices_are_rejected(zero_noise_dataset):
    with pytest.raises(DataError):
        train_model("svm", zero_noise_dataset, FIVE_WAY, SMALL)
    with pytest.raises(DataError):
        train_model("lr", zero_noise_dataset, FIVE_WAY, SMALL, "medium")


def test_train_learner_reports_across_seeds(zero_noise_dataset):
    ds = zero_noise_dataset
    report = train_learner("zs", ds.corpus, ds.text, ds.index, SMALL, FIVE_WAY, seeds=(0, 1))
    assert report.seed_accuracies == [1.0, 1.0] and report.final_test_std == 0.0


def test_checkpoint_round_trip(tmp_path, rng):
    params = init_mlp([5, 4, 3], rng)
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, path, {"method": "maml", "eta": 0.04})
    back, header = load_checkpoint(path)
    assert header == {"method": "maml", "eta": 0.04}
    assert all(np.array_equal(a, b) for a, b in zip(back.arrays(), params.arrays()))
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(DataError):
        load_checkpoint(path)
    path.write_bytes(b"XXXX" + b"\0" * 10)
    with pytest.raises(DataError):
        load_checkpoint(path)
