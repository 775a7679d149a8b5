from dataclasses import replace

import pytest

from fewshot_retrieval import DataError, EpisodeConfig
from fewshot_retrieval.harness import (
    COLUMNS,
    ExperimentSpec,
    ResultRow,
    emit_csv,
    mean_accuracy,
    read_csv,
    run_experiment,
)
from fewshot_retrieval.learners.maml import MamlConfig
from fewshot_retrieval.learners.protonet import ProtoConfig
from fewshot_retrieval.learners.training import Dataset, TrainSettings

from conftest import ZERO_NOISE, make_dataset

TINY = TrainSettings(
    maml=MamlConfig(hidden=(8,), inner_steps=2),
    proto=ProtoConfig(hidden=(16,)),
    batch_size=2,
    max_steps=3,
    test_episodes=4,
    val_every=0,
)
EPISODE = EpisodeConfig(n_way=5, k_shot=1, q_query=2)


@pytest.fixture(scope="module")
def second_dataset():
    return make_dataset(replace(ZERO_NOISE, seed=99, label_prefix="other"), "other")


def spec(ds, **kw):
    base = dict(name="sweep", dataset_a=ds, methods=("lr",), a_sweep=(0,), seeds=(0,), episode=EPISODE, settings=TINY)
    return ExperimentSpec(**{**base, **kw})


def test_row_counts(zero_noise_dataset):
    assert len(run_experiment(spec(zero_noise_dataset))) == 1
    rows = run_experiment(spec(zero_noise_dataset, methods=("zs", "protonet"), a_sweep=(0, 5), seeds=(0, 1)))
    assert sum(r.method == "zs" for r in rows) == 2 and sum(r.method == "protonet" for r in rows) == 4
    # the LR A=0 reference line is added when the sweep skips A=0
    rows = run_experiment(spec(zero_noise_dataset, a_sweep=(2,)))
    assert sorted(r.A for r in rows) == [0, 2]


def test_ablation_covers_every_setting_and_matches_the_sweep(zero_noise_dataset):
    s = spec(zero_noise_dataset, name="ablation", methods=("protonet",), a_sweep=(2,))
    rows = run_experiment(s)
    assert [r.meta_retrieval for r in rows] == ["both", "coarse", "fine", "none"]
    assert {r.meta_retrieval: r.input_width for r in rows} == {"both": 65, "coarse": 64, "fine": 65, "none": 64}
    sweep = run_experiment(replace(s, name="sweep"))
    none = [r for r in rows if r.meta_retrieval == "none"]
    assert [r.test_accuracy for r in none] == [r.test_accuracy for r in sweep]


def test_cross_eval_pairs(zero_noise_dataset, second_dataset):
    s = spec(zero_noise_dataset, name="cross-eval", dataset_b=second_dataset, methods=("protonet", "zs"))
    rows = run_experiment(s)
    pairs = {(r.method, r.dataset_train, r.dataset_eval) for r in rows}
    assert pairs == {(m, t, e) for m in ("protonet", "zs") for t in ("zero", "other") for e in ("zero", "other")}
    # zero-shot does not train, so its accuracy depends on the eval set only
    zs = {(r.dataset_train, r.dataset_eval): r.test_accuracy for r in rows if r.method == "zs"}
    assert zs["zero", "other"] == zs["other", "other"] and zs["other", "zero"] == zs["zero", "zero"]


def test_cross_eval_on_one_dataset_matches_in_domain(zero_noise_dataset):
    twin = Dataset("twin", zero_noise_dataset.corpus, zero_noise_dataset.text, zero_noise_dataset.index)
    cross = run_experiment(spec(zero_noise_dataset, name="cross-eval", dataset_b=twin, methods=("protonet",)))
    same = run_experiment(spec(zero_noise_dataset, methods=("protonet",)))
    assert {r.test_accuracy for r in cross} == {same[0].test_accuracy}


def test_spec_validation(zero_noise_dataset):
    for bad in (dict(name="grid"), dict(a_sweep=()), dict(a_sweep=(-1,)), dict(seeds=()), dict(methods=("svm",)),
                dict(name="cross-eval")):
        with pytest.raises(DataError):
            spec(zero_noise_dataset, **bad)
    with pytest.raises(DataError):
        ResultRow("sweep", "a", "a", "lr", 0, "none", 0, 1.5, 0.0, 0.0)


def row(method="lr", a=0, seed=0, acc=0.5):
    return ResultRow("sweep", "a", "a", method, a, "none", seed, acc, 0.01, 1.25, 64)


def test_csv_format_and_round_trip(tmp_path):
    path = tmp_path / "empty.csv"
    emit_csv([], path)
    assert path.read_bytes() == (",".join(COLUMNS) + "\r\n").encode()

    rows = [row("protonet", 5, 1, 0.123456), row("lr", 0, 0, 2 / 3), row("lr", 0, 1)]
    emit_csv(rows, tmp_path / "a.csv")
    emit_csv(rows[::-1], tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    lines = (tmp_path / "a.csv").read_bytes().decode().split("\r\n")
    assert lines[1] == "sweep,a,a,lr,0,none,0,0.6667,0.0100,1.250,64"
    back = read_csv(tmp_path / "a.csv")
    assert [(r.method, r.A, r.seed) for r in back] == [("lr", 0, 0), ("lr", 0, 1), ("protonet", 5, 1)]
    assert back[2].test_accuracy == 0.1235
    assert mean_accuracy(back, method="lr") == pytest.approx((0.6667 + 0.5) / 2)
    with pytest.raises(DataError):
        mean_accuracy(back, method="maml")


def test_csv_quotes_awkward_names(tmp_path):
    r = ResultRow("sweep", "a,b", 'say "hi"', "lr", 0, "none", 0, 0.5, 0.0, 0.0)
    emit_csv([r], tmp_path / "q.csv")
    assert '"a,b","say ""hi"""' in (tmp_path / "q.csv").read_text()
    assert read_csv(tmp_path / "q.csv")[0].dataset_eval == 'say "hi"'
