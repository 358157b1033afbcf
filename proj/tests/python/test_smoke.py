import json
import math

import numpy as np
import pytest

import lstm_qdm as q


def small_config(**extra):
    cfg = {
        "hidden_size": 8,
        "layer_count": 1,
        "embed_dim": 4,
        "class_count": 3,
        "batch_size": 16,
        "epochs": 2,
        "steps_per_epoch": 5,
        "learning_rate": 0.01,
        "dropout": 0.0,
        "seed": 3,
    }
    cfg.update(extra)
    return cfg


@pytest.fixture(scope="module")
def data():
    ds = q.synthetic_dataset(class_count=3, samples_per_class=40, length=8, seed=2)
    return q.apply_imbalance(ds, {2: 6}, seed=1)


def test_synthetic_dataset_shape(data):
    assert len(data) == 40 + 40 + 6
    assert data.class_sizes == [40, 40, 6]
    assert data.imbalance_set == {2}
    x = data.to_array()
    assert x.shape == (86, 8, 2)
    np.testing.assert_array_equal(x[5], data.window(5))


def test_dataset_from_array_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 4, 3))
    ds = q.Dataset.from_array(x, [0, 1, 2, 0, 1, 2])
    assert ds.class_count == 3
    np.testing.assert_array_equal(ds.to_array(), x)
    path = str(tmp_path / "ds.qdmd")
    ds.save(path)
    assert q.Dataset.load(path).same_content(ds)
    with pytest.raises(q.DimensionError):
        q.Dataset.from_array(np.zeros((3, 4)), [0, 1, 2])


def test_make_windows():
    raw = np.arange(20, dtype=float).reshape(10, 2)
    ds = q.make_windows(raw, [0] * 10, window=4, step=2, class_count=1)
    assert len(ds) == 4
    np.testing.assert_array_equal(ds.window(1), raw[2:6])


def test_quadruplet_loss_values():
    assert math.isclose(q.quadruplet_loss(2.0, 5.0, 30.0, True), (100.0 + 15.0 + 400.0) / 3.0, abs_tol=1e-12)
    assert q.quadruplet_loss(0.0, 20.0, 50.0, True) == 0.0
    assert q.quadruplet_loss(2.0, 100.0, 100.0, False) == pytest.approx(2.0 / 3.0)


def test_sampled_quadruplets_are_valid(data):
    batch = q.sample_quadruplets(data, 200, seed=9)
    labels = data.labels
    assert len(batch["tuples"]) == 200
    for (a, p, n, m), g in zip(batch["tuples"], batch["gamma"]):
        ca = labels[a]
        assert labels[p] == ca
        assert labels[n] != ca and labels[n] != 2
        assert labels[m] != ca
        assert g == (0 if ca == 2 else 1)


def test_sampling_error_is_raised():
    ds = q.synthetic_dataset(class_count=3, samples_per_class=[5, 5, 5], length=8)
    ds = q.apply_imbalance(ds, {1: 2, 2: 2}, seed=0)
    with pytest.raises(q.SamplingError):
        for seed in range(20):
            q.sample_quadruplets(ds, 32, seed=seed)


def test_train_and_evaluate(data, tmp_path):
    out = q.train(data, small_config(method="QDM"))
    assert len(out["history"]) == 10
    assert all(math.isfinite(h["total"]) for h in out["history"])
    again = q.train(data, small_config(method="QDM"))
    assert again["model"].bitwise_equal(out["model"])

    report = q.evaluate(out["model"], data)
    assert report["samples"] == len(data)
    assert 0.0 <= report["macro_recall"] <= 1.0
    logits = out["model"].logits(data)
    assert logits.shape == (len(data), 3)
    assert list(np.argmax(logits, axis=1)) == out["model"].predict(data)

    path = str(tmp_path / "model.qdmm")
    out["model"].save(path)
    assert q.Model.load(path).bitwise_equal(out["model"])
    assert out["model"].shape["embed_dim"] == 4


def test_beta_zero_matches_plain(data):
    qdm = q.train(data, small_config(method="QDM", loss={"beta": 0.0}))
    plain = q.train(data, small_config(method="PLAIN"))
    assert [h["total"] for h in qdm["history"]] == [h["total"] for h in plain["history"]]


def test_metrics():
    r = q.metrics([0, 0, 1, 1], [0, 1, 1, 1], 2)
    assert r["per_class"][0]["recall"] == 0.5
    assert r["per_class"][1]["recall"] == 1.0
    assert r["macro_recall"] == 0.75


def test_config_errors():
    with pytest.raises(q.ConfigError):
        q.train(q.synthetic_dataset(), {"hidden_size": 0})
    with pytest.raises(q.QdmError):
        q.experiment_config("bogus: 1\n")
    assert q.te_train_config()["hidden_size"] == 100
    assert q.cwru_train_config()["loss"]["M"] == 5.0


SCENARIO = """
name: py-smoke
data:
  source: synthetic
  synthetic:
    class_count: 3
    samples_per_class: 40
    test_samples_per_class: 20
    length: 8
imbalance:
  classes: [2]
  count: 6
methods: [QDM, PLAIN]
train:
  preset: cwru
  hidden_size: 8
  layer_count: 1
  embed_dim: 4
  epochs: 1
  steps_per_epoch: 4
  batch_size: 16
"""


def test_scenario():
    result = q.run_scenario(SCENARIO, ["seed_base=4"])
    json.dumps(result)
    table = q.scenario_table(result)
    assert "LSTM-QDM" in table and "Class 2 recall" in table
