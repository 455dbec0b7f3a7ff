"""Smoke tests for the python bindings; run after `pip install .`."""

import math

import pytest

ek = pytest.importorskip("eatkit")
np = pytest.importorskip("numpy")


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("ds") / "synth"
    ek.generate_dataset(str(path), per_class=4, test_per_class=2, seed=9)
    return ek.load_dataset(str(path))


@pytest.fixture(scope="module")
def micro_config():
    cfg = ek.Config()
    cfg.n_classes = 8
    cfg.n_attributes = 6
    cfg.d_e = 8
    cfg.image_size = 32
    cfg.trunk_channels = [4, 8]
    cfg.head_channels = 8
    cfg.gi_channels = 4
    cfg.epochs = 2
    cfg.seed = 3
    return cfg


def test_dataset_shape(tiny_dataset):
    ds = tiny_dataset
    assert ds.n_classes == 8
    assert ds.n_attributes == 6
    assert len(ds) == 8 * 6
    sample = ds[0]
    assert sample.image.shape == (3, 32, 32)
    assert sample.image.min() >= 0.0 and sample.image.max() <= 1.0
    assert sample.mask is not None
    assert set(np.unique(sample.mask)).issubset({0.0, 1.0})
    assert ds.attribute_matrix.shape == (8, 6)
    assert list(ds[0].attributes) == list(ds.attribute_matrix[ds[0].label])


def test_train_predict_roundtrip(tiny_dataset, micro_config, tmp_path):
    model = ek.Model.init(micro_config)
    report = model.train(tiny_dataset)
    assert len(report) == micro_config.epochs
    assert report[-1]["l_c"] <= report[0]["l_c"] * 2  # sanity, not a bound

    sample = tiny_dataset[0]
    cls, probs = model.predict(sample.image)
    assert 0 <= cls < 8
    assert len(probs) == 6
    assert all(0.0 <= p <= 1.0 for p in probs)

    path = tmp_path / "model.ckpt"
    model.save(str(path))
    loaded = ek.Model.load(str(path))
    cls2, probs2 = loaded.predict(sample.image)
    assert cls2 == cls
    assert probs2 == probs


def test_evaluation_metrics(tiny_dataset, micro_config):
    model = ek.Model.init(micro_config)
    ev = model.evaluate(tiny_dataset, ek.Split.TEST)
    assert 0.0 <= ev["category_accuracy"] <= 1.0
    assert ev["mean_attribute_accuracy"] is not None
    assert len(ev["per_attribute_accuracy"]) == 6


def test_ear_scores_eta_zero_is_null(tiny_dataset, micro_config):
    cfg = micro_config
    cfg.eta = 0.0
    model = ek.Model.init(cfg)
    s, w = model.ear_scores(tiny_dataset[0].image, 0)
    assert s.shape == (6,)
    assert w.shape == (6, cfg.d_e)
    assert np.all(s == 0.0)
    assert np.all(w == 0.0)
    cfg.eta = 1.0


def test_grad_cam_nonnegative(tiny_dataset, micro_config):
    model = ek.Model.init(micro_config)
    cam = model.grad_cam(tiny_dataset[0].image, "category", 0)
    assert cam.shape == (32, 32)
    assert cam.min() >= 0.0


def test_explain_record(tiny_dataset, micro_config):
    model = ek.Model.init(micro_config)
    ds = tiny_dataset
    record = model.explain(ds[0].image, ds[0].image_id, ds.attribute_names, ds.class_names)
    assert record["image_id"] == ds[0].image_id
    assert len(record["top_attributes"]) == 3
    scores = [a["score"] for a in record["top_attributes"]]
    assert scores == sorted(scores, reverse=True)
    assert record["sentence"].startswith("Classified as ")


def test_far_hand_case():
    at = np.array([[0.8, 0.2], [0.4, 0.0]], dtype=np.float32)
    mask = np.array([[1, 0], [1, 0]], dtype=np.float32)
    out = ek.far(at, mask)
    assert math.isclose(out["far"], 6.0, abs_tol=1e-9)
    assert not out["saturated"]
    assert math.isclose(ek.pixel_importance(at, mask), 0.6, abs_tol=1e-7)


def test_far_batch(tiny_dataset, micro_config):
    model = ek.Model.init(micro_config)
    report = model.far_batch(tiny_dataset, ek.Split.TEST)
    assert report["per_image"]
    ids = [r["image_id"] for r in report["per_image"]]
    assert ids == sorted(ids)
    assert report["mean_far"] > 0.0


def test_errors_are_typed(micro_config):
    cfg = micro_config
    model = ek.Model.init(cfg)
    with pytest.raises(ek.EatError):
        model.predict(np.zeros((3, 8, 8), dtype=np.float32))
    with pytest.raises(ek.EatError):
        ek.load_dataset("/nonexistent/dataset")
