import json

import numpy as np
import pytest

import aaunet

SMALL = {"encoder": {"stage_depths": [1, 1, 1, 1], "base_width": 8, "stem_skip_width": 4},
         "decoder_widths": [16, 16, 16, 16], "skip_reduced_widths": [8, 8, 8, 4]}


@pytest.fixture(scope="module")
def data():
    return aaunet.generate_dataset(21, 7, 64)


def test_dataset_split_and_arrays(data):
    assert data.split_counts() == (5, 1, 1)
    assert not set(data.patients("train")) & set(data.patients("test"))
    case = data.cases[0]
    assert case.images.shape == (case.n_slices, 64, 64)
    assert case.masks.dtype == np.uint8 and case.masks.max() <= 7
    assert case.stack(0).shape == (1, 3, 64, 64)


def test_generation_is_deterministic():
    a, b = aaunet.generate_dataset(3, 7, 64), aaunet.generate_dataset(3, 7, 64)
    assert np.array_equal(a.cases[2].images, b.cases[2].images)
    assert np.array_equal(a.cases[2].masks, b.cases[2].masks)


def test_model_shapes_and_variants():
    m = aaunet.Model(SMALL, seed=1)
    logits, alphas = m.forward(np.zeros((2, 3, 64, 96), np.float32))
    assert logits.shape == (2, 8, 64, 96)
    assert len(alphas) == 4
    assert m.predict(np.zeros((1, 3, 64, 64), np.float32)).shape == (1, 64, 64)
    plain = aaunet.Model(dict(SMALL, use_space_attention=False, use_channel_attention=False))
    assert plain.variant == "RSU" and m.variant == "RSU+SC"
    assert plain.forward(np.zeros((1, 3, 64, 64), np.float32))[1] == []
    assert not [n for n, _ in plain.parameters() if "gate" in n or ".ca." in n]
    assert aaunet.Model().parameter_count == 2155808


def test_bad_inputs_raise():
    m = aaunet.Model(SMALL)
    with pytest.raises(aaunet.ConfigError):
        m.forward(np.zeros((1, 3, 48, 64), np.float32))
    with pytest.raises(aaunet.ConfigError, match="widht"):
        aaunet.Model({"encoder": {"widht": 3}})
    with pytest.raises(ValueError):
        aaunet.Model("not json")  # strings are not configs


def test_losses_and_dice():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(2, 4, 3, 3)).astype(np.float32)
    target = rng.integers(0, 4, size=(2, 3, 3)).astype(np.uint8)
    ce = aaunet.focal_loss(logits, target, [1.0] * 4, gamma=0.0)
    z = logits.astype(np.float64)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    ref = -np.take_along_axis(logp, target[:, None].astype(np.int64), axis=1).mean()
    assert ce == pytest.approx(ref, abs=1e-5)
    g = np.zeros((2, 5), np.uint8)
    p = np.zeros((2, 5), np.uint8)
    g.flat[:6] = 1
    p.flat[[0, 1, 2, 6]] = 1
    assert aaunet.dice_score(p, g, 1) == 0.6
    assert aaunet.dice_score(p, g, 3) is None
    with pytest.raises(aaunet.DataError):
        aaunet.focal_loss(logits, np.full((2, 3, 3), 5, np.uint8), [1.0] * 4)


def test_overlay_palette():
    img = np.full((1, 2), 0.5, np.float32)
    rgb = aaunet.render_overlay(img, np.array([[0, 1]], np.uint8), opacity=1.0)
    assert rgb.shape == (1, 2, 3)
    assert rgb[0, 0].tolist() == [128, 128, 128] and rgb[0, 1].tolist() == [255, 0, 0]


def test_train_save_load_evaluate(data, tmp_path):
    cfg = {"model": SMALL, "batch_size": 2, "max_steps": 4, "eval_interval": 0, "seed": 3}
    t = aaunet.Trainer(cfg, data, str(tmp_path / "run"))
    t.run_until(4)
    assert t.steps_done == 4 and len(t.losses) == 4 and all(np.isfinite(t.losses))
    report = aaunet.evaluate(t.model, data, "val")
    assert set(aaunet.CLASS_NAMES[1:]) <= set(report["per_class"])
    x = data.cases[0].stack(5)
    t.model.save(str(tmp_path / "m.ckpt"))
    again = aaunet.load_model(str(tmp_path / "m.ckpt"))
    assert np.array_equal(t.model.forward(x)[0], again.forward(x)[0])
    assert json.loads(again.config_json)["encoder"]["base_width"] == 8
    with pytest.raises(aaunet.IoError):
        aaunet.load_model(str(tmp_path / "missing.ckpt"))
