import threading
import time

import numpy as np
import pytest

from landpatch.dataset import ImageEntry, make_dataset
from landpatch.errors import CheckpointError, DataError, TrainingError
from landpatch.nn import (
    Checkpoint,
    EpochStats,
    ModelSpec,
    RunControl,
    TrainConfig,
    activation,
    backward,
    build_architecture,
    conv2d,
    cross_entropy,
    default_convnet,
    dense,
    dropout,
    flatten,
    forward,
    init_weights,
    load_checkpoint,
    maxpool,
    predict_proba,
    save_checkpoint,
    softmax,
    train,
)
from landpatch.nn.train import resolve_spec
from conftest import blob_dataset, rand_image


def tiny_spec(px=8, channels=3):
    return ModelSpec(input_px=px, input_channels=channels, layers=(
        conv2d(3, 4),
        activation("relu"),
        maxpool(2),
        flatten(),
        dense(2),
    ))


def loss_of(spec, weights, x, y):
    probs, _ = forward(spec, weights, x, mode="eval")
    return cross_entropy(probs, y)


def analytic_grads(spec, weights, x, y):
    probs, cache = forward(spec, weights, x, mode="eval")
    grad = probs.copy()
    grad[np.arange(len(y)), y] -= 1.0
    grad /= len(y)
    return backward(cache, grad)


def fd_grad(spec, weights, x, y, name, index, eps=1e-5):
    flat = weights[name].reshape(-1)
    orig = flat[index]
    flat[index] = orig + eps
    lp = loss_of(spec, weights, x, y)
    flat[index] = orig - eps
    lm = loss_of(spec, weights, x, y)
    flat[index] = orig
    return (lp - lm) / (2 * eps)


def max_rel_error(spec, weights, x, y):
    grads = analytic_grads(spec, weights, x, y)
    worst = 0.0
    for name, g in grads.items():
        gf = g.reshape(-1)
        for i in range(gf.size):
            f = fd_grad(spec, weights, x, y, name, i)
            a = gf[i]
            worst = max(worst, abs(a - f) / max(abs(a), abs(f), 1e-6))
    return worst


def test_zero_weight_head_gives_half_half():
    spec = ModelSpec(input_px=4, layers=(flatten(), dense(2)))
    weights = {"layer1.w": np.zeros((4 * 4 * 3, 2)), "layer1.b": np.zeros(2)}
    probs, _ = forward(spec, weights, np.random.default_rng(0).random((3, 4, 4, 3)))
    np.testing.assert_allclose(probs, 0.5)


def test_identity_1x1_conv_passes_input_through():
    spec = ModelSpec(input_px=5, layers=(conv2d(1, 3), flatten(), dense(2)))
    weights = init_weights(spec, 0)
    w = np.zeros((1, 1, 3, 3))
    for c in range(3):
        w[0, 0, c, c] = 1.0
    weights["layer0.w"] = w
    weights["layer0.b"] = np.zeros(3)
    x = np.random.default_rng(1).random((2, 5, 5, 3))
    _, cache = forward(spec, weights, x)
    kind, _, saved = cache["steps"][2]  # dense layer's input = flattened conv out
    assert kind == "dense"
    np.testing.assert_allclose(saved, x.reshape(2, -1), atol=1e-15)


def test_hand_computed_conv_value():
    from landpatch import kernels

    x = np.array([[[[1.0], [2.0]], [[3.0], [4.0]]]])  # (1, 2, 2, 1)
    w = np.array([[[[5.0]], [[6.0]]], [[[7.0]], [[8.0]]]])  # (2, 2, 1, 1)
    y = kernels.conv2d_forward(x, w, np.zeros(1), 1)
    # 1*5 + 2*6 + 3*7 + 4*8 = 70
    assert y.shape == (1, 1, 1, 1)
    assert y[0, 0, 0, 0] == pytest.approx(70.0, abs=1e-12)


def test_softmax_rows_sum_to_one():
    z = np.random.default_rng(2).normal(scale=20, size=(50, 2))
    s = softmax(z)
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    spec = tiny_spec()
    weights = init_weights(spec, 12)
    x = rng.random((3, 8, 8, 3))
    y = np.array([0, 1, 0])
    assert max_rel_error(spec, weights, x, y) <= 1e-4


def test_gradcheck_with_sigmoid_and_tanh():
    rng = np.random.default_rng(3)
    for fn in ("sigmoid", "tanh"):
        spec = ModelSpec(input_px=6, layers=(
            conv2d(3, 3), activation(fn), maxpool(2), flatten(), dense(4),
            activation(fn), dense(2),
        ))
        weights = init_weights(spec, 5)
        x = rng.random((2, 6, 6, 3))
        y = np.array([1, 0])
        assert max_rel_error(spec, weights, x, y) <= 1e-4


def test_zero_upstream_gradient_gives_zero_grads():
    spec = tiny_spec()
    weights = init_weights(spec, 4)
    x = np.random.default_rng(4).random((2, 8, 8, 3))
    _, cache = forward(spec, weights, x)
    grads = backward(cache, np.zeros((2, 2)))
    for g in grads.values():
        assert (g == 0).all()


def test_duplicated_sample_mean_reduction():
    spec = tiny_spec()
    weights = init_weights(spec, 6)
    rng = np.random.default_rng(6)
    x1 = rng.random((1, 8, 8, 3))
    y1 = np.array([1])
    g1 = analytic_grads(spec, weights, x1, y1)
    x2 = np.concatenate([x1, x1])
    y2 = np.array([1, 1])
    g2 = analytic_grads(spec, weights, x2, y2)
    for name in g1:
        np.testing.assert_allclose(g2[name], g1[name], rtol=1e-12, atol=1e-14)


def test_backward_rejects_mismatched_grad():
    spec = tiny_spec()
    weights = init_weights(spec, 7)
    _, cache = forward(spec, weights, np.zeros((2, 8, 8, 3)))
    with pytest.raises(DataError):
        backward(cache, np.zeros((3, 2)))


def test_forward_shape_mismatch():
    spec = tiny_spec()
    weights = init_weights(spec, 8)
    with pytest.raises(DataError):
        forward(spec, weights, np.zeros((1, 9, 9, 3)))


def test_forward_finite_check_names_layer():
    spec = tiny_spec()
    weights = init_weights(spec, 9)
    weights["layer0.w"] = weights["layer0.w"].copy()
    weights["layer0.w"][0, 0, 0, 0] = np.nan
    x = np.ones((1, 8, 8, 3))
    probs, _ = forward(spec, weights, x)  # silent by default
    assert np.isnan(probs).any()
    with pytest.raises(DataError) as err:
        forward(spec, weights, x, check_finite=True)
    assert "layer 0" in str(err.value)


def test_model_spec_validation():
    with pytest.raises(DataError):
        ModelSpec(input_px=8, layers=(flatten(), dense(3)))  # head must be dense(2)
    with pytest.raises(DataError):
        ModelSpec(input_px=8, layers=(dense(2),))  # dense on unflattened input
    with pytest.raises(DataError):
        ModelSpec(input_px=4, layers=(conv2d(5, 8), flatten(), dense(2)))  # kernel too big
    with pytest.raises(DataError):
        ModelSpec(input_px=8, layers=(flatten(), dropout(1.0), dense(2)))
    with pytest.raises(DataError):
        ModelSpec(input_px=8, layers=(activation("softplus"), flatten(), dense(2)))


def test_model_spec_dict_roundtrip():
    spec = default_convnet(32)
    assert ModelSpec.from_dict(spec.to_dict()) == spec


def test_architecture_registry():
    spec = build_architecture("convnet", 32)
    assert spec.input_px == 32
    with pytest.raises(DataError) as err:
        build_architecture("resnet50", 32)
    assert "convnet" in str(err.value)


def test_train_config_validation():
    with pytest.raises(DataError):
        TrainConfig(max_epochs=0)
    with pytest.raises(DataError):
        TrainConfig(batch_size=0)
    with pytest.raises(DataError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(DataError):
        TrainConfig(learning_rate=-1e-3)
    with pytest.raises(DataError):
        TrainConfig(val_split=0.0)
    with pytest.raises(DataError) as err:
        TrainConfig(pretrained="imagenet")
    assert "none" in str(err.value)
    assert TrainConfig.from_json(TrainConfig(seed=9).to_json()) == TrainConfig(seed=9)


def test_single_epoch_run_emits_one_stats():
    ds = blob_dataset(n_per_class=6, side=8, seed=1)
    seen = []
    spec = tiny_spec()
    cfg = TrainConfig(max_epochs=1, batch_size=4, early_stopping_patience=0, seed=2)
    ckpt = train(ds, spec, cfg, progress=seen.append)
    assert len(ckpt.history) == 1 and len(seen) == 1
    assert isinstance(seen[0], EpochStats)
    assert seen[0].epoch == 1
    assert 0.0 <= seen[0].train_accuracy <= 1.0


def test_frozen_run_early_stops_at_patience():
    ds = blob_dataset(n_per_class=6, side=8, seed=1)
    spec = tiny_spec()
    cfg = TrainConfig(max_epochs=50, batch_size=4, early_stopping_patience=2,
                      learning_rate=0.0, optimizer="sgd", seed=3)
    ckpt = train(ds, spec, cfg)
    assert len(ckpt.history) == 3  # baseline epoch + 2 epochs with no improvement
    assert ckpt.best_epoch == 1
    initial = init_weights(resolve_spec(spec, cfg), cfg.seed)
    for name, w in ckpt.weights.items():
        np.testing.assert_array_equal(w, initial[name])


def test_best_epoch_has_minimum_val_loss(fitted_blob_checkpoint):
    ckpt = fitted_blob_checkpoint
    losses = [s.val_loss for s in ckpt.history]
    if ckpt.best_epoch:
        assert ckpt.history[ckpt.best_epoch - 1].val_loss == min(losses)


def test_blob_training_learns(fitted_blob_checkpoint):
    assert fitted_blob_checkpoint.history[-1].val_accuracy >= 0.95


def test_training_is_deterministic():
    ds = blob_dataset(n_per_class=5, side=8, seed=4)
    spec = tiny_spec()
    cfg = TrainConfig(max_epochs=2, batch_size=4, early_stopping_patience=0, seed=11)
    a = train(ds, spec, cfg)
    b = train(ds, spec, cfg)
    for name in a.weights:
        np.testing.assert_array_equal(a.weights[name], b.weights[name])


def test_nan_loss_raises_training_error():
    # an infinite step turns the weights into mixed +/-inf, so the next
    # batch's loss is NaN and the trainer must fail loudly, naming the spot
    ds = blob_dataset(n_per_class=6, side=8, seed=5)
    spec = tiny_spec()
    cfg = TrainConfig(max_epochs=3, batch_size=4, early_stopping_patience=0,
                      optimizer="sgd", learning_rate=float("inf"), seed=1)
    with pytest.raises(TrainingError) as err:
        train(ds, spec, cfg)
    assert "epoch" in str(err.value) and "batch" in str(err.value)


def test_image_size_mismatch_rejected():
    ds = blob_dataset(n_per_class=4, side=10, seed=6)
    with pytest.raises(DataError):
        train(ds, tiny_spec(px=8), TrainConfig(max_epochs=1, seed=0))


def test_dropout_eval_is_seed_independent():
    spec = ModelSpec(input_px=6, layers=(flatten(), dense(8), activation("relu"),
                                         dropout(0.5), dense(2)))
    weights = init_weights(spec, 3)
    x = np.random.default_rng(1).random((4, 6, 6, 3))
    p1, _ = forward(spec, weights, x, mode="eval", seed=1)
    p2, _ = forward(spec, weights, x, mode="eval", seed=999)
    np.testing.assert_array_equal(p1, p2)
    t1, _ = forward(spec, weights, x, mode="train", seed=1)
    t2, _ = forward(spec, weights, x, mode="train", seed=2)
    assert not np.array_equal(t1, t2)


def test_config_overrides_apply():
    spec = default_convnet(16)
    cfg = TrainConfig(dropout_p=0.1, activation="tanh")
    resolved = resolve_spec(spec, cfg)
    assert all(ly.p == 0.1 for ly in resolved.layers if ly.kind == "dropout")
    assert all(ly.fn == "tanh" for ly in resolved.layers if ly.kind == "activation")


def test_checkpoint_roundtrip(tmp_path, fitted_blob_checkpoint):
    path = tmp_path / "model.dtck"
    save_checkpoint(fitted_blob_checkpoint, path)
    loaded = load_checkpoint(path)
    assert loaded.label_order == fitted_blob_checkpoint.label_order
    assert loaded.model_spec == fitted_blob_checkpoint.model_spec
    assert loaded.train_config == fitted_blob_checkpoint.train_config
    assert [s.to_dict() for s in loaded.history] == [s.to_dict() for s in fitted_blob_checkpoint.history]
    for name in fitted_blob_checkpoint.weights:
        np.testing.assert_array_equal(loaded.weights[name], fitted_blob_checkpoint.weights[name])


def test_checkpoint_predictions_stable_across_save_load(tmp_path, fitted_blob_checkpoint):
    rng = np.random.default_rng(8)
    img = rand_image(rng, 16)
    before = predict_proba(fitted_blob_checkpoint, img)
    path = tmp_path / "m.dtck"
    save_checkpoint(fitted_blob_checkpoint, path)
    after = predict_proba(load_checkpoint(path), img)
    assert before == after


def test_truncated_checkpoint_fails_checksum(tmp_path, fitted_blob_checkpoint):
    path = tmp_path / "m.dtck"
    save_checkpoint(fitted_blob_checkpoint, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 512])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_corrupted_weights_fail_checksum(tmp_path, fitted_blob_checkpoint):
    path = tmp_path / "m.dtck"
    save_checkpoint(fitted_blob_checkpoint, path)
    data = bytearray(path.read_bytes())
    data[-10] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_not_a_checkpoint(tmp_path):
    path = tmp_path / "m.dtck"
    path.write_bytes(b"PK\x03\x04 something else")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_version_mismatch(tmp_path, fitted_blob_checkpoint):
    import json as _json
    import struct

    path = tmp_path / "m.dtck"
    save_checkpoint(fitted_blob_checkpoint, path)
    raw = path.read_bytes()
    (hlen,) = struct.unpack("<Q", raw[4:12])
    header = _json.loads(raw[12 : 12 + hlen])
    header["format_version"] = 99
    new_head = _json.dumps(header, sort_keys=True).encode()
    path.write_bytes(raw[:4] + struct.pack("<Q", len(new_head)) + new_head + raw[12 + hlen :])
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path)
    assert "version" in str(err.value)


def test_predict_proba_sums_to_one(fitted_blob_checkpoint):
    rng = np.random.default_rng(2)
    p_neg, p_pos = predict_proba(fitted_blob_checkpoint, rand_image(rng, 16))
    assert p_neg + p_pos == pytest.approx(1.0, abs=1e-12)


def test_run_control_transitions():
    rc = RunControl()
    assert rc.state == RunControl.RUNNING
    rc.pause()
    assert rc.state == RunControl.PAUSED
    with pytest.raises(DataError):
        rc.pause()
    rc.resume()
    with pytest.raises(DataError):
        rc.resume()
    rc.stop()
    with pytest.raises(DataError):
        rc.pause()
    rc.reset()
    assert rc.state == RunControl.RESET_PENDING
    with pytest.raises(DataError):
        rc.stop()


def test_run_control_reset_requires_stopped():
    rc = RunControl()
    with pytest.raises(DataError):
        rc.reset()


def test_pause_blocks_and_stop_finishes_training():
    ds = blob_dataset(n_per_class=8, side=8, seed=9)
    spec = tiny_spec()
    cfg = TrainConfig(max_epochs=10_000, batch_size=2, early_stopping_patience=0, seed=5)
    control = RunControl()
    epochs_seen = []
    result = {}

    def worker():
        result["ckpt"] = train(ds, spec, cfg, control=control,
                               progress=lambda s: epochs_seen.append(s.epoch))

    thread = threading.Thread(target=worker)
    thread.start()
    time.sleep(0.3)
    control.pause()
    time.sleep(0.2)
    at_pause = len(epochs_seen)
    time.sleep(0.3)
    assert len(epochs_seen) == at_pause  # nothing progressed while paused
    control.resume()
    time.sleep(0.3)
    control.stop()
    thread.join(timeout=30)
    assert not thread.is_alive()
    assert isinstance(result["ckpt"], Checkpoint)
    assert len(epochs_seen) >= at_pause
