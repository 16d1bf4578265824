"""Layer semantics checked against naive loop oracles and closed-form
identities; whole-network shape and folding laws."""
import numpy as np
import pytest

from srkit import ContractError, Image
from srkit.maps import DegradationMaps, stretch
from srkit.net import (
    Activation,
    BatchNorm,
    ConvBlock,
    Model,
    ModelConfig,
    bn_forward,
    concat_input,
    conv3x3_forward,
    fold_bn,
    forward,
    forward_tensor,
    init_model,
    pixel_shuffle,
    pixel_unshuffle,
    relu_forward,
    strip_noise_channel,
)
from srkit.rng import gaussian_field


def _conv_ref(x, w, b):
    """Six explicit loops, zero padding 1."""
    n, c_in, h, wd = x.shape
    c_out = w.shape[0]
    out = np.zeros((n, c_out, h, wd))
    for nn in range(n):
        for co in range(c_out):
            for i in range(h):
                for j in range(wd):
                    acc = float(b[co])
                    for ci in range(c_in):
                        for di in range(3):
                            for dj in range(3):
                                r, c = i + di - 1, j + dj - 1
                                if 0 <= r < h and 0 <= c < wd:
                                    acc += w[co, ci, di, dj] * x[nn, ci, r, c]
                    out[nn, co, i, j] = acc
    return out


def test_conv_identity_filter():
    x = Activation(gaussian_field(1, (2, 1, 6, 7)).astype(np.float32))
    w = np.zeros((1, 1, 3, 3), dtype=np.float32)
    w[0, 0, 1, 1] = 1.0
    out = conv3x3_forward(x, w, np.zeros(1, dtype=np.float32))
    assert np.array_equal(out.data, x.data)


def test_conv_zero_weights_give_bias():
    x = Activation(gaussian_field(2, (1, 3, 5, 5)).astype(np.float32))
    b = np.array([0.25, -1.5], dtype=np.float32)
    out = conv3x3_forward(x, np.zeros((2, 3, 3, 3), dtype=np.float32), b)
    assert np.all(out.data[0, 0] == 0.25)
    assert np.all(out.data[0, 1] == -1.5)


def test_conv_matches_loop_oracle():
    x = gaussian_field(3, (1, 4, 5, 5)).astype(np.float32)
    w = (0.3 * gaussian_field(4, (3, 4, 3, 3))).astype(np.float32)
    b = gaussian_field(5, (3,)).astype(np.float32)
    out = conv3x3_forward(Activation(x), w, b)
    ref = _conv_ref(x.astype(np.float64), w.astype(np.float64), b)
    assert np.abs(out.data - ref).max() < 1e-5


def test_conv_shape_guards():
    x = Activation(np.zeros((1, 4, 5, 5), dtype=np.float32))
    with pytest.raises(ContractError):
        conv3x3_forward(x, np.zeros((2, 3, 3, 3)), np.zeros(2))
    with pytest.raises(ContractError):
        conv3x3_forward(x, np.zeros((2, 4, 5, 5)), np.zeros(2))
    with pytest.raises(ContractError):
        conv3x3_forward(x, np.zeros((2, 4, 3, 3)), np.zeros(3))


def test_bn_eval_identity_params():
    x = Activation(gaussian_field(6, (2, 3, 4, 4)).astype(np.float32))
    bn = BatchNorm(np.ones(3), np.zeros(3), np.zeros(3), np.ones(3))
    out = bn_forward(x, bn, mode="eval")
    assert np.abs(out.data - x.data).max() < 1e-4


def test_bn_train_normalizes_and_tracks_stats():
    x = Activation((2.0 + 3.0 * gaussian_field(7, (4, 2, 6, 6))).astype(np.float32))
    bn = BatchNorm(np.ones(2), np.zeros(2), np.full(2, 0.5), np.full(2, 2.0))
    out = bn_forward(x, bn, mode="train")
    for ch in range(2):
        assert abs(out.data[:, ch].mean()) < 1e-4
        assert abs(out.data[:, ch].var() - 1.0) < 1e-3
    batch_mean = x.data.mean(axis=(0, 2, 3))
    assert np.allclose(bn.running_mean, 0.9 * 0.5 + 0.1 * batch_mean, atol=1e-6)


def test_bn_mode_guards():
    x = Activation(np.ones((1, 2, 1, 1), dtype=np.float32))
    bn = BatchNorm(np.ones(2), np.zeros(2), np.zeros(2), np.ones(2))
    with pytest.raises(ContractError):
        bn_forward(x, bn, mode="train")
    with pytest.raises(ContractError):
        bn_forward(x, bn, mode="test")


def test_relu():
    assert np.all(relu_forward(Activation(np.full((1, 1, 2, 2), -3.0))).data == 0)
    pos = Activation(np.full((1, 1, 2, 2), 1.5))
    assert np.array_equal(relu_forward(pos).data, pos.data)
    mixed = gaussian_field(8, (1, 3, 5, 5))
    out = relu_forward(Activation(mixed))
    assert np.array_equal(out.data, np.maximum(mixed, 0))


def test_pixel_shuffle_definition():
    x = Activation(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1, 1))
    out = pixel_shuffle(x, 2)
    assert np.array_equal(out.data[0, 0], [[1.0, 2.0], [3.0, 4.0]])


def test_pixel_shuffle_roundtrip_and_permutation():
    x = Activation(gaussian_field(9, (2, 18, 4, 5)))
    out = pixel_shuffle(x, 3)
    assert out.data.shape == (2, 2, 12, 15)
    back = pixel_unshuffle(out, 3)
    assert np.array_equal(back.data, x.data)
    assert np.array_equal(np.sort(out.data.ravel()), np.sort(x.data.ravel()))


def test_pixel_shuffle_shape_example():
    x = Activation(np.zeros((1, 4, 40, 40)))
    assert pixel_shuffle(x, 2).data.shape == (1, 1, 80, 80)
    with pytest.raises(ContractError):
        pixel_shuffle(Activation(np.zeros((1, 5, 4, 4))), 2)


def test_concat_input_layout():
    lr = Image(gaussian_field(10, (6, 7, 3)).astype(np.float32), unclipped=True)
    maps = stretch(np.arange(15, dtype=np.float64) / 20.0, 30.0, width=7, height=6)
    act = concat_input(lr, maps)
    assert act.data.shape == (1, 19, 6, 7)
    assert np.allclose(act.data[0, :3].transpose(1, 2, 0), lr.data)
    assert np.allclose(act.data[0, 3:].transpose(1, 2, 0), maps.data)
    bad = stretch(np.zeros(15), 0.0, width=5, height=6)
    with pytest.raises(ContractError):
        concat_input(lr, bad)


def test_activation_guards():
    with pytest.raises(ContractError):
        Activation(np.zeros((3, 4, 5)))
    with pytest.raises(ContractError):
        Activation(np.full((1, 1, 2, 2), np.nan))
    act = Activation(np.zeros((2, 3, 4, 5)))
    assert (act.batch, act.channels, act.height, act.width) == (2, 3, 4, 5)


def _small_config(scale, noise=True):
    return ModelConfig(scale=scale, depth=3, width=6, color_channels=3,
                       coeff_dim=15, noise_conditioned=noise)


def test_forward_shape_law():
    for s in (2, 3, 4):
        model = init_model(_small_config(s), seed=1)
        lr = Image(gaussian_field(11, (8, 9, 3)).astype(np.float32), unclipped=True)
        maps = stretch(np.zeros(15), 10.0, width=9, height=8)
        out = forward(model, lr, maps)
        assert out.data.shape == (8 * s, 9 * s, 3)
        assert np.isfinite(out.data).all()
        assert out.unclipped


def test_forward_noise_free_model_needs_zero_noise_plane():
    model = init_model(_small_config(2, noise=False), seed=1)
    lr = Image(np.zeros((8, 9, 3), dtype=np.float32))
    noisy = stretch(np.zeros(15), 10.0, width=9, height=8)
    with pytest.raises(ContractError):
        forward(model, lr, noisy)
    clean = stretch(np.zeros(15), 0.0, width=9, height=8)
    assert forward(model, lr, clean).data.shape == (16, 18, 3)
    shallow = DegradationMaps(np.zeros((8, 9, 15), dtype=np.float32))
    with pytest.raises(ContractError):
        forward(model, lr, shallow)


def test_forward_deterministic():
    model = init_model(_small_config(2), seed=3)
    x = gaussian_field(12, (2, 19, 6, 6)).astype(np.float32)
    a, _ = forward_tensor(model, x)
    b, _ = forward_tensor(model, x)
    assert np.array_equal(a, b)


def test_init_model_deterministic_and_scaled():
    cfg = _small_config(2)
    a = init_model(cfg, seed=7)
    b = init_model(cfg, seed=7)
    c = init_model(cfg, seed=8)
    for la, lb in zip(a.layers, b.layers):
        assert np.array_equal(la.weights, lb.weights)
    assert not np.array_equal(a.layers[0].weights, c.layers[0].weights)
    fan_in = cfg.in_channels * 9
    std = a.layers[0].weights.std()
    assert abs(std - np.sqrt(2.0 / fan_in)) < 0.2 * np.sqrt(2.0 / fan_in)
    assert np.all(a.layers[0].bias == 0)


def test_init_model_activations_stay_bounded():
    cfg = ModelConfig(scale=2, depth=12, width=16, color_channels=3)
    model = init_model(cfg, seed=5)
    act = Activation(gaussian_field(13, (1, 19, 8, 8)).astype(np.float32))
    for block in model.layers:
        act = conv3x3_forward(act, block.weights, block.bias)
        if block.bn is not None:
            act = bn_forward(act, block.bn, mode="eval")
        if block.relu:
            act = relu_forward(act)
        sd = float(act.data.std())
        assert 0.1 < sd < 10.0


def test_fold_bn_preserves_eval_forward():
    model = init_model(_small_config(3), seed=9)
    # make the BN statistics non-trivial before folding
    rng_fields = gaussian_field(14, (4, 6))
    for i, block in enumerate(model.layers[:-1]):
        block.bn.running_mean = 0.3 * rng_fields[0, :6].astype(np.float32) + i * 0.01
        block.bn.running_var = (1.0 + 0.5 * np.abs(rng_fields[1, :6])).astype(np.float32)
        block.bn.gamma = (1.0 + 0.2 * rng_fields[2, :6]).astype(np.float32)
        block.bn.beta = (0.1 * rng_fields[3, :6]).astype(np.float32)
    folded = fold_bn(model)
    assert folded.folded
    assert all(b.bn is None for b in folded.layers)
    x = gaussian_field(15, (1, 19, 7, 7)).astype(np.float32)
    a, _ = forward_tensor(model, x)
    b, _ = forward_tensor(folded, x)
    assert np.abs(a - b).max() < 1e-5
    with pytest.raises(ContractError):
        fold_bn(folded)


def test_fold_bn_identity_stats_keep_weights():
    model = init_model(_small_config(2), seed=2)
    folded = fold_bn(model)
    w0, w1 = model.layers[0].weights, folded.layers[0].weights
    assert np.abs(w0 - w1).max() < 1e-4 * np.abs(w0).max()


def test_strip_noise_channel_exact_at_sigma_zero():
    model = init_model(_small_config(2), seed=4)
    lr = Image(gaussian_field(16, (8, 8, 3)).astype(np.float32), unclipped=True)
    maps = stretch(0.1 * np.arange(15, dtype=np.float64), 0.0, width=8, height=8)
    stripped = strip_noise_channel(model)
    assert stripped.in_channels == 18
    assert stripped.layers[0].weights.shape[1] == 18
    a = forward(model, lr, maps)
    b = forward(stripped, lr, maps)
    assert np.array_equal(a.data, b.data)
    with pytest.raises(ContractError):
        strip_noise_channel(stripped)


def test_config_guards():
    with pytest.raises(ContractError):
        ModelConfig(scale=5)
    with pytest.raises(ContractError):
        ModelConfig(scale=2, depth=1)
    cfg = ModelConfig(scale=2)
    assert cfg.in_channels == 19
    assert cfg.out_channels == 12
    assert cfg.depth == 12 and cfg.width == 128
