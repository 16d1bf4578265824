"""Analytic gradients checked against central finite differences on a
float64 shadow of a tiny model."""
import numpy as np
import pytest

from srkit import ContractError
from srkit.net import (
    BatchNorm,
    ConvBlock,
    Model,
    ModelConfig,
    backward,
    forward_tensor,
    init_model,
)
from srkit.rng import gaussian_field

H = 1e-3


def _tiny_model(seed=0):
    cfg = ModelConfig(scale=2, depth=3, width=4, color_channels=1,
                      coeff_dim=3, noise_conditioned=True)
    model = init_model(cfg, seed=seed)
    for block in model.layers:
        block.weights = block.weights.astype(np.float64)
        block.bias = block.bias.astype(np.float64)
        if block.bn is not None:
            block.bn.gamma = block.bn.gamma.astype(np.float64) * 1.1
            block.bn.beta = block.bn.beta.astype(np.float64) + 0.05
            block.bn.running_mean = block.bn.running_mean.astype(np.float64)
            block.bn.running_var = block.bn.running_var.astype(np.float64)
    return model


def _loss(model, x, g):
    """Linear functional of the output, plus the ReLU mask signature so
    kink crossings can be detected."""
    out, cache = forward_tensor(model, x, mode="train", keep_cache=True)
    masks = tuple(
        c[3].tobytes() for c in cache[0] if c[3] is not None
    )
    return float((out * g).sum()), masks


def _fd_grad(model, x, g, array):
    """Central differences; entries whose perturbation flips any ReLU
    mask sit on a kink where the derivative does not exist, so they are
    excluded via the validity mask."""
    grad = np.zeros_like(array)
    valid = np.ones(array.size, dtype=bool)
    flat = array.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + H
        plus, masks_p = _loss(model, x, g)
        flat[i] = orig - H
        minus, masks_m = _loss(model, x, g)
        flat[i] = orig
        grad.ravel()[i] = (plus - minus) / (2 * H)
        valid[i] = masks_p == masks_m
    return grad, valid


def _rel_err(a, b, valid=None):
    a, b = np.ravel(a), np.ravel(b)
    if valid is not None:
        assert valid.mean() > 0.5  # the check must cover most entries
        a, b = a[valid], b[valid]
    scale = np.maximum(np.abs(a) + np.abs(b), 1e-6)
    return (np.abs(a - b) / scale).max()


@pytest.fixture(scope="module")
def setup():
    model = _tiny_model()
    x = gaussian_field(21, (2, 5, 8, 8))
    g = gaussian_field(22, (2, 1, 16, 16))
    out, cache = forward_tensor(model, x, mode="train", keep_cache=True)
    grads = backward(model, cache, g)
    return model, x, g, grads


def test_conv_weight_gradients(setup):
    model, x, g, grads = setup
    for i, block in enumerate(model.layers):
        fd, valid = _fd_grad(model, x, g, block.weights)
        assert _rel_err(grads.conv_w[i], fd, valid) < 1e-4, f"layer {i} weights"


def test_conv_bias_gradients(setup):
    model, x, g, grads = setup
    for i, block in enumerate(model.layers):
        fd, valid = _fd_grad(model, x, g, block.bias)
        assert _rel_err(grads.conv_b[i], fd, valid) < 1e-4, f"layer {i} bias"


def test_bn_gradients(setup):
    model, x, g, grads = setup
    for i, block in enumerate(model.layers):
        if block.bn is None:
            continue
        fd_gamma, valid_g = _fd_grad(model, x, g, block.bn.gamma)
        fd_beta, valid_b = _fd_grad(model, x, g, block.bn.beta)
        assert _rel_err(grads.bn_gamma[i], fd_gamma, valid_g) < 1e-3, f"layer {i} gamma"
        assert _rel_err(grads.bn_beta[i], fd_beta, valid_b) < 1e-3, f"layer {i} beta"


def test_input_gradient(setup):
    model, x, g, grads = setup
    x_var = x.copy()
    fd = np.zeros_like(x_var)
    flat = x_var.ravel()
    idx = np.arange(0, flat.size, 7)  # sampled positions
    ok = []
    for i in idx:
        orig = flat[i]
        flat[i] = orig + H
        plus, masks_p = _loss(model, x_var, g)
        flat[i] = orig - H
        minus, masks_m = _loss(model, x_var, g)
        flat[i] = orig
        fd.ravel()[i] = (plus - minus) / (2 * H)
        ok.append(masks_p == masks_m)
    an = grads.d_input.ravel()[idx]
    assert _rel_err(an, fd.ravel()[idx], np.array(ok)) < 1e-4


def test_zero_grad_output_gives_zero_grads():
    model = _tiny_model(seed=3)
    x = gaussian_field(23, (1, 5, 6, 6))
    _, cache = forward_tensor(model, x, mode="train", keep_cache=True)
    grads = backward(model, cache, np.zeros((1, 1, 12, 12)))
    for i in range(len(model.layers)):
        assert np.all(grads.conv_w[i] == 0)
        assert np.all(grads.conv_b[i] == 0)
    assert np.all(grads.d_input == 0)


def test_dead_relu_units_get_zero_gradient():
    # no BN so a large negative bias keeps channel 0 inactive everywhere
    w0 = 0.1 * gaussian_field(24, (2, 1, 3, 3))
    w1 = 0.1 * gaussian_field(25, (4, 2, 3, 3))
    model = Model(scale=2, depth=2, width=2, in_channels=1, color_channels=1,
                  noise_conditioned=False,
                  layers=[
                      ConvBlock(w0, np.array([-50.0, 0.0]), bn=None, relu=True),
                      ConvBlock(w1, np.zeros(4), bn=None, relu=False),
                  ])
    x = gaussian_field(26, (1, 1, 6, 6))
    out, cache = forward_tensor(model, x, mode="train", keep_cache=True)
    grads = backward(model, cache, np.ones_like(out))
    assert np.all(grads.conv_w[0][0] == 0)  # dead output channel
    assert grads.conv_b[0][0] == 0
    assert np.any(grads.conv_w[0][1] != 0)


def test_backward_requires_matching_cache():
    model = _tiny_model(seed=5)
    x = gaussian_field(27, (1, 5, 6, 6))
    out, cache = forward_tensor(model, x, mode="train", keep_cache=True)
    with pytest.raises(ContractError):
        backward(model, None, np.ones_like(out))
    with pytest.raises(ContractError):
        backward(model, cache, np.ones((1, 1, 10, 10)))
