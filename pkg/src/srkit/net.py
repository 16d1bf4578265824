"""Plain convolutional network mapping an LR image plus degradation
maps to the HR estimate.

Layout: (conv 3x3 -> BN -> ReLU) x (depth-1), a final plain conv to
s^2*C channels, then a sub-pixel rearrangement to sH x sW x C. No
residual path and no pre-interpolated input. Everything runs on NCHW
numpy tensors; convolution is im2col with an explicit col2im adjoint so
gradients are exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .image import Image
from .maps import DegradationMaps
from .rng import standard_gaussian

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.9


@dataclass(frozen=True)
class Activation:
    """One NCHW tensor flowing through the network."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 4:
            raise ContractError(f"activations are N,C,H,W; got shape {d.shape}")
        if not np.isfinite(d).all():
            raise ContractError("activation contains non-finite values")
        object.__setattr__(self, "data", d)

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]


@dataclass
class BatchNorm:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = BN_EPSILON
    momentum: float = BN_MOMENTUM


@dataclass
class ConvBlock:
    """One conv layer with optional BN and ReLU following it."""

    weights: np.ndarray  # (out, in, 3, 3)
    bias: np.ndarray  # (out,)
    bn: BatchNorm | None = None
    relu: bool = False


@dataclass(frozen=True)
class ModelConfig:
    scale: int
    depth: int = 12
    width: int = 128
    color_channels: int = 3
    coeff_dim: int = 15
    noise_conditioned: bool = True

    def __post_init__(self):
        if self.scale not in (2, 3, 4):
            raise ContractError(f"scale must be 2, 3 or 4, got {self.scale!r}")
        if self.depth < 2:
            raise ContractError("depth must be at least 2")
        if self.width < 1 or self.color_channels not in (1, 3):
            raise ContractError("invalid width or channel count")

    @property
    def in_channels(self) -> int:
        return self.color_channels + self.coeff_dim + (1 if self.noise_conditioned else 0)

    @property
    def out_channels(self) -> int:
        return self.scale**2 * self.color_channels


@dataclass
class Model:
    scale: int
    depth: int
    width: int
    in_channels: int
    color_channels: int
    noise_conditioned: bool
    layers: list[ConvBlock] = field(repr=False)
    folded: bool = False

    @property
    def coeff_dim(self) -> int:
        return self.in_channels - self.color_channels - (1 if self.noise_conditioned else 0)


def init_model(config: ModelConfig, seed: int = 0) -> Model:
    """Fresh model: ReLU-aware scaled-normal conv weights (std
    sqrt(2/fan_in)), zero biases, identity BN; deterministic per seed."""
    layers = []
    offset = 0
    for i in range(config.depth):
        c_in = config.in_channels if i == 0 else config.width
        c_out = config.out_channels if i == config.depth - 1 else config.width
        fan_in = c_in * 9
        count = c_out * fan_in
        flat = standard_gaussian(seed, count, offset=offset) * np.sqrt(2.0 / fan_in)
        offset += count
        w = flat.reshape(c_out, c_in, 3, 3).astype(np.float32)
        b = np.zeros(c_out, dtype=np.float32)
        last = i == config.depth - 1
        bn = None
        if not last:
            bn = BatchNorm(
                gamma=np.ones(c_out, dtype=np.float32),
                beta=np.zeros(c_out, dtype=np.float32),
                running_mean=np.zeros(c_out, dtype=np.float32),
                running_var=np.ones(c_out, dtype=np.float32),
            )
        layers.append(ConvBlock(w, b, bn=bn, relu=not last))
    return Model(
        scale=config.scale,
        depth=config.depth,
        width=config.width,
        in_channels=config.in_channels,
        color_channels=config.color_channels,
        noise_conditioned=config.noise_conditioned,
        layers=layers,
    )


# ---------------------------------------------------------------------------
# raw-tensor layer math (training path works on these directly)


def _im2col(x, kh=3, kw=3):
    """(N,C,H,W) -> (N*H*W, C*kh*kw) under zero padding 1, stride 1."""
    n, c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(2, 3))
    # (N, C, H, W, kh, kw) -> (N, H, W, C, kh, kw)
    return np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * w, c * kh * kw)


def _col2im(dcol, shape, kh=3, kw=3):
    """Adjoint of _im2col: scatter-add columns back to (N,C,H,W)."""
    n, c, h, w = shape
    dpad = np.zeros((n, c, h + 2, w + 2), dtype=dcol.dtype)
    dcol = dcol.reshape(n, h, w, c, kh, kw)
    for di in range(kh):
        for dj in range(kw):
            dpad[:, :, di : di + h, dj : dj + w] += dcol[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    return dpad[:, :, 1:-1, 1:-1]


def _conv_fw(x, weights, bias):
    n, c, h, w = x.shape
    c_out = weights.shape[0]
    col = _im2col(x)
    out = col @ weights.reshape(c_out, -1).T + bias
    return out.reshape(n, h, w, c_out).transpose(0, 3, 1, 2), col


def _conv_bw(dout, col, weights, x_shape):
    n, c_out = dout.shape[0], dout.shape[1]
    dmat = dout.transpose(0, 2, 3, 1).reshape(-1, c_out)
    dw = (dmat.T @ col).reshape(weights.shape)
    db = dmat.sum(axis=0)
    dcol = dmat @ weights.reshape(c_out, -1)
    return _col2im(dcol, x_shape), dw, db


def _bn_fw_train(x, bn):
    axes = (0, 2, 3)
    mean = x.mean(axis=axes)
    var = x.var(axis=axes)
    inv_std = 1.0 / np.sqrt(var + bn.epsilon)
    xhat = (x - mean[:, None, None]) * inv_std[:, None, None]
    out = bn.gamma[:, None, None] * xhat + bn.beta[:, None, None]
    bn.running_mean = (bn.momentum * bn.running_mean + (1 - bn.momentum) * mean).astype(bn.running_mean.dtype)
    bn.running_var = (bn.momentum * bn.running_var + (1 - bn.momentum) * var).astype(bn.running_var.dtype)
    return out, (xhat, inv_std)


def _bn_fw_eval(x, bn):
    inv_std = 1.0 / np.sqrt(bn.running_var + bn.epsilon)
    scale = (bn.gamma * inv_std)[:, None, None]
    shift = (bn.beta - bn.gamma * bn.running_mean * inv_std)[:, None, None]
    return x * scale + shift


def _bn_bw_train(dout, cache, bn):
    xhat, inv_std = cache
    axes = (0, 2, 3)
    m = dout.shape[0] * dout.shape[2] * dout.shape[3]
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * bn.gamma[:, None, None]
    dx = (
        inv_std[:, None, None]
        * (dxhat - dxhat.sum(axis=axes)[:, None, None] / m - xhat * (dxhat * xhat).sum(axis=axes)[:, None, None] / m)
    )
    return dx, dgamma, dbeta


def _shuffle_fw(x, s):
    n, c_in, h, w = x.shape
    c = c_in // (s * s)
    return x.reshape(n, c, s, s, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h * s, w * s)


def _shuffle_bw(dout, s):
    n, c, hs, ws = dout.shape
    h, w = hs // s, ws // s
    return dout.reshape(n, c, h, s, w, s).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * s * s, h, w)


# ---------------------------------------------------------------------------
# public single-op wrappers


def conv3x3_forward(act: Activation, weights: np.ndarray, bias: np.ndarray) -> Activation:
    """Stride-1, zero-pad-1 correlation plus bias."""
    weights = np.asarray(weights)
    bias = np.asarray(bias)
    if weights.ndim != 4 or weights.shape[2:] != (3, 3):
        raise ContractError(f"weights must be (out, in, 3, 3), got {weights.shape}")
    if weights.shape[1] != act.channels:
        raise ContractError(
            f"weights expect {weights.shape[1]} input channels, activation has {act.channels}"
        )
    if bias.shape != (weights.shape[0],):
        raise ContractError("bias length must equal output channel count")
    out, _ = _conv_fw(act.data, weights, bias)
    return Activation(out)


def bn_forward(act: Activation, bn: BatchNorm, mode: str = "eval") -> Activation:
    if bn.gamma.shape != (act.channels,):
        raise ContractError("BN parameter length must equal channel count")
    if mode == "train":
        if act.batch * act.height * act.width < 2:
            raise ContractError("train-mode BN needs more than one sample per channel")
        out, _ = _bn_fw_train(act.data, bn)
    elif mode == "eval":
        out = _bn_fw_eval(act.data, bn)
    else:
        raise ContractError(f"unknown BN mode {mode!r}")
    return Activation(out)


def relu_forward(act: Activation) -> Activation:
    return Activation(np.maximum(act.data, 0))


def pixel_shuffle(act: Activation, s: int) -> Activation:
    """Rearrange channel groups to space: output(c, s*i+di, s*j+dj) =
    input(c*s^2 + di*s + dj, i, j)."""
    if s < 1 or act.channels % (s * s):
        raise ContractError(f"{act.channels} channels not divisible by s^2={s * s}")
    return Activation(_shuffle_fw(act.data, s))


def pixel_unshuffle(act: Activation, s: int) -> Activation:
    if act.height % s or act.width % s:
        raise ContractError("spatial dims must be divisible by s")
    return Activation(_shuffle_bw(act.data, s))


def concat_input(lr: Image, maps: DegradationMaps) -> Activation:
    """Stack image channels then map channels into one NCHW tensor."""
    if (maps.height, maps.width) != (lr.height, lr.width):
        raise ContractError(
            f"maps {maps.height}x{maps.width} do not match image {lr.height}x{lr.width}"
        )
    stacked = np.concatenate([lr.data, maps.data], axis=2)
    return Activation(stacked.transpose(2, 0, 1)[None].astype(np.float32))


# ---------------------------------------------------------------------------
# whole-network passes


def forward_tensor(model: Model, x: np.ndarray, mode: str = "eval", keep_cache: bool = False):
    """Run the network on an NCHW tensor. Returns (output, cache);
    cache is None unless keep_cache, and is consumed by backward()."""
    if x.ndim != 4 or x.shape[1] != model.in_channels:
        raise ContractError(
            f"input must be (N, {model.in_channels}, H, W), got {x.shape}"
        )
    caches = []
    for block in model.layers:
        x_in_shape = x.shape
        x, col = _conv_fw(x, block.weights, block.bias)
        bn_cache = None
        if block.bn is not None:
            if mode == "train":
                x, bn_cache = _bn_fw_train(x, block.bn)
            else:
                x = _bn_fw_eval(x, block.bn)
        mask = None
        if block.relu:
            mask = x > 0
            x = x * mask
        if keep_cache:
            caches.append((col, x_in_shape, bn_cache, mask))
    out = _shuffle_fw(x, model.scale)
    if not np.isfinite(out).all():
        raise ContractError("forward pass produced non-finite values")
    cache = (caches, x.shape) if keep_cache else None
    return out, cache


@dataclass
class ModelGrads:
    """Per-block parameter gradients plus the input gradient."""

    conv_w: list[np.ndarray]
    conv_b: list[np.ndarray]
    bn_gamma: list[np.ndarray | None]
    bn_beta: list[np.ndarray | None]
    d_input: np.ndarray


def backward(model: Model, cache, grad_output: np.ndarray) -> ModelGrads:
    """Exact reverse-mode gradients for every parameter block.

    cache must come from forward_tensor(..., mode="train",
    keep_cache=True) on the same model and input.
    """
    if cache is None:
        raise ContractError("backward needs the cache kept by the forward pass")
    caches, pre_shuffle_shape = cache
    if len(caches) != len(model.layers):
        raise ContractError("cache does not match the model's layer count")
    dx = _shuffle_bw(np.asarray(grad_output), model.scale)
    if dx.shape != pre_shuffle_shape:
        raise ContractError(
            f"grad_output implies shape {dx.shape}, cached pass produced {pre_shuffle_shape}"
        )
    conv_w = [None] * len(model.layers)
    conv_b = [None] * len(model.layers)
    bn_gamma = [None] * len(model.layers)
    bn_beta = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        block = model.layers[i]
        col, x_in_shape, bn_cache, mask = caches[i]
        if block.relu:
            dx = dx * mask
        if block.bn is not None:
            dx, dg, db_ = _bn_bw_train(dx, bn_cache, block.bn)
            bn_gamma[i], bn_beta[i] = dg, db_
        dx, dw, db = _conv_bw(dx, col, block.weights, x_in_shape)
        conv_w[i], conv_b[i] = dw, db
    return ModelGrads(conv_w, conv_b, bn_gamma, bn_beta, dx)


def forward(model: Model, lr: Image, maps: DegradationMaps) -> Image:
    """Image-level inference: concat, run eval-mode network, shuffle
    up to scale. Output is unclipped.

    Maps always carry the noise plane last. A noise-free model accepts
    the same stack only when that plane is all zero, and drops it."""
    if maps.depth != model.coeff_dim + 1:
        raise ContractError(
            f"model expects {model.coeff_dim + 1}-deep maps, got {maps.depth}"
        )
    if lr.channels != model.color_channels:
        raise ContractError(
            f"model expects {model.color_channels}-channel images, got {lr.channels}"
        )
    x = concat_input(lr, maps)
    data = x.data
    if not model.noise_conditioned:
        if np.any(maps.data[:, :, -1] != 0):
            raise ContractError(
                "noise-free model given maps with a non-zero noise plane"
            )
        data = data[:, :-1]
    out, _ = forward_tensor(model, data, mode="eval")
    hr = out[0].transpose(1, 2, 0)
    return Image(np.ascontiguousarray(hr, dtype=np.float32), unclipped=True)


def fold_bn(model: Model) -> Model:
    """Absorb each BN into its preceding conv: W' = g/sqrt(v+eps) * W,
    b' = g*(b-mean)/sqrt(v+eps) + beta. Eval-mode behavior is preserved."""
    if model.folded:
        raise ContractError("model is already folded")
    layers = []
    for block in model.layers:
        if block.bn is None:
            layers.append(ConvBlock(block.weights.copy(), block.bias.copy(), None, block.relu))
            continue
        bn = block.bn
        scale = bn.gamma / np.sqrt(bn.running_var + bn.epsilon)
        w = block.weights * scale[:, None, None, None]
        b = (block.bias - bn.running_mean) * scale + bn.beta
        layers.append(
            ConvBlock(w.astype(block.weights.dtype), b.astype(block.bias.dtype), None, block.relu)
        )
    return Model(
        scale=model.scale,
        depth=model.depth,
        width=model.width,
        in_channels=model.in_channels,
        color_channels=model.color_channels,
        noise_conditioned=model.noise_conditioned,
        layers=layers,
        folded=True,
    )


def strip_noise_channel(model: Model) -> Model:
    """Remove the noise-map input (the last input channel) from the
    first conv layer. With sigma=0 maps this changes nothing, which is
    the exact starting point for noise-free finetuning."""
    if not model.noise_conditioned:
        raise ContractError("model has no noise channel to remove")
    first = model.layers[0]
    layers = [ConvBlock(first.weights[:, :-1].copy(), first.bias.copy(), first.bn, first.relu)]
    layers.extend(model.layers[1:])
    return Model(
        scale=model.scale,
        depth=model.depth,
        width=model.width,
        in_channels=model.in_channels - 1,
        color_channels=model.color_channels,
        noise_conditioned=False,
        layers=layers,
        folded=model.folded,
    )
