"""Forward and backward passes over a ModelSpec.

Everything is float64 NHWC. ``forward`` returns softmax probabilities plus
a cache of intermediates; ``backward`` consumes the cache and the gradient
of the loss with respect to the pre-softmax scores and returns per-weight
gradients (mean-reduction convention is the caller's: pass an upstream
gradient already divided by the batch size for a mean loss).
"""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import DataError
from .model import ModelSpec


def weight_names(spec: ModelSpec) -> list[str]:
    names = []
    for i, ly in enumerate(spec.layers):
        if ly.kind in ("conv2d", "dense"):
            names.append(f"layer{i}.w")
            names.append(f"layer{i}.b")
    return names


def init_weights(spec: ModelSpec, seed: int) -> dict[str, np.ndarray]:
    """He-uniform weights, zero biases, seeded per layer."""
    weights: dict[str, np.ndarray] = {}
    for i, ly in enumerate(spec.layers):
        in_shape = spec.shapes[i]
        if ly.kind == "conv2d":
            c_in = in_shape[2]
            fan_in = ly.k * ly.k * c_in
            limit = np.sqrt(6.0 / fan_in)
            rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
            weights[f"layer{i}.w"] = rng.uniform(-limit, limit, size=(ly.k, ly.k, c_in, ly.channels))
            weights[f"layer{i}.b"] = np.zeros(ly.channels, dtype=np.float64)
        elif ly.kind == "dense":
            fan_in = in_shape[0]
            limit = np.sqrt(6.0 / fan_in)
            rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
            weights[f"layer{i}.w"] = rng.uniform(-limit, limit, size=(fan_in, ly.units))
            weights[f"layer{i}.b"] = np.zeros(ly.units, dtype=np.float64)
    return weights


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean negative log-likelihood; targets are class indices."""
    p = probs[np.arange(len(targets)), targets]
    return float(-np.mean(np.log(np.clip(p, 1e-300, None))))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(
    spec: ModelSpec,
    weights: dict[str, np.ndarray],
    batch: np.ndarray,
    mode: str = "eval",
    seed: int | None = None,
    check_finite: bool = False,
):
    """Run the stack on a (N, H, W, C) float64 batch.

    Returns (probabilities, cache). mode="train" draws dropout masks from
    ``seed``; eval mode is dropout-free and independent of the seed.
    ``check_finite`` validates every layer output and names the first
    layer that produced a non-finite value (slow; debugging aid).
    """
    if mode not in ("train", "eval"):
        raise DataError(f"mode must be train or eval, got {mode!r}")
    expect = (spec.input_px, spec.input_px, spec.input_channels)
    if batch.ndim != 4 or batch.shape[1:] != expect:
        raise DataError(f"batch shape {batch.shape} does not match input {expect}")
    x = np.ascontiguousarray(batch, dtype=np.float64)

    steps = []
    for i, ly in enumerate(spec.layers):
        if ly.kind == "conv2d":
            w = weights[f"layer{i}.w"]
            b = weights[f"layer{i}.b"]
            y = kernels.conv2d_forward(x, w, b, ly.stride)
            steps.append(("conv2d", i, x))
        elif ly.kind == "maxpool":
            y, idx = kernels.maxpool_forward(x, ly.k)
            steps.append(("maxpool", i, (x.shape, idx)))
        elif ly.kind == "flatten":
            y = x.reshape(x.shape[0], -1)
            steps.append(("flatten", i, x.shape))
        elif ly.kind == "dense":
            w = weights[f"layer{i}.w"]
            b = weights[f"layer{i}.b"]
            y = x @ w + b
            steps.append(("dense", i, x))
        elif ly.kind == "dropout":
            if mode == "train" and ly.p > 0.0:
                rng = np.random.default_rng(np.random.SeedSequence((0 if seed is None else seed, i)))
                mask = (rng.random(x.shape) >= ly.p) / (1.0 - ly.p)
                y = x * mask
                steps.append(("dropout", i, mask))
            else:
                y = x
                steps.append(("dropout", i, None))
        elif ly.kind == "activation":
            if ly.fn == "relu":
                y = np.maximum(x, 0.0)
            elif ly.fn == "sigmoid":
                y = _sigmoid(x)
            else:
                y = np.tanh(x)
            steps.append(("activation", i, (ly.fn, x, y)))
        else:  # pragma: no cover - ModelSpec rejects unknown kinds
            raise DataError(f"unknown layer kind {ly.kind!r}")
        if check_finite and not np.isfinite(y).all():
            raise DataError(f"non-finite values after layer {i} ({ly.kind})")
        x = y

    logits = x
    probs = softmax(logits)
    cache = {"spec": spec, "weights": weights, "steps": steps, "logits": logits}
    return probs, cache


def backward(cache: dict, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Backpropagate d(loss)/d(logits) through the cached forward pass."""
    if not isinstance(cache, dict) or "steps" not in cache:
        raise DataError("not a forward cache")
    logits = cache["logits"]
    if grad_logits.shape != logits.shape:
        raise DataError(
            f"grad shape {grad_logits.shape} does not match logits {logits.shape}; stale cache?"
        )
    spec: ModelSpec = cache["spec"]
    weights = cache["weights"]
    grads = {name: None for name in weight_names(spec)}

    dy = np.asarray(grad_logits, dtype=np.float64)
    for kind, i, saved in reversed(cache["steps"]):
        ly = spec.layers[i]
        if kind == "conv2d":
            x = saved
            dx, dw, db = kernels.conv2d_backward(x, weights[f"layer{i}.w"], dy, ly.stride)
            grads[f"layer{i}.w"] = dw
            grads[f"layer{i}.b"] = db
            dy = dx
        elif kind == "maxpool":
            in_shape, idx = saved
            dy = kernels.maxpool_backward(dy, idx, ly.k, in_shape)
        elif kind == "flatten":
            dy = dy.reshape(saved)
        elif kind == "dense":
            x = saved
            grads[f"layer{i}.w"] = x.T @ dy
            grads[f"layer{i}.b"] = dy.sum(axis=0)
            dy = dy @ weights[f"layer{i}.w"].T
        elif kind == "dropout":
            if saved is not None:
                dy = dy * saved
        elif kind == "activation":
            fn, x, y = saved
            if fn == "relu":
                dy = dy * (x > 0.0)
            elif fn == "sigmoid":
                dy = dy * y * (1.0 - y)
            else:
                dy = dy * (1.0 - y * y)
    return grads
