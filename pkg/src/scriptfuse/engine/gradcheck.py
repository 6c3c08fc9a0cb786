"""Central finite-difference verification of every backward pass.

All checks run in float64 through the same code paths training uses.  The
numeric reference is (f(x+h) - f(x-h)) / 2h with h = 1e-5, compared as
|a - n| / max(|a|, |n|, 1e-4); the floor keeps near-zero gradients from
inflating the ratio.  Piecewise-linear primitives (relu, maxpool) are fed
inputs with a margin around their kinks so the difference quotient stays on
one linear piece; the composed-network check instead samples parameter
coordinates and skips any whose perturbation flips a relu mask or pool
argmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Conv2d, Dense, Dropout, MaxPool2d, ReLU
from .ops import (
    _conv2d_batch,
    _maxpool2d_batch,
    softmax_cross_entropy_batch,
)

STEP = 1e-5
TOLERANCE = 1e-6
_FLOOR = 1e-4


@dataclass
class CheckResult:
    name: str
    seed: int
    max_rel_err: float
    coords: int
    skipped: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_err < TOLERANCE


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), _FLOOR)
    return float(np.max(np.abs(a - n) / denom))


def numeric_gradient(f, x: np.ndarray, step: float = STEP) -> np.ndarray:
    """Dense central-difference gradient of scalar ``f`` w.r.t. ``x``."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = f(x)
        flat[i] = orig - step
        f_minus = f(x)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def _weighted_sum(out, probe):
    return float((out * probe).sum())


def check_conv(seed: int, step: float = STEP) -> CheckResult:
    rng = np.random.default_rng([seed, 11])
    layer = Conv2d("conv", 2, 3, 3, rng, dtype=np.float64)
    x = rng.normal(size=(2, 2, 6, 6))
    out = layer.forward(x)
    probe = rng.normal(size=out.shape)
    grad_x = layer.backward(probe)
    grads = layer.grads()

    num_x = numeric_gradient(
        lambda v: _weighted_sum(_conv2d_batch(v, layer.weight, layer.bias,
                                              layer.pad), probe), x, step)
    num_w = numeric_gradient(
        lambda v: _weighted_sum(_conv2d_batch(x, v, layer.bias, layer.pad),
                                probe), layer.weight.copy(), step)
    num_b = numeric_gradient(
        lambda v: _weighted_sum(_conv2d_batch(x, layer.weight, v, layer.pad),
                                probe), layer.bias.copy(), step)
    err = max(relative_error(grad_x, num_x),
              relative_error(grads["conv.weight"], num_w),
              relative_error(grads["conv.bias"], num_b))
    return CheckResult("conv2d", seed, err,
                       x.size + layer.weight.size + layer.bias.size)


def check_dense(seed: int, step: float = STEP) -> CheckResult:
    rng = np.random.default_rng([seed, 12])
    layer = Dense("dense", 6, 4, rng, dtype=np.float64)
    x = rng.normal(size=(3, 6))
    out = layer.forward(x)
    probe = rng.normal(size=out.shape)
    grad_x = layer.backward(probe)
    grads = layer.grads()

    num_x = numeric_gradient(
        lambda v: _weighted_sum(v @ layer.weight.T + layer.bias, probe), x, step)
    num_w = numeric_gradient(
        lambda v: _weighted_sum(x @ v.T + layer.bias, probe),
        layer.weight.copy(), step)
    num_b = numeric_gradient(
        lambda v: _weighted_sum(x @ layer.weight.T + v, probe),
        layer.bias.copy(), step)
    err = max(relative_error(grad_x, num_x),
              relative_error(grads["dense.weight"], num_w),
              relative_error(grads["dense.bias"], num_b))
    return CheckResult("dense", seed, err,
                       x.size + layer.weight.size + layer.bias.size)


def check_relu(seed: int, step: float = STEP) -> CheckResult:
    rng = np.random.default_rng([seed, 13])
    x = rng.normal(size=(2, 4, 8, 8))
    # Keep every value at least 0.1 from the kink at zero.
    x = np.where(x >= 0, x + 0.1, x - 0.1)
    layer = ReLU("relu")
    out = layer.forward(x)
    probe = rng.normal(size=out.shape)
    grad_x = layer.backward(probe)
    num_x = numeric_gradient(
        lambda v: _weighted_sum(np.maximum(v, 0), probe), x, step)
    return CheckResult("relu", seed, relative_error(grad_x, num_x), x.size)


def check_maxpool(seed: int, step: float = STEP) -> CheckResult:
    rng = np.random.default_rng([seed, 14])
    shape = (1, 2, 8, 8)
    # Distinct values with pairwise gaps of 0.01 >> 2*step: no window ever
    # changes its argmax under perturbation.
    values = rng.permutation(np.prod(shape)).astype(np.float64) * 0.01
    x = values.reshape(shape)
    layer = MaxPool2d("pool")
    out = layer.forward(x)
    probe = rng.normal(size=out.shape)
    grad_x = layer.backward(probe)
    num_x = numeric_gradient(
        lambda v: _weighted_sum(_maxpool2d_batch(v)[0], probe), x, step)
    return CheckResult("maxpool", seed, relative_error(grad_x, num_x), x.size)


def check_dropout(seed: int, step: float = STEP) -> CheckResult:
    rng = np.random.default_rng([seed, 15])
    x = rng.normal(size=(3, 4, 8))
    layer = Dropout("drop", 0.5)
    out = layer.forward(x, train=True, rng=np.random.default_rng([seed, 16]))
    probe = rng.normal(size=out.shape)
    grad_x = layer.backward(probe)
    mask = layer._mask  # frozen: the numeric side must see the same draw
    num_x = numeric_gradient(lambda v: _weighted_sum(v * mask, probe), x, step)
    return CheckResult("dropout", seed, relative_error(grad_x, num_x), x.size)


def check_softmax_xent(seed: int, step: float = STEP) -> CheckResult:
    rng = np.random.default_rng([seed, 17])
    logits = rng.normal(size=(5, 11))
    labels = rng.integers(0, 11, size=5)
    _, _, grad = softmax_cross_entropy_batch(logits, labels)
    num = numeric_gradient(
        lambda v: softmax_cross_entropy_batch(v, labels)[0], logits, step)
    return CheckResult("softmax_xent", seed, relative_error(grad, num),
                       logits.size)


PRIMITIVE_CHECKS = (check_conv, check_dense, check_relu, check_maxpool,
                    check_dropout, check_softmax_xent)


def _widen(network) -> None:
    for layer in network.layers:
        for attr in ("weight", "bias"):
            if hasattr(layer, attr):
                setattr(layer, attr, getattr(layer, attr).astype(np.float64))


def _structure_signature(network, x):
    """Relu sign masks and pool argmaxes of an eval-mode forward."""
    sig = []
    for layer in network.layers:
        x = layer.forward(x, train=False)
        if isinstance(layer, ReLU):
            sig.append(("relu", (layer._x > 0).tobytes()))
        elif isinstance(layer, MaxPool2d):
            sig.append(("pool", layer._idx.tobytes()))
    return sig


def check_composed_network(seed: int, step: float = STEP,
                           coords_per_tensor: int = 4) -> CheckResult:
    """Finite-difference check of the full two-block 32x32 network.

    Parameter coordinates are sampled; any coordinate whose perturbation
    changes a relu mask or pool argmax sits on a kink of the piecewise
    loss and is skipped rather than compared against a one-sided slope.
    """
    from ..pipeline import NetworkSpec, build_network

    rng = np.random.default_rng([seed, 18])
    network = build_network(NetworkSpec("s", 32, 2), seed=seed)
    _widen(network)
    x = rng.uniform(0.0, 1.0, size=(1, 1, 32, 32))
    labels = rng.integers(0, 11, size=1)

    def loss_of(v):
        return softmax_cross_entropy_batch(
            network.forward(v, train=False), labels)[0]

    logits = network.forward(x, train=False)
    base_loss, _, dlogits = softmax_cross_entropy_batch(logits, labels)
    grads = network.backward(dlogits)
    base_sig = _structure_signature(network, x)

    worst = 0.0
    checked = 0
    skipped = 0
    params = network.params()
    for name, param in params.items():
        flat = param.reshape(-1)
        gflat = grads[name].reshape(-1)
        picks = rng.choice(flat.size, size=min(coords_per_tensor, flat.size),
                           replace=False)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + step
            f_plus = loss_of(x)
            sig_plus = _structure_signature(network, x)
            flat[i] = orig - step
            f_minus = loss_of(x)
            sig_minus = _structure_signature(network, x)
            flat[i] = orig
            if sig_plus != base_sig or sig_minus != base_sig:
                skipped += 1
                continue
            numeric = (f_plus - f_minus) / (2.0 * step)
            worst = max(worst, relative_error(gflat[i], numeric))
            checked += 1
    # Restore caches for the unperturbed parameters.
    network.forward(x, train=False)
    return CheckResult("composed_s_32_2", seed, worst, checked, skipped)


def run_suite(seeds=range(20), step: float = STEP,
              on_progress=None) -> list[CheckResult]:
    """All primitive checks plus the composed network, per seed."""
    results = []
    for seed in seeds:
        for check in PRIMITIVE_CHECKS + (check_composed_network,):
            result = check(seed, step)
            results.append(result)
            if on_progress is not None:
                on_progress(result)
    return results


def suite_max_error(results) -> float:
    return max(r.max_rel_err for r in results)


def suite_passed(results) -> bool:
    return all(r.passed for r in results)
