"""Functional layer primitives.

The public functions take single samples shaped as documented (images are
channel-first ``(C, H, W)``) and validate their inputs.  The ``_*_batch``
helpers carry an extra leading batch axis and do the actual arithmetic;
the layer classes in :mod:`scriptfuse.engine.layers` reuse them so the
forward math exists in exactly one place.

Convolution is cross-correlation (no kernel flip) with stride 1 and
symmetric zero padding ``pad == k // 2``, which preserves spatial size for
odd ``k``.  Pooling is 2x2 max with stride 2.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# Cap on the im2col scratch buffer, in array elements.  Conv inputs are
# processed in batch chunks small enough to stay under this.
_COL_BUDGET = 16_000_000


def _conv2d_batch(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray | None,
                  pad: int) -> np.ndarray:
    """Stride-1 cross-correlation of ``x (N,C,H,W)`` with ``kernels (Co,C,k,k)``."""
    n, c, h, w = x.shape
    c_out, _, k, _ = kernels.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    h_out = h + 2 * pad - k + 1
    w_out = w + 2 * pad - k + 1
    w_mat = kernels.reshape(c_out, c * k * k)
    out = np.empty((n, c_out, h_out, w_out), dtype=x.dtype)
    chunk = max(1, _COL_BUDGET // (c * k * k * h_out * w_out))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        # (m,C,Ho,Wo,k,k) view -> (C,k,k, m*Ho*Wo) column matrix
        win = sliding_window_view(xp[lo:hi], (k, k), axis=(2, 3))
        cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, -1)
        prod = w_mat @ cols
        out[lo:hi] = prod.reshape(c_out, hi - lo, h_out, w_out).transpose(1, 0, 2, 3)
    if bias is not None:
        out += bias.reshape(1, c_out, 1, 1)
    return out


def _conv2d_backward_batch(x, kernels, pad, grad_out):
    """Gradients of ``_conv2d_batch`` w.r.t. input, kernels and bias."""
    n, c, h, w = x.shape
    c_out, _, k, _ = kernels.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    grad_w_mat = np.zeros((c_out, c * k * k), dtype=x.dtype)
    chunk = max(1, _COL_BUDGET // (c * k * k * h * w))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        win = sliding_window_view(xp[lo:hi], (k, k), axis=(2, 3))
        cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, -1)
        g = grad_out[lo:hi].transpose(1, 0, 2, 3).reshape(c_out, -1)
        grad_w_mat += g @ cols.T
    grad_kernels = grad_w_mat.reshape(kernels.shape)
    grad_bias = grad_out.sum(axis=(0, 2, 3))
    # dL/dx is the same "same" correlation of grad_out with the kernels
    # rotated 180 degrees and with in/out channel axes swapped.
    rot = kernels[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    grad_x = _conv2d_batch(np.ascontiguousarray(grad_out), np.ascontiguousarray(rot),
                           None, k - 1 - pad)
    return grad_x, grad_kernels, grad_bias


def conv2d(input: np.ndarray, kernels: np.ndarray, bias: np.ndarray,
           pad: int) -> np.ndarray:
    """Same-size convolution of one image.

    input: (C_in, H, W); kernels: (C_out, C_in, k, k) with k odd;
    bias: (C_out,); pad must equal k // 2.  Returns (C_out, H, W).
    """
    if input.ndim != 3 or kernels.ndim != 4:
        raise ValueError(
            f"conv2d expects input (C,H,W) and kernels (Co,C,k,k), "
            f"got {input.shape} and {kernels.shape}")
    c_out, c_k, k, k2 = kernels.shape
    if k != k2 or k % 2 == 0:
        raise ValueError(f"conv2d kernels must be square with odd side, got {k}x{k2}")
    if input.shape[0] != c_k:
        raise ValueError(
            f"conv2d channel mismatch: input shape {tuple(input.shape)} has "
            f"{input.shape[0]} channels but kernels shape {tuple(kernels.shape)} "
            f"expect {c_k}")
    if pad != k // 2:
        raise ValueError(f"conv2d pad must be {k // 2} for k={k}, got {pad}")
    if bias.shape != (c_out,):
        raise ValueError(f"conv2d bias shape {tuple(bias.shape)} != ({c_out},)")
    return _conv2d_batch(input[None], kernels, bias, pad)[0]


def _maxpool2d_batch(x: np.ndarray):
    """2x2/stride-2 max pool of ``x (N,C,H,W)``; also returns argmax indices.

    The argmax index is the position within the flattened 2x2 window in
    row-major order; numpy's argmax takes the first maximum, which fixes
    tie-breaking.
    """
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _maxpool2d_backward_batch(idx, grad_out):
    """Route ``grad_out`` back to the argmax positions recorded in ``idx``."""
    n, c, h2, w2 = grad_out.shape
    grad_win = np.zeros((n, c, h2, w2, 4), dtype=grad_out.dtype)
    np.put_along_axis(grad_win, idx[..., None], grad_out[..., None], axis=-1)
    grad_x = grad_win.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(grad_x).reshape(n, c, h2 * 2, w2 * 2)


def maxpool2d(input: np.ndarray) -> np.ndarray:
    """2x2 max pooling with stride 2 of one image (C, H, W) -> (C, H/2, W/2)."""
    if input.ndim != 3:
        raise ValueError(f"maxpool2d expects (C,H,W), got shape {tuple(input.shape)}")
    _, h, w = input.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2d requires even spatial dims, got {h}x{w}")
    out, _ = _maxpool2d_batch(input[None])
    return out[0]


def dense(input: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map weights @ input + bias for a single vector."""
    if input.ndim != 1 or weights.ndim != 2:
        raise ValueError(
            f"dense expects input (n,) and weights (m,n), got "
            f"{tuple(input.shape)} and {tuple(weights.shape)}")
    m, n = weights.shape
    if input.shape[0] != n:
        raise ValueError(
            f"dense length mismatch: input has {input.shape[0]} values but "
            f"weights {tuple(weights.shape)} expect {n}")
    if bias.shape != (m,):
        raise ValueError(f"dense bias shape {tuple(bias.shape)} != ({m},)")
    return weights @ input + bias


def relu(input: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(input, 0)


def dropout(input: np.ndarray, p: float, mode: str,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Inverted dropout.

    In ``train`` mode each element is zeroed independently with probability
    ``p`` and survivors are scaled by 1/(1-p); ``eval`` mode is the identity.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"dropout probability must be in [0,1], got {p}")
    if mode == "eval" or p == 0.0:
        return input.copy()
    if p == 1.0:
        raise ValueError("dropout with p=1 in train mode would zero everything "
                         "(1/(1-p) is undefined)")
    if rng is None:
        raise ValueError("dropout in train mode needs a seeded generator")
    keep = rng.random(input.shape) >= p
    return input * (keep.astype(input.dtype) / (1.0 - p))


def softmax_cross_entropy(logits: np.ndarray, true_label: int):
    """Stabilized softmax + negative log likelihood for one sample.

    Returns ``(loss, probabilities)`` where loss = -ln p[true_label].
    """
    if logits.ndim != 1:
        raise ValueError(f"softmax expects a vector of logits, got shape "
                         f"{tuple(logits.shape)}")
    k = logits.shape[0]
    if not 0 <= true_label < k:
        raise ValueError(f"label {true_label} out of range for {k} classes")
    if not np.all(np.isfinite(logits)):
        raise ValueError("softmax_cross_entropy requires finite logits")
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    probs = exp / exp.sum()
    loss = float(np.log(exp.sum()) - shifted[true_label])
    return loss, probs


def softmax_cross_entropy_batch(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over a batch.

    logits: (N, K); labels: (N,) ints.  Returns (mean_loss, probs, grad_logits)
    with grad_logits = (probs - onehot) / N, the gradient of the mean loss.
    """
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {tuple(labels.shape)} != ({n},)")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels out of range for {k} classes")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    probs = exp / denom
    rows = np.arange(n)
    losses = np.log(denom[:, 0]) - shifted[rows, labels]
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    grad /= n
    return float(losses.mean()), probs, grad
