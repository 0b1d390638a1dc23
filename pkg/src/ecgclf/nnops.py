"""Network building blocks: convolution, pooling, batchnorm, dropout,
masked aggregation, softmax, and the weighted cross-entropy loss.

All tensors are laid out [batch, time, features, channels] (or flattened
trailing dims where noted). Every op here has an analytic backward checked
against central finite differences in the test suite.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Tensor, _node
from .errors import EmptySequence, NoValidElements, ShapeMismatch

KERNEL = 5
PAD = KERNEL // 2


def _im2col(x: np.ndarray) -> np.ndarray:
    """[B,T,F,C] -> [B*T*F, C*25] patch matrix (zero padded, stride 1)."""
    b, t, f, c = x.shape
    xp = np.pad(x, ((0, 0), (PAD, PAD), (PAD, PAD), (0, 0)))
    win = sliding_window_view(xp, (KERNEL, KERNEL), axis=(1, 2))
    # win: [B, T, F, C, 5, 5]; flatten to rows of (c, ky, kx)
    return win.reshape(b * t * f, c * KERNEL * KERNEL)


def conv5x5_same(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Same-size 5x5 convolution, stride 1, zero padding 2 on both axes.

    ``weight`` has shape [Cout, Cin, 5, 5]; ``bias`` shape [Cout].
    """
    xd = x.data
    squeeze = xd.ndim == 3
    if squeeze:
        xd = xd[None]
    if xd.ndim != 4:
        raise ShapeMismatch(f"conv input must be [B,T,F,C], got {x.data.shape}")
    b, t, f, cin = xd.shape
    cout, w_cin, kh, kw = weight.data.shape
    if (w_cin, kh, kw) != (cin, KERNEL, KERNEL):
        raise ShapeMismatch(
            f"kernel {weight.data.shape} incompatible with input channels {cin}"
        )
    wmat = weight.data.transpose(1, 2, 3, 0).reshape(cin * KERNEL * KERNEL, cout)
    cols = _im2col(xd)
    out = cols @ wmat + bias.data
    out = out.reshape(b, t, f, cout)

    def back(g):
        if squeeze:
            g = g.reshape(1, t, f, cout)
        gflat = g.reshape(b * t * f, cout)
        gb = gflat.sum(axis=0)
        gw = (_im2col(xd).T @ gflat).reshape(cin, KERNEL, KERNEL, cout).transpose(3, 0, 1, 2)
        # dX is the correlation of dY with the spatially flipped kernel,
        # channels swapped.
        wflip = weight.data[:, :, ::-1, ::-1].transpose(0, 2, 3, 1).reshape(
            cout * KERNEL * KERNEL, cin
        )
        gcols = _im2col(g)
        gx = (gcols @ wflip).reshape(b, t, f, cin)
        if squeeze:
            gx = gx[0]
        return gx, gw, gb

    if squeeze:
        out = out[0]
    return _node(out, (x, weight, bias), back)


def maxpool2x2_ceil(x: Tensor) -> Tensor:
    """2x2 max pooling with ceil semantics: odd edges padded with -inf."""
    b, t, f, c = x.data.shape
    t2, f2 = -(-t // 2), -(-f // 2)
    xp = np.full((b, 2 * t2, 2 * f2, c), -np.inf, dtype=x.data.dtype)
    xp[:, :t, :f, :] = x.data
    windows = xp.reshape(b, t2, 2, f2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(
        b, t2, f2, c, 4
    )
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def back(g):
        gp = np.zeros((b, 2 * t2, 2 * f2, c), dtype=g.dtype)
        bi, ti, fi, ci = np.ogrid[:b, :t2, :f2, :c]
        gp[bi, 2 * ti + arg // 2, 2 * fi + arg % 2, ci] = g
        return (gp[:, :t, :f, :],)

    return _node(out, (x,), back)


def ceil_halve(lengths: np.ndarray) -> np.ndarray:
    return -(-lengths // 2)


def batchnorm_train(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    lengths: np.ndarray,
    eps: float = 1e-5,
):
    """Per-channel normalization over valid (batch, time, feature) positions.

    Returns the output tensor plus the batch mean/variance used, so the
    caller can maintain running statistics.
    """
    b, t, f, c = x.data.shape
    mask = (np.arange(t)[None, :] < lengths[:, None]).astype(x.data.dtype)
    mask = mask[:, :, None, None]
    n_valid = float(lengths.sum()) * f
    if n_valid <= 0:
        raise NoValidElements("batchnorm saw no valid positions")
    xm = x.data * mask
    mean = xm.sum(axis=(0, 1, 2)) / n_valid
    var = (((x.data - mean) * mask) ** 2).sum(axis=(0, 1, 2)) / n_valid
    invstd = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * invstd
    # padding positions are zeroed (they contribute nothing to the statistics,
    # so this keeps the analytic gradient exact)
    out = (gamma.data * xhat + beta.data) * mask

    def back(g):
        gm = g * mask
        gsum = gm.sum(axis=(0, 1, 2))
        gx_sum = (gm * xhat).sum(axis=(0, 1, 2))
        ggamma = gx_sum
        gbeta = gsum
        gx = gamma.data * invstd * (gm - (gsum + xhat * gx_sum) / n_valid) * mask
        return gx.astype(x.data.dtype, copy=False), ggamma, gbeta

    return _node(out, (x, gamma, beta), back), mean, var


def batchnorm_infer(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    eps: float = 1e-5,
) -> Tensor:
    """Affine normalization by running statistics (frozen scale and shift)."""
    scale_c = gamma.data / np.sqrt(running_var + eps)
    shift_c = beta.data - running_mean * scale_c
    out = x.data * scale_c + shift_c
    return _node(out, (x,), lambda g: (g * scale_c,))


def dropout(x: Tensor, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Zero entries with probability p and rescale survivors (train only)."""
    if not train or p <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    out = x.data * keep
    return _node(out, (x,), lambda g: (g * keep,))


def temporal_masked_mean(x: Tensor, lengths: np.ndarray) -> Tensor:
    """Mean over each example's first ``lengths[b]`` frames: [B,T,D] -> [B,D]."""
    b, t = x.data.shape[0], x.data.shape[1]
    if np.any(lengths < 1):
        raise EmptySequence("temporal mean needs at least one valid frame")
    mask = (np.arange(t)[None, :] < lengths[:, None]).astype(x.data.dtype)
    weights = mask / lengths[:, None].astype(x.data.dtype)
    out = np.einsum("btd,bt->bd", x.data, weights)

    def back(g):
        return (g[:, None, :] * weights[:, :, None],)

    return _node(out, (x,), back)


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax, computed shift-invariantly."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        dot = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - dot),)

    return _node(p, (x,), back)


def weighted_cross_entropy(logits: Tensor, labels: np.ndarray, class_weights: np.ndarray) -> Tensor:
    """Mean over examples of -w[label] * log softmax(logits)[label]."""
    n = logits.data.shape[0]
    with np.errstate(invalid="ignore"):  # non-finite logits surface as a non-finite loss
        z = logits.data - logits.data.max(axis=-1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    w = class_weights.astype(logits.data.dtype)[labels]
    losses = -w * logp[np.arange(n), labels]
    loss = np.asarray(losses.mean(), dtype=logits.data.dtype)

    def back(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        onehot[np.arange(n), labels] = 1.0
        return (float(g) * w[:, None] * (p - onehot) / n,)

    return _node(loss, (logits,), back)
