"""Parameter-holding layers assembled by the network module.

Layers expose ``params()`` as an ordered name -> Tensor mapping and
``state()`` adding non-trained arrays (batchnorm running statistics).
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import nnops
from .autodiff import Tensor
from .errors import BadConfig, EmptySequence


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv5x5:
    def __init__(self, cin: int, cout: int, rng: np.random.Generator, dtype=np.float32):
        k = nnops.KERNEL
        self.weight = ad.parameter(
            glorot_uniform(rng, (cout, cin, k, k), cin * k * k, cout * k * k, dtype)
        )
        self.bias = ad.parameter(np.zeros(cout, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return nnops.conv5x5_same(x, self.weight, self.bias)

    def params(self):
        return {"w": self.weight, "b": self.bias}

    def state(self):
        return {}


class BatchNorm:
    momentum = 0.9
    eps = 1e-5

    def __init__(self, channels: int, dtype=np.float32):
        self.gamma = ad.parameter(np.ones(channels, dtype=dtype))
        self.beta = ad.parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def __call__(self, x: Tensor, lengths: np.ndarray, train: bool) -> Tensor:
        if train:
            out, mean, var = nnops.batchnorm_train(x, self.gamma, self.beta, lengths, self.eps)
            m = self.momentum
            self.running_mean = (m * self.running_mean + (1 - m) * mean).astype(self.running_mean.dtype)
            self.running_var = (m * self.running_var + (1 - m) * var).astype(self.running_var.dtype)
            return out
        return nnops.batchnorm_infer(
            x, self.gamma, self.beta, self.running_mean, self.running_var, self.eps
        )

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def state(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def set_state(self, name: str, value: np.ndarray):
        setattr(self, name, value.copy())


class Dense:
    """Affine map y = x W^T + b with weight shape [out, in]."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32):
        self.weight = ad.parameter(glorot_uniform(rng, (n_out, n_in), n_in, n_out, dtype))
        self.bias = ad.parameter(np.zeros(n_out, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, ad.transpose2(self.weight)), self.bias)

    def params(self):
        return {"w": self.weight, "b": self.bias}

    def state(self):
        return {}


class LstmDirection:
    """One direction of one LSTM layer; gates ordered [input, forget, cell, output]."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator, dtype=np.float32):
        self.hidden = hidden
        self.wx = ad.parameter(glorot_uniform(rng, (n_in, 4 * hidden), n_in, 4 * hidden, dtype))
        self.wh = ad.parameter(glorot_uniform(rng, (hidden, 4 * hidden), hidden, 4 * hidden, dtype))
        bias = np.zeros(4 * hidden, dtype=dtype)
        bias[hidden : 2 * hidden] = 1.0  # forget gate starts open
        self.bias = ad.parameter(bias)

    def run(self, xs: Tensor, lengths: np.ndarray) -> Tensor:
        """[B,T,D] -> [B,T,H]; state freezes once a sequence runs out."""
        n_batch, n_time, _ = xs.data.shape
        h = Tensor(np.zeros((n_batch, self.hidden), dtype=xs.data.dtype))
        c = Tensor(np.zeros((n_batch, self.hidden), dtype=xs.data.dtype))
        hs = []
        for t in range(n_time):
            xt = ad.reshape(ad.narrow(xs, 1, t, 1), (n_batch, -1))
            z = ad.add(ad.add(ad.matmul(xt, self.wx), ad.matmul(h, self.wh)), self.bias)
            i = ad.sigmoid(ad.narrow(z, 1, 0, self.hidden))
            f = ad.sigmoid(ad.narrow(z, 1, self.hidden, self.hidden))
            g = ad.tanh(ad.narrow(z, 1, 2 * self.hidden, self.hidden))
            o = ad.sigmoid(ad.narrow(z, 1, 3 * self.hidden, self.hidden))
            c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
            h_new = ad.mul(o, ad.tanh(c_new))
            active = (t < lengths)[:, None]
            c = ad.where_mask(active, c_new, c)
            h = ad.where_mask(active, h_new, h)
            hs.append(h)
        return ad.stack(hs, axis=1)

    def params(self):
        return {"wx": self.wx, "wh": self.wh, "b": self.bias}

    def state(self):
        return {}


class BiLstmStack:
    """Stacked bidirectional LSTM returning the last valid output vector.

    Each layer concatenates a forward pass and a reversed-sequence pass
    (``hidden`` units per direction). The aggregate is the forward state at
    the final valid frame joined with the backward state at frame 0.
    """

    def __init__(
        self,
        n_in: int,
        hidden_per_direction: int,
        num_layers: int,
        dropout_p: float,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        if num_layers < 1:
            raise BadConfig("LSTM stack needs at least one layer")
        self.dropout_p = dropout_p
        self.layers = []
        d = n_in
        for _ in range(num_layers):
            fwd = LstmDirection(d, hidden_per_direction, rng, dtype)
            bwd = LstmDirection(d, hidden_per_direction, rng, dtype)
            self.layers.append((fwd, bwd))
            d = 2 * hidden_per_direction

    def __call__(
        self, xs: Tensor, lengths: np.ndarray, rng: np.random.Generator, train: bool
    ) -> Tensor:
        if xs.data.shape[1] < 1 or np.any(lengths < 1):
            raise EmptySequence("LSTM needs at least one valid frame per example")
        cur = xs
        out_f = out_b = None
        for k, (fwd, bwd) in enumerate(self.layers):
            if k > 0:
                cur = nnops.dropout(cur, self.dropout_p, rng, train)
            out_f = fwd.run(cur, lengths)
            rev = ad.reverse_valid(cur, lengths)
            out_b = ad.reverse_valid(bwd.run(rev, lengths), lengths)
            cur = ad.apply_time_mask(ad.concat([out_f, out_b], axis=2), lengths)
        last_f = ad.gather_frame(out_f, lengths - 1)
        last_b = ad.gather_frame(out_b, np.zeros_like(lengths))
        return ad.concat([last_f, last_b], axis=1)

    def params(self):
        out = {}
        for k, (fwd, bwd) in enumerate(self.layers):
            for name, p in fwd.params().items():
                out[f"l{k}.fwd.{name}"] = p
            for name, p in bwd.params().items():
                out[f"l{k}.bwd.{name}"] = p
        return out

    def state(self):
        return {}
