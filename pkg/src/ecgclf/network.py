"""Assembly of the two architectures and their shape contracts.

Both networks stack ConvBlocks over the [time, frequency, channel]
spectrogram: every block keeps channel count constant through its first
layers, then its final layer raises the channel count and 2x2-max-pools with
ceil semantics. The CNN (6 blocks of 4 layers) aggregates by masked temporal
averaging; the CRNN (4 blocks of 6 layers) flattens per-frame features and
aggregates with a 3-layer bidirectional LSTM.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nnops
from .autodiff import Tensor
from .errors import BadConfig, IncompatibleShapes, TooShortForDepth
from .layers import BatchNorm, BiLstmStack, Conv5x5, Dense

TEMPORAL_AVERAGE = "average"
LSTM_BLOCK = "lstm"


def _round4(x: float) -> int:
    return max(4, int(np.floor(x / 4.0 + 0.5)) * 4)


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "cnn"
    num_blocks: int | None = None
    layers_per_block: int | None = None
    base_channels: int = 64
    channel_increment: int = 32
    lstm_layers: int = 3
    lstm_width: int = 200
    lstm_width_per_direction: bool = False
    dropout_p: float = 0.15
    num_classes: int = 4
    input_bins: int = 33
    scale: float = 1.0

    def __post_init__(self):
        if self.arch not in ("cnn", "crnn"):
            raise BadConfig(f"arch must be 'cnn' or 'crnn', got {self.arch!r}")
        if self.num_blocks is None:
            object.__setattr__(self, "num_blocks", 6 if self.arch == "cnn" else 4)
        if self.layers_per_block is None:
            object.__setattr__(self, "layers_per_block", 4 if self.arch == "cnn" else 6)
        if not (0 < self.scale <= 1):
            raise BadConfig(f"scale must lie in (0, 1], got {self.scale}")
        if not (0 <= self.dropout_p < 1):
            raise BadConfig(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.num_blocks < 1 or self.layers_per_block < 2:
            raise BadConfig("need at least 1 block of at least 2 layers")

    def channel_ladder(self) -> list[int]:
        base = _round4(self.base_channels * self.scale)
        inc = _round4(self.channel_increment * self.scale)
        return [base + b * inc for b in range(self.num_blocks)]

    def lstm_total_width(self) -> int:
        return _round4(self.lstm_width * self.scale)

    def lstm_hidden_per_direction(self) -> int:
        total = self.lstm_total_width()
        return total if self.lstm_width_per_direction else total // 2

    def feature_bins_out(self) -> int:
        f = self.input_bins
        for _ in range(self.num_blocks):
            f = -(-f // 2)
        return f

    def flatten_dim(self) -> int:
        return self.feature_bins_out() * self.channel_ladder()[-1]

    def aggregate_dim(self, aggregator: str) -> int:
        if aggregator == TEMPORAL_AVERAGE:
            return self.flatten_dim()
        return 2 * self.lstm_hidden_per_direction()

    def min_frames(self) -> int:
        return 2**self.num_blocks


class ConvBlock:
    """(layers-1) same-shape conv+BN+ReLU, then conv+BN+ReLU with channel
    increase, 2x2 ceil max-pool, and dropout."""

    def __init__(self, cin: int, cout: int, n_layers: int, dropout_p: float,
                 rng: np.random.Generator, dtype):
        self.dropout_p = dropout_p
        self.convs = []
        self.bns = []
        for i in range(n_layers):
            c_next = cout if i == n_layers - 1 else cin
            self.convs.append(Conv5x5(cin, c_next, rng, dtype))
            self.bns.append(BatchNorm(c_next, dtype))

    def __call__(self, x: Tensor, lengths: np.ndarray, rng, train: bool):
        for conv, bn in zip(self.convs, self.bns):
            x = conv(x)
            x = bn(x, lengths, train)
            x = ad.relu(x)
            x = ad.apply_time_mask(x, lengths)
        x = nnops.maxpool2x2_ceil(x)
        lengths = nnops.ceil_halve(lengths)
        x = ad.apply_time_mask(x, lengths)
        x = nnops.dropout(x, self.dropout_p, rng, train)
        return x, lengths

    def params(self):
        out = {}
        for i, (conv, bn) in enumerate(zip(self.convs, self.bns)):
            for name, p in conv.params().items():
                out[f"conv{i}.{name}"] = p
            for name, p in bn.params().items():
                out[f"bn{i}.{name}"] = p
        return out

    def state(self):
        out = {}
        for i, bn in enumerate(self.bns):
            for name, arr in bn.state().items():
                out[f"bn{i}.{name}"] = arr
        return out

    def set_state(self, key: str, value: np.ndarray):
        idx, name = key.split(".", 1)
        self.bns[int(idx[2:])].set_state(name, value)


class Model:
    """Conv stack + aggregator + linear classifier."""

    def __init__(self, config: ModelConfig, seed: int, aggregator: str | None = None,
                 dtype=np.float32):
        if aggregator is None:
            aggregator = TEMPORAL_AVERAGE if config.arch == "cnn" else LSTM_BLOCK
        if aggregator not in (TEMPORAL_AVERAGE, LSTM_BLOCK):
            raise BadConfig(f"unknown aggregator {aggregator!r}")
        self.config = config
        self.aggregator = aggregator
        self.dtype = dtype
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 17))))
        ladder = config.channel_ladder()
        self.blocks = []
        cin = 1
        for cout in ladder:
            self.blocks.append(
                ConvBlock(cin, cout, config.layers_per_block, config.dropout_p, rng, dtype)
            )
            cin = cout
        self._init_head(rng)

    def _init_head(self, rng: np.random.Generator):
        cfg = self.config
        if self.aggregator == LSTM_BLOCK:
            self.lstm = BiLstmStack(
                cfg.flatten_dim(),
                cfg.lstm_hidden_per_direction(),
                cfg.lstm_layers,
                cfg.dropout_p,
                rng,
                self.dtype,
            )
        else:
            self.lstm = None
        self.classifier = Dense(cfg.aggregate_dim(self.aggregator), cfg.num_classes, rng, self.dtype)

    def conv_params(self) -> dict[str, Tensor]:
        out = {}
        for b, block in enumerate(self.blocks):
            for name, p in block.params().items():
                out[f"block{b}.{name}"] = p
        return out

    def head_params(self) -> dict[str, Tensor]:
        out = {}
        if self.lstm is not None:
            for name, p in self.lstm.params().items():
                out[f"lstm.{name}"] = p
        for name, p in self.classifier.params().items():
            out[f"classifier.{name}"] = p
        return out

    def params(self) -> dict[str, Tensor]:
        return {**self.conv_params(), **self.head_params()}

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Parameters plus batchnorm running statistics, by name."""
        out = {name: p.data for name, p in self.params().items()}
        for b, block in enumerate(self.blocks):
            for name, arr in block.state().items():
                out[f"block{b}.{name}.stat"] = arr
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state_arrays().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        params = self.params()
        for key, value in snap.items():
            if key.endswith(".stat"):
                block_key = key[: -len(".stat")]
                b, rest = block_key.split(".", 1)
                self.blocks[int(b[5:])].set_state(rest, value)
            else:
                params[key].data = value.copy()

    def features(self, frames: Tensor, lengths: np.ndarray, rng, train: bool,
                 conv_train: bool | None = None):
        """Run the conv stack: [B,T,F] spectrograms -> [B,T',D] flat features."""
        if np.any(lengths < self.config.min_frames()):
            raise TooShortForDepth(
                f"need at least {self.config.min_frames()} frames, got {lengths.min()}"
            )
        x = ad.reshape(frames, frames.data.shape + (1,))
        x = ad.apply_time_mask(x, lengths)
        block_train = train if conv_train is None else conv_train
        for block in self.blocks:
            x, lengths = block(x, lengths, rng, block_train)
        b, t, f, c = x.data.shape
        return ad.reshape(x, (b, t, f * c)), lengths

    def logits(self, frames: Tensor, lengths: np.ndarray, rng, train: bool,
               conv_train: bool | None = None) -> Tensor:
        feats, lengths = self.features(frames, lengths, rng, train, conv_train)
        if self.aggregator == LSTM_BLOCK:
            agg = self.lstm(feats, lengths, rng, train)
        else:
            agg = nnops.temporal_masked_mean(feats, lengths)
        agg = nnops.dropout(agg, self.config.dropout_p, rng, train)
        return self.classifier(agg)

    def predict_proba(self, frames: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        """Inference-mode class probabilities for a padded batch."""
        rng = np.random.default_rng(0)  # unused in infer mode
        with ad.no_grad():
            logits = self.logits(Tensor(frames), lengths, rng, train=False)
            return nnops.softmax(logits).data


def build(config: ModelConfig, seed: int, aggregator: str | None = None,
          dtype=np.float32) -> Model:
    return Model(config, seed, aggregator, dtype)


def swap_aggregator(model: Model, target: str, seed: int) -> Model:
    """Replace the aggregator, preserving conv parameters bit-exactly.

    The classifier (and LSTM, if the target needs one) is freshly
    initialized because its input dimension changes with the aggregator.
    """
    if target not in (TEMPORAL_AVERAGE, LSTM_BLOCK):
        raise BadConfig(f"unknown aggregator {target!r}")
    if model.config.flatten_dim() < 1:
        raise IncompatibleShapes("conv stack produces no features to aggregate")
    swapped = Model.__new__(Model)
    swapped.config = model.config
    swapped.aggregator = target
    swapped.dtype = model.dtype
    swapped.blocks = model.blocks  # shared: bit-exact preservation
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 23))))
    swapped._init_head(rng)
    return swapped
