"""The transcription network: conv stack -> recurrent stack -> linear head.

Layer order follows the architecture the default config describes:
Conv1d, ReLU (, BatchNorm) twice; BiLSTM (, BatchNorm), Dropout twice;
then a per-frame Linear producing one logit row per frame over
``output_classes`` classes (the last class is the CTC blank).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .layers import BatchNorm1d, Conv1d, Dropout, Linear, ReLU, ShapeMismatchError
from .lstm import LSTM, BiLSTM


@dataclass(frozen=True)
class ModelConfig:
    mfcc_coefficients: int = 40
    conv_layers: int = 2
    conv_units: int = 128
    conv_kernel: int = 3
    conv_activation: str = "relu"
    conv_batchnorm: bool = True
    lstm_layers: int = 2
    lstm_units: int = 512
    lstm_dropout: float = 0.5
    lstm_bidirectional: bool = True
    lstm_batchnorm: bool = True
    output_classes: int = 38

    def __post_init__(self):
        if min(self.mfcc_coefficients, self.conv_units, self.lstm_units,
               self.output_classes) <= 0:
            raise ValueError("all sizes must be positive")
        if not 0.0 <= self.lstm_dropout < 1.0:
            raise ValueError("lstm_dropout must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class TranscriptionModel:
    """Stateful layer stack; one forward pass, then at most one backward.

    ``rng=None`` builds zero-initialized weights (used when loading a
    checkpoint or counting parameters); pass a Generator to initialize for
    training. ``dropout_seed`` plus the optimizer step index key the
    dropout masks.
    """

    def __init__(self, config: ModelConfig, rng=None, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        self.dropout_seed = 0
        self._layers: list[tuple[str, object]] = []

        width = config.mfcc_coefficients
        for i in range(1, config.conv_layers + 1):
            self._layers.append(
                (f"conv{i}",
                 Conv1d(width, config.conv_units, config.conv_kernel, rng, dtype)))
            if config.conv_activation == "relu":
                self._layers.append((f"conv{i}_relu", ReLU()))
            elif config.conv_activation != "none":
                raise ValueError(f"unknown activation {config.conv_activation!r}")
            width = config.conv_units
            if config.conv_batchnorm:
                self._layers.append((f"conv{i}_bn", BatchNorm1d(width, dtype=dtype)))

        for i in range(1, config.lstm_layers + 1):
            if config.lstm_bidirectional:
                rnn = BiLSTM(width, config.lstm_units, rng, dtype)
                width = 2 * config.lstm_units
            else:
                rnn = LSTM(width, config.lstm_units, rng=rng, dtype=dtype)
                width = config.lstm_units
            self._layers.append((f"lstm{i}", rnn))
            if config.lstm_batchnorm:
                self._layers.append((f"lstm{i}_bn", BatchNorm1d(width, dtype=dtype)))
            self._layers.append(
                (f"lstm{i}_dropout", Dropout(config.lstm_dropout, layer_id=i)))

        self._layers.append(("out", Linear(width, config.output_classes, rng, dtype)))

    def forward(self, x: np.ndarray, train: bool = False, step: int = 0):
        """(B, T, mfcc_coefficients) -> logits (B, T, output_classes)."""
        if x.ndim != 3:
            raise ShapeMismatchError(f"expected (B, T, C), got {x.shape}")
        for _, layer in self._layers:
            if isinstance(layer, Dropout):
                layer.seed = self.dropout_seed
                x = layer.forward(x, train=train, step=step)
            elif isinstance(layer, BatchNorm1d):
                x = layer.forward(x, train=train)
            else:
                x = layer.forward(x)
        return x

    def forward_single(self, features: np.ndarray) -> np.ndarray:
        """Eval-mode logits for one (T, C) feature matrix -> (T, classes)."""
        out = self.forward(features[None].astype(self.dtype, copy=False),
                           train=False)
        return out[0]

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        dy = dlogits
        for _, layer in reversed(self._layers):
            dy = layer.backward(dy)
        return dy

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self._layers:
            for key, value in getattr(layer, "params", {}).items():
                out[f"{name}.{key}"] = value
        return out

    def gradients(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self._layers:
            for key, value in getattr(layer, "grads", {}).items():
                out[f"{name}.{key}"] = value
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self._layers:
            for key, value in getattr(layer, "buffers", {}).items():
                out[f"{name}.{key}"] = value
        return out

    def load_arrays(self, params: dict[str, np.ndarray],
                    buffers: dict[str, np.ndarray] | None = None) -> None:
        """Copy values into the existing parameter/buffer arrays by name."""
        own = self.parameters()
        if set(params) != set(own):
            missing = set(own) ^ set(params)
            raise ShapeMismatchError(f"parameter name mismatch: {sorted(missing)}")
        for name, value in params.items():
            if own[name].shape != value.shape:
                raise ShapeMismatchError(
                    f"{name}: expected {own[name].shape}, got {value.shape}")
            own[name][...] = value
        if buffers:
            own_buf = self.buffers()
            for name, value in buffers.items():
                if name not in own_buf:
                    raise ShapeMismatchError(f"unknown buffer {name}")
                own_buf[name][...] = value


def count_params(config: ModelConfig) -> int:
    """Total trainable elements (running statistics excluded)."""
    model = TranscriptionModel(config)
    return sum(v.size for v in model.parameters().values())
