"""The per-employee autoencoder: architecture, forward/backward, model files.

The stack applies every layer per time step. Both LSTMs are stateful across
the sequence; dense layers are position-wise. The five named layers of the
reference architecture (22-wide input, 128 hidden, 64 bottleneck) carry
exactly 77312, 8256, 1430, 1472 and 98816 parameters; the sigmoid output
head that maps the final 128-wide hidden sequence back onto the 22 feature
bits adds 2838 more.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from lac.errors import DataError, NumericError
from lac.neural.layers import ACTIVATIONS, DenseLayer, LstmLayer

DEFAULT_INPUT_DIM = 22
DEFAULT_HIDDEN_DIM = 128
DEFAULT_BOTTLENECK_DIM = 64

_LAYER_NAMES = ("enc_lstm", "enc_dense1", "enc_dense2", "dec_dense", "dec_lstm", "head")

MODEL_MAGIC = b"LACM"
MODEL_VERSION = 1
_KIND_LSTM = 0
_KIND_DENSE = 1

LstmState = tuple[np.ndarray, np.ndarray]


@dataclass
class AutoencoderModel:
    enc_lstm: LstmLayer
    enc_dense1: DenseLayer
    enc_dense2: DenseLayer
    dec_dense: DenseLayer
    dec_lstm: LstmLayer
    head: DenseLayer

    @classmethod
    def initialize(cls, seed, input_dim: int = DEFAULT_INPUT_DIM,
                   hidden_dim: int = DEFAULT_HIDDEN_DIM,
                   bottleneck_dim: int = DEFAULT_BOTTLENECK_DIM) -> "AutoencoderModel":
        """Seeded uniform initialization; seed is anything default_rng accepts."""
        rng = np.random.default_rng(seed)
        return cls(
            enc_lstm=LstmLayer.initialize(input_dim, hidden_dim, rng),
            enc_dense1=DenseLayer.initialize(hidden_dim, bottleneck_dim, rng),
            enc_dense2=DenseLayer.initialize(bottleneck_dim, input_dim, rng),
            dec_dense=DenseLayer.initialize(input_dim, bottleneck_dim, rng),
            dec_lstm=LstmLayer.initialize(bottleneck_dim, hidden_dim, rng),
            head=DenseLayer.initialize(hidden_dim, input_dim, rng, activation="sigmoid"),
        )

    @property
    def input_dim(self) -> int:
        return self.enc_lstm.input_dim

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.enc_lstm.input_dim, self.enc_lstm.hidden_dim, self.enc_dense1.output_dim)

    def layers(self) -> list[tuple[str, LstmLayer | DenseLayer]]:
        return [(name, getattr(self, name)) for name in _LAYER_NAMES]

    def parameter_count(self) -> int:
        return sum(layer.parameter_count for _, layer in self.layers())

    def parameter_arrays(self) -> list[tuple[str, np.ndarray]]:
        """All trainable arrays in a fixed order, shared with Gradients."""
        out = []
        for name, layer in self.layers():
            out.append((f"{name}.weights", layer.weights))
            out.append((f"{name}.bias", layer.bias))
        return out

    def copy(self) -> "AutoencoderModel":
        return AutoencoderModel(
            enc_lstm=LstmLayer(self.enc_lstm.input_dim, self.enc_lstm.hidden_dim,
                               self.enc_lstm.weights.copy(), self.enc_lstm.bias.copy()),
            enc_dense1=_copy_dense(self.enc_dense1),
            enc_dense2=_copy_dense(self.enc_dense2),
            dec_dense=_copy_dense(self.dec_dense),
            dec_lstm=LstmLayer(self.dec_lstm.input_dim, self.dec_lstm.hidden_dim,
                               self.dec_lstm.weights.copy(), self.dec_lstm.bias.copy()),
            head=_copy_dense(self.head),
        )

    def zero_states(self) -> tuple[LstmState, LstmState]:
        return self.enc_lstm.zero_state(), self.dec_lstm.zero_state()


def _copy_dense(layer: DenseLayer) -> DenseLayer:
    return DenseLayer(layer.input_dim, layer.output_dim,
                      layer.weights.copy(), layer.bias.copy(), layer.activation)


@dataclass
class ForwardCaches:
    enc_lstm_cache: object
    enc_dense1_cache: object
    enc_dense2_cache: object
    dec_dense_cache: object
    dec_lstm_cache: object
    head_cache: object
    reconstruction: np.ndarray
    final_states: tuple[LstmState, LstmState]


Gradients = dict[str, np.ndarray]


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {name}")


def forward(model: AutoencoderModel, seq: np.ndarray,
            states: tuple[LstmState, LstmState] | None = None,
            keep_caches: bool = True) -> tuple[np.ndarray, ForwardCaches | None]:
    """Reconstruct seq (T, input_dim); returns (reconstruction, caches).

    With keep_caches=False only the reconstruction is computed (scoring
    path); caches are then None and backward() is impossible.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[1] != model.input_dim:
        raise NumericError(f"expected (T, {model.input_dim}) input, got {seq.shape}")
    _check_finite("input sequence", seq)
    enc_state, dec_state = states if states is not None else model.zero_states()

    h1, enc_final, c_lstm1 = model.enc_lstm.forward(seq, enc_state, keep_cache=keep_caches)
    _check_finite("enc_lstm output", h1)
    e1, c_d1 = model.enc_dense1.forward(h1)
    _check_finite("enc_dense1 output", e1)
    e2, c_d2 = model.enc_dense2.forward(e1)
    _check_finite("enc_dense2 output", e2)
    d1, c_d3 = model.dec_dense.forward(e2)
    _check_finite("dec_dense output", d1)
    h2, dec_final, c_lstm2 = model.dec_lstm.forward(d1, dec_state, keep_cache=keep_caches)
    _check_finite("dec_lstm output", h2)
    y, c_head = model.head.forward(h2)
    _check_finite("head output", y)

    if not keep_caches:
        return y, None
    caches = ForwardCaches(c_lstm1, c_d1, c_d2, c_d3, c_lstm2, c_head, y,
                           (enc_final, dec_final))
    return y, caches


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over all elements of the squared difference."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise NumericError(f"shape mismatch {pred.shape} vs {target.shape}")
    if pred.ndim != 2 or pred.shape[0] == 0:
        raise NumericError("loss requires a non-empty (T, width) pair")
    diff = pred - target
    return float(np.mean(diff * diff))


def backward(model: AutoencoderModel, caches: ForwardCaches | None,
             target: np.ndarray) -> Gradients:
    """Exact gradients of mse_loss(reconstruction, target) for every parameter."""
    if caches is None:
        raise NumericError("backward needs the caches of a matching forward pass")
    target = np.asarray(target, dtype=np.float64)
    pred = caches.reconstruction
    if target.shape != pred.shape:
        raise NumericError(f"target shape {target.shape} does not match {pred.shape}")
    if pred.shape[0] == 0:
        raise NumericError("backward requires at least one time step")

    dy = (2.0 / pred.size) * (pred - target)
    grads: Gradients = {}

    dw, db, dh2 = model.head.backward(caches.head_cache, dy)
    grads["head.weights"], grads["head.bias"] = dw, db
    dw, db, dd1, _, _ = model.dec_lstm.backward(caches.dec_lstm_cache, dh2)
    grads["dec_lstm.weights"], grads["dec_lstm.bias"] = dw, db
    dw, db, de2 = model.dec_dense.backward(caches.dec_dense_cache, dd1)
    grads["dec_dense.weights"], grads["dec_dense.bias"] = dw, db
    dw, db, de1 = model.enc_dense2.backward(caches.enc_dense2_cache, de2)
    grads["enc_dense2.weights"], grads["enc_dense2.bias"] = dw, db
    dw, db, dh1 = model.enc_dense1.backward(caches.enc_dense1_cache, de1)
    grads["enc_dense1.weights"], grads["enc_dense1.bias"] = dw, db
    dw, db, _, _, _ = model.enc_lstm.backward(caches.enc_lstm_cache, dh1)
    grads["enc_lstm.weights"], grads["enc_lstm.bias"] = dw, db
    return grads


def save_model(model: AutoencoderModel, path) -> None:
    """Write the versioned binary model file (layout documented in README)."""
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<HB", MODEL_VERSION, len(_LAYER_NAMES)))
        for _, layer in model.layers():
            if isinstance(layer, LstmLayer):
                fh.write(struct.pack("<BBII", _KIND_LSTM, 255,
                                     layer.input_dim, layer.hidden_dim))
            else:
                act = ACTIVATIONS.index(layer.activation)
                fh.write(struct.pack("<BBII", _KIND_DENSE, act,
                                     layer.input_dim, layer.output_dim))
        for _, layer in model.layers():
            fh.write(layer.weights.astype("<f8").tobytes(order="C"))
            fh.write(layer.bias.astype("<f8").tobytes(order="C"))


def load_model(path, expect_dims: tuple[int, int, int] | None = None) -> AutoencoderModel:
    """Read a model file back; optionally enforce (input, hidden, bottleneck) dims."""
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise DataError(f"{path}: truncated model file")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != MODEL_MAGIC:
        raise DataError(f"{path}: not a model file")
    version, n_layers = struct.unpack("<HB", take(3))
    if version != MODEL_VERSION:
        raise DataError(f"{path}: unsupported model version {version}")
    if n_layers != len(_LAYER_NAMES):
        raise DataError(f"{path}: expected {len(_LAYER_NAMES)} layers, found {n_layers}")
    headers = [struct.unpack("<BBII", take(10)) for _ in range(n_layers)]

    layers: list[LstmLayer | DenseLayer] = []
    for name, (kind, act, d_in, d_out) in zip(_LAYER_NAMES, headers):
        if kind == _KIND_LSTM:
            w = np.frombuffer(take(8 * 4 * d_out * (d_in + d_out)), dtype="<f8")
            b = np.frombuffer(take(8 * 4 * d_out), dtype="<f8")
            layers.append(LstmLayer(d_in, d_out,
                                    w.reshape(4 * d_out, d_in + d_out).copy(), b.copy()))
        elif kind == _KIND_DENSE:
            if act >= len(ACTIVATIONS):
                raise DataError(f"{path}: unknown activation code {act}")
            w = np.frombuffer(take(8 * d_out * d_in), dtype="<f8")
            b = np.frombuffer(take(8 * d_out), dtype="<f8")
            layers.append(DenseLayer(d_in, d_out, w.reshape(d_out, d_in).copy(),
                                     b.copy(), ACTIVATIONS[act]))
        else:
            raise DataError(f"{path}: unknown layer kind {kind} for {name}")
    if pos != len(data):
        raise DataError(f"{path}: trailing bytes after parameters")
    model = AutoencoderModel(*layers)
    if expect_dims is not None and model.dims != tuple(expect_dims):
        raise DataError(
            f"{path}: architecture mismatch, expected dims {tuple(expect_dims)}, "
            f"found {model.dims}"
        )
    return model
