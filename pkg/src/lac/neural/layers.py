"""LSTM and dense layer parameter containers with forward/backward passes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lac.errors import NumericError
from lac.neural import kernels

ACTIVATIONS = ("linear", "sigmoid", "tanh")


def _init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    scale = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-scale, scale, size=shape)


@dataclass
class LstmLayer:
    """Stateless parameter container; per-sequence state is passed explicitly.

    weights holds the four gate matrices stacked as rows [input; forget;
    output; candidate], columns [input features | previous hidden].
    """

    input_dim: int
    hidden_dim: int
    weights: np.ndarray  # (4H, D+H)
    bias: np.ndarray     # (4H,)

    @classmethod
    def initialize(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "LstmLayer":
        fan_in = input_dim + hidden_dim
        weights = _init_uniform(rng, (4 * hidden_dim, fan_in), fan_in)
        bias = np.zeros(4 * hidden_dim)
        bias[hidden_dim:2 * hidden_dim] = 1.0  # forget gate starts open
        return cls(input_dim, hidden_dim, weights, bias)

    @property
    def parameter_count(self) -> int:
        return self.weights.size + self.bias.size

    def zero_state(self) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros(self.hidden_dim), np.zeros(self.hidden_dim)

    def forward(self, x: np.ndarray, state: tuple[np.ndarray, np.ndarray] | None = None,
                keep_cache: bool = True):
        """Run the recurrence over x (T, D); returns (hidden seq, final state, cache)."""
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise NumericError(
                f"lstm expects (T, {self.input_dim}) input, got {x.shape}"
            )
        h0, c0 = state if state is not None else self.zero_state()
        w_x = self.weights[:, :self.input_dim]
        w_h = np.ascontiguousarray(self.weights[:, self.input_dim:])
        a_in = x @ w_x.T
        if keep_cache:
            hs, cs, gates, tcs = kernels.lstm_forward(w_h, self.bias, a_in, h0, c0)
            final = (hs[-1].copy(), cs[-1].copy()) if len(hs) else (h0.copy(), c0.copy())
            cache = _LstmCache(x, h0, c0, hs, cs, gates, tcs)
            return hs, final, cache
        hs = kernels.lstm_hidden(w_h, self.bias, a_in, h0, c0)
        return hs, None, None

    def backward(self, cache: "_LstmCache", dh_out: np.ndarray):
        """BPTT through the cached forward pass.

        Returns (dweights, dbias, dx, dh0, dc0); gradients across the chunk
        boundary (dh0, dc0) are returned for completeness and dropped by the
        truncated training loop.
        """
        w_h_t = np.ascontiguousarray(self.weights[:, self.input_dim:].T)
        da_all, dh0, dc0 = kernels.lstm_backward(
            w_h_t, cache.gates, cache.cs, cache.tcs, cache.c0, dh_out
        )
        if len(cache.hs):
            h_prev = np.vstack([cache.h0[None, :], cache.hs[:-1]])
        else:
            h_prev = np.empty((0, self.hidden_dim))
        dw = np.empty_like(self.weights)
        dw[:, :self.input_dim] = da_all.T @ cache.x
        dw[:, self.input_dim:] = da_all.T @ h_prev
        db = da_all.sum(axis=0)
        dx = da_all @ self.weights[:, :self.input_dim]
        return dw, db, dx, dh0, dc0


@dataclass
class _LstmCache:
    x: np.ndarray
    h0: np.ndarray
    c0: np.ndarray
    hs: np.ndarray
    cs: np.ndarray
    gates: np.ndarray
    tcs: np.ndarray


@dataclass
class DenseLayer:
    """Position-wise affine layer: y = act(x @ W.T + b)."""

    input_dim: int
    output_dim: int
    weights: np.ndarray  # (out, in)
    bias: np.ndarray     # (out,)
    activation: str = "linear"

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise NumericError(f"unknown activation {self.activation!r}")

    @classmethod
    def initialize(cls, input_dim: int, output_dim: int, rng: np.random.Generator,
                   activation: str = "linear") -> "DenseLayer":
        weights = _init_uniform(rng, (output_dim, input_dim), input_dim)
        return cls(input_dim, output_dim, weights, np.zeros(output_dim), activation)

    @property
    def parameter_count(self) -> int:
        return self.weights.size + self.bias.size

    def forward(self, x: np.ndarray):
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise NumericError(
                f"dense expects (T, {self.input_dim}) input, got {x.shape}"
            )
        y = x @ self.weights.T + self.bias
        if self.activation == "sigmoid":
            y = 1.0 / (1.0 + np.exp(-y))
        elif self.activation == "tanh":
            y = np.tanh(y)
        return y, _DenseCache(x, y)

    def backward(self, cache: "_DenseCache", dy: np.ndarray):
        if self.activation == "sigmoid":
            ds = dy * cache.y * (1.0 - cache.y)
        elif self.activation == "tanh":
            ds = dy * (1.0 - cache.y * cache.y)
        else:
            ds = dy
        dw = ds.T @ cache.x
        db = ds.sum(axis=0)
        dx = ds @ self.weights
        return dw, db, dx


@dataclass
class _DenseCache:
    x: np.ndarray
    y: np.ndarray
