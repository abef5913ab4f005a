"""From-scratch LSTM autoencoder: layers, backpropagation through time, Adam."""

from lac.neural.adam import AdamConfig, AdamState, adam_step
from lac.neural.layers import DenseLayer, LstmLayer
from lac.neural.model import (
    AutoencoderModel,
    Gradients,
    backward,
    forward,
    load_model,
    mse_loss,
    save_model,
)
from lac.neural.train import TrainConfig, TrainReport, train

__all__ = [
    "AdamConfig", "AdamState", "adam_step",
    "DenseLayer", "LstmLayer",
    "AutoencoderModel", "Gradients", "backward", "forward",
    "load_model", "mse_loss", "save_model",
    "TrainConfig", "TrainReport", "train",
]
