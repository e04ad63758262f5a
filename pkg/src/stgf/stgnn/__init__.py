"""Spatiotemporal graph network: LSTM motion encoder, two graph attention layers, LSTM decoder."""

from .model import (
    HistoryTooShort,
    ProcessNoise,
    RaggedHistories,
    backward,
    forward,
    loss,
    loss_and_grad,
    lstm_encode_step,
    predict,
    propagate_uncertainty,
)
from .params import PARAM_NAMES, ModelParams, load_params, save_params
from .train import EmptyDataset, TrainConfig, TrainResult, calibrate_process_noise, train
