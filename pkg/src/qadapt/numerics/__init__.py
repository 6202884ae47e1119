"""Dense float64 tensor arithmetic with tape-based reverse-mode AD."""

from . import ops
from .lstm import BiLSTMLayer, LSTMParams, bilstm_encode, init_bilstm, init_lstm, lstm_cell, lstm_sequence
from .ops import concat, logsumexp, matmul, softmax
from .optim import OptimizerState, TrainingError, adam_step, clip_by_global_norm
from .rng import Rng
from .tensor import DimensionError, NumericalError, Tape, Tensor, backward, detach, parameter

__all__ = [
    "BiLSTMLayer", "DimensionError", "LSTMParams", "NumericalError", "OptimizerState", "Rng",
    "Tape", "Tensor", "TrainingError", "adam_step", "backward", "bilstm_encode",
    "clip_by_global_norm", "concat", "detach", "init_bilstm", "init_lstm", "logsumexp",
    "lstm_cell", "lstm_sequence", "matmul", "ops", "parameter", "softmax",
]
