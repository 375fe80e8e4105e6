from .layers import (
    Concat, ConvLayer, Dense, Dropout, Flatten, Layer, MaxPool1d, Parameter, ReLU, Sequential,
    causal_conv1d_backward, causal_conv1d_forward, concat_features, dropout_forward,
    weight_norm_backward, weight_norm_forward,
)
from .network import Network
from .optim import AdamState, adam_step, mse_loss
from .tcn import ResidualBlock, TcnBlock, conv_stage, tcn_receptive_field
from .train import TrainConfig, TrainResult, evaluate_loss, train
from .gradcheck import grad_check, input_grad_check

__all__ = [
    "Concat", "ConvLayer", "Dense", "Dropout", "Flatten", "Layer", "MaxPool1d", "Parameter", "ReLU",
    "Sequential", "causal_conv1d_backward", "causal_conv1d_forward", "concat_features",
    "dropout_forward", "weight_norm_backward", "weight_norm_forward", "Network", "AdamState",
    "adam_step", "mse_loss", "ResidualBlock", "TcnBlock", "conv_stage", "tcn_receptive_field",
    "TrainConfig", "TrainResult", "evaluate_loss", "train", "grad_check", "input_grad_check",
]
