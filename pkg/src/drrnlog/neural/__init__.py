"""From-scratch differentiable encoders: GRU, BiDAF attention, MLP heads."""

from .autograd import Tensor, no_grad
from .layers import bidaf, bidaf_attention, grad_check, gru_encode, inv_dyn_loss, q_value
from .model import Adam, Dims, EncoderParams, Layout, QNetwork, StateInputs, load_checkpoint, save_checkpoint
from .text import Vocab, tokenize, words

__all__ = [
    "Adam",
    "Dims",
    "EncoderParams",
    "Layout",
    "QNetwork",
    "StateInputs",
    "Tensor",
    "Vocab",
    "bidaf",
    "bidaf_attention",
    "grad_check",
    "gru_encode",
    "inv_dyn_loss",
    "load_checkpoint",
    "no_grad",
    "q_value",
    "save_checkpoint",
    "tokenize",
    "words",
]
