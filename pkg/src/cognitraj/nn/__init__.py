from . import functional
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import GCNLayer, GLU, LSTM, MLP, Dense, GroupNorm, LayerNorm, MultiHeadAttention, ParamStore

__all__ = [
    "functional",
    "load_checkpoint",
    "save_checkpoint",
    "Dense",
    "MLP",
    "GLU",
    "LayerNorm",
    "GroupNorm",
    "MultiHeadAttention",
    "GCNLayer",
    "LSTM",
    "ParamStore",
]
