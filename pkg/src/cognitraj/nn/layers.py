"""Parameterized wrappers around :mod:`cognitraj.nn.functional`."""
from __future__ import annotations

import math

import torch
from torch import Tensor, nn

from . import functional as F

DTYPE = torch.float64


def _param(*shape: int, dtype=DTYPE) -> nn.Parameter:
    return nn.Parameter(torch.zeros(*shape, dtype=dtype))


class Layer(nn.Module):
    """Base class: ``reset_parameters`` draws from a caller-owned generator."""

    def reset_parameters(self, gen: torch.Generator) -> None:
        for child in self.children():
            if isinstance(child, Layer):
                child.reset_parameters(gen)


def _uniform_(p: Tensor, fan_in: int, gen: torch.Generator) -> None:
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    with torch.no_grad():
        p.copy_(torch.rand(p.shape, generator=gen, dtype=torch.float64).mul(2 * bound).sub(bound).to(p.dtype))


class Dense(Layer):
    def __init__(self, d_in: int, d_out: int, bias: bool = True):
        super().__init__()
        self.W = _param(d_in, d_out)
        self.b = _param(d_out) if bias else None

    def reset_parameters(self, gen):
        _uniform_(self.W, self.W.shape[0], gen)
        if self.b is not None:
            _uniform_(self.b, self.W.shape[0], gen)

    def forward(self, x):
        return F.dense(x, self.W, self.b)


class MLP(Layer):
    """Dense -> ReLU -> Dense."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int):
        super().__init__()
        self.fc1 = Dense(d_in, d_hidden)
        self.fc2 = Dense(d_hidden, d_out)

    def forward(self, x):
        return self.fc2(F.relu(self.fc1(x)))


class GLU(Layer):
    def __init__(self, d_in: int, d_out: int):
        super().__init__()
        self.W1, self.b1 = _param(d_in, d_out), _param(d_out)
        self.W2, self.b2 = _param(d_in, d_out), _param(d_out)

    def reset_parameters(self, gen):
        fan = self.W1.shape[0]
        for p in (self.W1, self.b1, self.W2, self.b2):
            _uniform_(p, fan, gen)

    def forward(self, x):
        return F.glu(x, self.W1, self.b1, self.W2, self.b2)


class LayerNorm(Layer):
    def __init__(self, d: int, eps: float = 1e-5):
        super().__init__()
        self.gamma, self.beta, self.eps = _param(d), _param(d), eps

    def reset_parameters(self, gen):
        with torch.no_grad():
            self.gamma.fill_(1.0)
            self.beta.zero_()

    def forward(self, x):
        return F.layer_norm(x, self.gamma, self.beta, self.eps)


class GroupNorm(Layer):
    def __init__(self, groups: int, channels: int, eps: float = 1e-5):
        super().__init__()
        if channels % groups:
            raise ValueError(f"{channels} channels not divisible into {groups} groups")
        self.groups, self.eps = groups, eps
        self.gamma, self.beta = _param(channels), _param(channels)

    def reset_parameters(self, gen):
        with torch.no_grad():
            self.gamma.fill_(1.0)
            self.beta.zero_()

    def forward(self, x):
        return F.group_norm(x, self.groups, self.gamma, self.beta, self.eps)


class MultiHeadAttention(Layer):
    NAMES = ("wq", "wk", "wv", "wo")

    def __init__(self, d: int, heads: int):
        super().__init__()
        if d % heads:
            raise ValueError(f"model dim {d} not divisible by {heads} heads")
        self.heads = heads
        for name in self.NAMES:
            setattr(self, name, _param(d, d))
            setattr(self, "b" + name[1], _param(d))

    def params(self) -> dict[str, Tensor]:
        return {k: getattr(self, k) for k in ("wq", "wk", "wv", "wo", "bq", "bk", "bv", "bo")}

    def reset_parameters(self, gen):
        d = self.wq.shape[0]
        for name in self.NAMES:
            _uniform_(getattr(self, name), d, gen)
            _uniform_(getattr(self, "b" + name[1]), d, gen)

    def forward(self, x):
        return F.multi_head_attention(x, self.params(), self.heads)


class GCNLayer(Layer):
    def __init__(self, f_in: int, f_out: int):
        super().__init__()
        self.W = _param(f_in, f_out)

    def reset_parameters(self, gen):
        _uniform_(self.W, self.W.shape[0], gen)

    def forward(self, Z, A):
        return F.gcn_layer(Z, A, self.W)


class LSTM(Layer):
    def __init__(self, d_in: int, hidden: int):
        super().__init__()
        self.w_ih = _param(d_in, 4 * hidden)
        self.w_hh = _param(hidden, 4 * hidden)
        self.b = _param(4 * hidden)

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[0]

    def params(self) -> dict[str, Tensor]:
        return {"w_ih": self.w_ih, "w_hh": self.w_hh, "b": self.b}

    def reset_parameters(self, gen):
        for p in (self.w_ih, self.w_hh, self.b):
            _uniform_(p, self.hidden, gen)

    def forward(self, xs, h0=None, c0=None):
        return F.lstm_sequence(xs, self.params(), h0, c0)


class ParamStore:
    """Named view over a module's parameters with seeded initialization."""

    def __init__(self, module: nn.Module):
        self.module = module

    def names(self) -> list[str]:
        return [n for n, _ in self.module.named_parameters()]

    def __getitem__(self, name: str) -> Tensor:
        return dict(self.module.named_parameters())[name]

    def tensors(self) -> dict[str, Tensor]:
        return {n: p.detach() for n, p in self.module.named_parameters()}

    def grads(self) -> dict[str, Tensor]:
        return {n: (p.grad if p.grad is not None else torch.zeros_like(p)) for n, p in self.module.named_parameters()}

    def initialize(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        if isinstance(self.module, Layer):
            self.module.reset_parameters(gen)
        else:
            for child in self.module.children():
                if isinstance(child, Layer):
                    child.reset_parameters(gen)

    def load(self, tensors: dict[str, Tensor]) -> None:
        own = dict(self.module.named_parameters())
        missing = set(own) - set(tensors)
        extra = set(tensors) - set(own)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        with torch.no_grad():
            for name, p in own.items():
                src = tensors[name]
                if tuple(src.shape) != tuple(p.shape):
                    raise ValueError(f"{name}: shape {tuple(src.shape)} != {tuple(p.shape)}")
                p.copy_(torch.as_tensor(src, dtype=p.dtype))
