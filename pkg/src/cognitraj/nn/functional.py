"""Stateless layer math on torch tensors.

Leading dimensions are treated as batch dimensions throughout. Gradients come
from torch autograd; every op here is checked against finite differences in
the test suite.
"""
from __future__ import annotations

import math

import torch
from torch import Tensor


def _check_last(x: Tensor, expected: int, what: str):
    if x.shape[-1] != expected:
        raise ValueError(f"{what}: expected last dim {expected}, got {tuple(x.shape)}")


def dense(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ W + b with W shaped (in, out)."""
    _check_last(x, W.shape[0], "dense")
    y = x @ W
    if b is not None:
        if b.shape != (W.shape[1],):
            raise ValueError(f"dense: bias shape {tuple(b.shape)} does not match W {tuple(W.shape)}")
        y = y + b
    return y


def relu(x: Tensor) -> Tensor:
    return torch.clamp(x, min=0)


def sigmoid(x: Tensor) -> Tensor:
    return torch.sigmoid(x)


def tanh(x: Tensor) -> Tensor:
    return torch.tanh(x)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x - x.amax(dim=axis, keepdim=True).detach()
    e = torch.exp(z)
    return e / e.sum(dim=axis, keepdim=True)


def glu(alpha: Tensor, W1: Tensor, b1: Tensor, W2: Tensor, b2: Tensor) -> Tensor:
    """(alpha W1 + b1) * sigmoid(alpha W2 + b2)."""
    if W1.shape != W2.shape:
        raise ValueError("glu: W1 and W2 must have the same shape")
    return dense(alpha, W1, b1) * sigmoid(dense(alpha, W2, b2))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(dim=-1, keepdim=True)
    var = ((x - mu) ** 2).mean(dim=-1, keepdim=True)
    return (x - mu) / torch.sqrt(var + eps) * gamma + beta


def group_norm(x: Tensor, groups: int, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize each contiguous channel group of the last axis separately."""
    C = x.shape[-1]
    if C % groups:
        raise ValueError(f"group_norm: {C} channels not divisible into {groups} groups")
    g = x.reshape(*x.shape[:-1], groups, C // groups)
    mu = g.mean(dim=-1, keepdim=True)
    var = ((g - mu) ** 2).mean(dim=-1, keepdim=True)
    g = (g - mu) / torch.sqrt(var + eps)
    return g.reshape(x.shape) * gamma + beta


def multi_head_attention(x: Tensor, params: dict[str, Tensor], heads: int) -> Tensor:
    """Scaled dot-product self-attention over axis -2.

    ``params`` holds wq, wk, wv, wo (d, d) and bq, bk, bv, bo (d,).
    """
    d = x.shape[-1]
    if d % heads:
        raise ValueError(f"attention: model dim {d} not divisible by {heads} heads")
    dh = d // heads
    T = x.shape[-2]

    def split(t: Tensor) -> Tensor:
        return t.reshape(*t.shape[:-1], heads, dh).transpose(-2, -3)  # (..., heads, T, dh)

    q = split(dense(x, params["wq"], params["bq"]))
    k = split(dense(x, params["wk"], params["bk"]))
    v = split(dense(x, params["wv"], params["bv"]))
    scores = q @ k.transpose(-1, -2) / math.sqrt(dh)
    out = softmax(scores, axis=-1) @ v
    out = out.transpose(-2, -3).reshape(*x.shape[:-2], T, d)
    return dense(out, params["wo"], params["bo"])


def normalized_adjacency(A: Tensor) -> Tensor:
    """D^-1/2 (A + I) D^-1/2 with D the row sums of A + I."""
    if A.shape[-1] != A.shape[-2]:
        raise ValueError("gcn: adjacency must be square")
    if not torch.equal(A, A.transpose(-1, -2)):
        raise ValueError("gcn: adjacency must be symmetric")
    eye = torch.eye(A.shape[-1], dtype=A.dtype, device=A.device)
    A_hat = A + eye
    d = A_hat.sum(dim=-1).rsqrt()
    return d.unsqueeze(-1) * A_hat * d.unsqueeze(-2)


def gcn_layer(Z: Tensor, A: Tensor, W: Tensor) -> Tensor:
    """ReLU(D^-1/2 (A + I) D^-1/2 Z W)."""
    if Z.shape[-2] != A.shape[-1]:
        raise ValueError(f"gcn: {Z.shape[-2]} node rows vs {A.shape[-1]}-node adjacency")
    return relu(normalized_adjacency(A) @ dense(Z, W))


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, params: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """One LSTM step. Gates are packed (input, forget, cell, output) in
    ``w_ih`` (in, 4H), ``w_hh`` (H, 4H) and ``b`` (4H,)."""
    H = h.shape[-1]
    _check_last(x, params["w_ih"].shape[0], "lstm input")
    if params["w_hh"].shape != (H, 4 * H):
        raise ValueError("lstm: hidden size does not match w_hh")
    z = x @ params["w_ih"] + h @ params["w_hh"] + params["b"]
    i, f, g, o = z.split(H, dim=-1)
    c_new = sigmoid(f) * c + sigmoid(i) * tanh(g)
    h_new = sigmoid(o) * tanh(c_new)
    return h_new, c_new


def lstm_sequence(xs: Tensor, params: dict[str, Tensor], h0: Tensor | None = None, c0: Tensor | None = None) -> Tensor:
    """Run the cell over axis -2 with shared weights; returns all hidden states."""
    T = xs.shape[-2]
    if T == 0:
        raise ValueError("lstm: empty sequence")
    H = params["w_hh"].shape[0]
    batch = xs.shape[:-2]
    h = h0 if h0 is not None else xs.new_zeros(*batch, H)
    c = c0 if c0 is not None else xs.new_zeros(*batch, H)
    out = []
    for t in range(T):
        h, c = lstm_cell(xs[..., t, :], h, c, params)
        out.append(h)
    return torch.stack(out, dim=-2)


def backward(loss: Tensor) -> None:
    """Reverse pass with a finiteness guard on the forward value."""
    if not torch.isfinite(loss).all():
        raise FloatingPointError("non-finite value in forward pass; refusing to backpropagate")
    if loss.numel() != 1:
        loss = loss.sum()
    loss.backward()
