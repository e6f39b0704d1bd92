"""Central finite-difference gradient checker shared by the test modules."""
from __future__ import annotations

import torch


def relative_error(fn, inputs, h=1e-6):
    """Max over inputs of |autograd - central FD| / max(|autograd|, |FD|, 1).

    ``fn`` maps the list of tensors to a scalar tensor. Every input with
    ``requires_grad`` is perturbed element by element.
    """
    inputs = [x.detach().clone().requires_grad_(x.requires_grad) for x in inputs]
    out = fn(*inputs)
    grads = torch.autograd.grad(out, [x for x in inputs if x.requires_grad], allow_unused=True)
    worst = 0.0
    gi = 0
    for x in inputs:
        if not x.requires_grad:
            continue
        g = grads[gi]
        gi += 1
        g = torch.zeros_like(x) if g is None else g
        fd = torch.zeros_like(x)
        flat = x.detach().view(-1)
        with torch.no_grad():
            for k in range(flat.numel()):
                orig = flat[k].item()
                flat[k] = orig + h
                up = fn(*inputs).item()
                flat[k] = orig - h
                down = fn(*inputs).item()
                flat[k] = orig
                fd.view(-1)[k] = (up - down) / (2 * h)
        scale = max(g.abs().max().item(), fd.abs().max().item(), 1.0)
        worst = max(worst, (g - fd).abs().max().item() / scale)
    return worst


def module_relative_error(module, loss_fn, h=1e-6):
    """Finite-difference check over every trainable parameter of ``module``.

    ``loss_fn()`` closes over the module and returns a scalar.
    """
    params = [p for p in module.parameters() if p.requires_grad]
    module.zero_grad()
    out = loss_fn()
    grads = torch.autograd.grad(out, params, allow_unused=True)
    worst = 0.0
    for p, g in zip(params, grads):
        g = torch.zeros_like(p) if g is None else g
        fd = torch.zeros_like(p)
        flat = p.data.view(-1)
        with torch.no_grad():
            for k in range(flat.numel()):
                orig = flat[k].item()
                flat[k] = orig + h
                up = loss_fn().item()
                flat[k] = orig - h
                down = loss_fn().item()
                flat[k] = orig
                fd.view(-1)[k] = (up - down) / (2 * h)
        scale = max(g.abs().max().item(), fd.abs().max().item(), 1.0)
        worst = max(worst, (g - fd).abs().max().item() / scale)
    return worst


def sampled_relative_error(module, loss_fn, per_tensor=3, directions=8, h=1e-6, seed=0):
    """Cheaper check for large modules.

    Compares a few sampled coordinates of every parameter tensor, plus
    directional derivatives along random unit directions that cover all
    parameters at once.
    """
    params = [p for p in module.parameters() if p.requires_grad]
    grads = torch.autograd.grad(loss_fn(), params, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
    gen = torch.Generator().manual_seed(seed)
    worst = 0.0
    with torch.no_grad():
        for p, g in zip(params, grads):
            flat = p.data.view(-1)
            picks = torch.randperm(flat.numel(), generator=gen)[:per_tensor].tolist()
            for k in picks:
                orig = flat[k].item()
                flat[k] = orig + h
                up = loss_fn().item()
                flat[k] = orig - h
                down = loss_fn().item()
                flat[k] = orig
                fd = (up - down) / (2 * h)
                an = g.view(-1)[k].item()
                worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1.0))
        for _ in range(directions):
            dirs = [torch.randn(p.shape, generator=gen, dtype=p.dtype) for p in params]
            norm = torch.sqrt(sum((d * d).sum() for d in dirs))
            dirs = [d / norm for d in dirs]
            an = sum((g * d).sum() for g, d in zip(grads, dirs)).item()
            for p, d in zip(params, dirs):
                p.add_(h * d)
            up = loss_fn().item()
            for p, d in zip(params, dirs):
                p.sub_(2 * h * d)
            down = loss_fn().item()
            for p, d in zip(params, dirs):
                p.add_(h * d)
            fd = (up - down) / (2 * h)
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1.0))
    return worst
