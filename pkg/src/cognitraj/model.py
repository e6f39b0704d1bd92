"""Encoders, Leanformer fusion, GMM decoder and the multitask loss."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
import torch
from torch import Tensor, nn

from .features import WindowFeatures
from .nn import functional as F
from .nn.layers import DTYPE, GCNLayer, GLU, LSTM, MLP, Dense, GroupNorm, Layer, LayerNorm, MultiHeadAttention

SIGMA_MIN = 1e-3
N_SAFETY = 5
N_BEHAVIOR = 18
N_PRIORITY = 12
LOG_VAR_BOUND = 4.0


@dataclass
class ModelConfig:
    width: int = 64
    heads: int = 4
    modes: int = 6
    gcn_layers: int = 2
    gn_groups: int = 4
    t_f_frames: int = 50
    use_qsa: bool = True
    use_dbp: bool = True
    use_priority: bool = True
    use_interaction: bool = True
    multimodal: bool = True

    def __post_init__(self):
        problems = []
        if self.width < 1 or self.width % self.heads:
            problems.append(f"width {self.width} must be a positive multiple of heads {self.heads}")
        if (3 * self.width) % self.heads:
            problems.append("fused width must be divisible by heads")
        if self.width % self.gn_groups:
            problems.append(f"width {self.width} not divisible by gn_groups {self.gn_groups}")
        if self.modes < 1:
            problems.append("modes must be >= 1")
        if self.t_f_frames < 1:
            problems.append("t_f_frames must be >= 1")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def n_modes(self) -> int:
        return self.modes if self.multimodal else 1

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class PredictionSet:
    """M candidate futures in absolute coordinates plus mode probabilities."""

    means: np.ndarray  # (M, t_f, 2)
    confidences: np.ndarray  # (M,)
    scales: np.ndarray  # (M, t_f, 2)
    rho: np.ndarray  # (M, t_f)

    @property
    def n_modes(self) -> int:
        return len(self.confidences)

    def most_likely(self) -> np.ndarray:
        return self.means[int(np.argmax(self.confidences))]


# ---------------------------------------------------------------- batching


@dataclass
class Batch:
    q: Tensor  # (B, T, n_max, 5)
    adj: Tensor  # (B, T, n_max, n_max)
    behavior: Tensor  # (B, T, 18)
    s: Tensor  # (B, T, 6)
    p: Tensor  # (B, T, 6)
    origin: Tensor  # (B, 2)
    future: Tensor | None  # (B, t_f, 2)


def collate(items: Sequence[WindowFeatures], dtype=DTYPE) -> Batch:
    """Stack windows, zero-padding agents.

    Padded nodes have no edges and zero features, so with self-loop
    normalization they never influence real nodes.
    """
    if not items:
        raise ValueError("empty batch")
    T = items[0].q.shape[0]
    if any(it.q.shape[0] != T for it in items):
        raise ValueError("windows disagree on history length")
    n_max = max(it.n_agents for it in items)
    B = len(items)
    q = np.zeros((B, T, n_max, N_SAFETY))
    adj = np.zeros((B, T, n_max, n_max))
    for b, it in enumerate(items):
        n = it.n_agents
        q[b, :, :n] = it.q
        adj[b, :, :n, :n] = it.adj
    t = lambda a: torch.as_tensor(np.asarray(a), dtype=dtype)  # noqa: E731
    future = None
    if all(it.future is not None for it in items):
        future = t(np.stack([it.future for it in items]))
    return Batch(
        q=t(q),
        adj=t(adj),
        behavior=t(np.stack([it.behavior for it in items])),
        s=t(np.stack([it.s for it in items])),
        p=t(np.stack([it.p for it in items])),
        origin=t(np.stack([it.origin for it in items])),
        future=future,
    )


# ---------------------------------------------------------------- encoders


class SequenceHead(Layer):
    """Self-attention over frames, then GLU -> MLP -> layer norm."""

    def __init__(self, width: int, heads: int):
        super().__init__()
        self.attn = MultiHeadAttention(width, heads)
        self.glu = GLU(width, width)
        self.mlp = MLP(width, width, width)
        self.norm = LayerNorm(width)

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(self.mlp(self.glu(self.attn(x))))


class SafetyEncoder(Layer):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        dims = [N_SAFETY] + [cfg.width] * cfg.gcn_layers
        self.gcn = nn.ModuleList(GCNLayer(a, b) for a, b in zip(dims[:-1], dims[1:]))
        self.head = SequenceHead(cfg.width, cfg.heads)

    def node_features(self, q: Tensor, adj: Tensor) -> Tensor:
        """GCN output of the target node per frame, (..., T, width)."""
        z = q
        for layer in self.gcn:
            z = layer(z, adj)
        return z[..., 0, :]

    def forward(self, q: Tensor, adj: Tensor) -> Tensor:
        return self.head(self.node_features(q, adj))


def compress(x: Tensor) -> Tensor:
    # centralities span many orders of magnitude (power centrality grows like
    # exp of the edge lengths); a signed log keeps the inputs well scaled
    return torch.sign(x) * torch.log1p(torch.abs(x))


class BehaviorEncoder(Layer):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w = cfg.width
        self.embed_criteria = MLP(N_BEHAVIOR, w, w)
        self.embed_safety = MLP(w, w, w)
        self.lstm = LSTM(2 * w, w)
        self.head = SequenceHead(w, cfg.heads)

    def forward(self, behavior: Tensor, o_safety: Tensor) -> Tensor:
        x = torch.cat([self.embed_criteria(behavior), self.embed_safety(o_safety)], dim=-1)
        return self.head(self.lstm(x))


class PriorityEncoder(Layer):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.lstm = LSTM(N_PRIORITY, cfg.width)
        self.head = SequenceHead(cfg.width, cfg.heads)

    def forward(self, s: Tensor, p: Tensor) -> Tensor:
        return self.head(self.lstm(torch.cat([s, p], dim=-1)))


class Leanformer(Layer):
    """One pre-norm transformer block over frames."""

    def __init__(self, d: int, heads: int):
        super().__init__()
        self.norm1 = LayerNorm(d)
        self.attn = MultiHeadAttention(d, heads)
        self.norm2 = LayerNorm(d)
        self.mlp = MLP(d, d, d)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


def leanformer_fuse(o_safety: Tensor, o_behavior: Tensor, o_priority: Tensor, block: Leanformer | None) -> Tensor:
    if not (o_safety.shape[-2] == o_behavior.shape[-2] == o_priority.shape[-2]):
        raise ValueError("branch outputs disagree on frame count")
    fused = torch.cat([o_safety, o_behavior, o_priority], dim=-1)
    return block(fused) if block is not None else fused


class DecoderStage(Layer):
    """ReLU(MLP(GroupNorm(LSTM(x))))."""

    def __init__(self, d_in: int, width: int, groups: int):
        super().__init__()
        self.lstm = LSTM(d_in, width)
        self.norm = GroupNorm(groups, width)
        self.mlp = MLP(width, width, width)

    def forward(self, x: Tensor) -> Tensor:
        return F.relu(self.mlp(self.norm(self.lstm(x))))


class GMMDecoder(Layer):
    """Two stacked decoder stages and per-mode Gaussian heads.

    Stage one reads the fused history; its last frame seeds stage two, which
    unrolls over the future horizon. Means are cumulative sums of per-frame
    displacements relative to the target's current position.
    """

    def __init__(self, d_in: int, cfg: ModelConfig):
        super().__init__()
        w = cfg.width
        self.modes = cfg.n_modes
        self.t_f = cfg.t_f_frames
        self.stage1 = DecoderStage(d_in, w, cfg.gn_groups)
        self.stage2 = DecoderStage(w, w, cfg.gn_groups)
        self.traj_head = Dense(w, self.modes * 5)
        self.conf_head = Dense(w, self.modes)

    def forward(self, fused: Tensor) -> dict[str, Tensor]:
        e = self.stage1(fused)[..., -1, :]
        seq = e.unsqueeze(-2).expand(*e.shape[:-1], self.t_f, e.shape[-1])
        h = self.stage2(seq)
        raw = self.traj_head(h).reshape(*h.shape[:-1], self.modes, 5).movedim(-2, -3)  # (..., M, t_f, 5)
        return {
            "means": torch.cumsum(raw[..., 0:2], dim=-2),
            "log_scales": raw[..., 2:4],
            "rho": torch.tanh(raw[..., 4]),
            "logits": self.conf_head(e),
        }


class TaskWeights(Layer):
    """Learned log-variances s_k of the two loss terms."""

    def __init__(self):
        super().__init__()
        self.log_vars = nn.Parameter(torch.zeros(2, dtype=DTYPE))

    def reset_parameters(self, gen):
        with torch.no_grad():
            self.log_vars.zero_()


class InputScaler(Layer):
    """Fixed per-channel standardization fitted on the training windows.

    Stored as frozen parameters so checkpoints carry it. Identity until fit.
    """

    def __init__(self):
        super().__init__()
        for name, n in (("q", N_SAFETY), ("behavior", N_BEHAVIOR), ("s", 6), ("p", 6)):
            self.register_parameter(f"{name}_mean", nn.Parameter(torch.zeros(n, dtype=DTYPE), requires_grad=False))
            self.register_parameter(f"{name}_std", nn.Parameter(torch.ones(n, dtype=DTYPE), requires_grad=False))
        # metres per future frame the decoder's unit displacement stands for
        self.step_scale = nn.Parameter(torch.ones((), dtype=DTYPE), requires_grad=False)

    def reset_parameters(self, gen):
        with torch.no_grad():
            for name, p in self.named_parameters():
                p.fill_(0.0 if name.endswith("_mean") else 1.0)

    def fit(self, items: Sequence[WindowFeatures]) -> None:
        q = np.concatenate([it.q.reshape(-1, N_SAFETY) for it in items])
        beh = np.concatenate([np.log1p(np.abs(it.behavior)) for it in items])
        s = np.concatenate([it.s[1:] for it in items])
        p = np.concatenate([it.p for it in items])
        with torch.no_grad():
            for name, arr in (("q", q), ("behavior", beh), ("s", s), ("p", p)):
                std = arr.std(axis=0)
                getattr(self, f"{name}_mean").copy_(torch.as_tensor(arr.mean(axis=0)))
                getattr(self, f"{name}_std").copy_(torch.as_tensor(np.where(std > 1e-6, std, 1.0)))
            fut = [it.future for it in items if it.future is not None]
            if fut:
                steps = np.concatenate([np.diff(np.vstack([np.zeros((1, 2)), f]), axis=0) for f in fut])
                self.step_scale.fill_(float(max(np.sqrt((steps**2).sum(axis=1)).mean(), 1e-3)))

    def scale(self, name: str, x: Tensor) -> Tensor:
        return (x - getattr(self, f"{name}_mean")) / getattr(self, f"{name}_std")


class CogniTraj(Layer):
    def __init__(self, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.cfg = cfg
        w = cfg.width
        self.scaler = InputScaler()
        self.safety = SafetyEncoder(cfg)
        self.behavior = BehaviorEncoder(cfg)
        self.priority = PriorityEncoder(cfg)
        self.fusion = Leanformer(3 * w, cfg.heads) if cfg.use_interaction else None
        self.decoder = GMMDecoder(3 * w, cfg)
        self.task_weights = TaskWeights()

    def encode(self, batch: Batch) -> dict[str, Tensor]:
        cfg = self.cfg
        T = batch.s.shape[-2]
        zeros = batch.s.new_zeros(*batch.s.shape[:-2], T, cfg.width)
        sc = self.scaler
        o_safety = self.safety(sc.scale("q", batch.q), batch.adj) if cfg.use_qsa else zeros
        o_behavior = self.behavior(sc.scale("behavior", compress(batch.behavior)), o_safety) if cfg.use_dbp else zeros
        o_priority = self.priority(sc.scale("s", batch.s), sc.scale("p", batch.p)) if cfg.use_priority else zeros
        return {"safety": o_safety, "behavior": o_behavior, "priority": o_priority}

    def forward(self, batch: Batch) -> dict[str, Tensor]:
        enc = self.encode(batch)
        fused = leanformer_fuse(enc["safety"], enc["behavior"], enc["priority"], self.fusion)
        out = self.decoder(fused)
        out["means"] = out["means"] * self.scaler.step_scale
        out["confidences"] = F.softmax(out["logits"], axis=-1)
        return out


def to_prediction_sets(out: dict[str, Tensor], origin: Tensor) -> list[PredictionSet]:
    means = (out["means"] + origin[:, None, None, :]).detach().cpu().numpy()
    scales = torch.clamp(torch.exp(out["log_scales"]), min=SIGMA_MIN).detach().cpu().numpy()
    rho = out["rho"].detach().cpu().numpy()
    conf = out["confidences"].detach().cpu().numpy()
    return [PredictionSet(means[b], conf[b], scales[b], rho[b]) for b in range(len(conf))]


def predict(model: CogniTraj, items: Sequence[WindowFeatures], batch_size: int = 64) -> list[PredictionSet]:
    model.eval()
    preds = []
    with torch.no_grad():
        for i in range(0, len(items), batch_size):
            batch = collate(items[i:i + batch_size])
            preds.extend(to_prediction_sets(model(batch), batch.origin))
    return preds


# ---------------------------------------------------------------- loss


@dataclass
class LossReport:
    rmse_term: Tensor
    nll_term: Tensor
    task_weights: Tensor
    total: Tensor
    clamped_scales: int = 0

    def as_floats(self) -> dict[str, float]:
        return {
            "total": float(self.total),
            "rmse": float(self.rmse_term),
            "nll": float(self.nll_term),
            "s_rmse": float(self.task_weights[0]),
            "s_nll": float(self.task_weights[1]),
            "clamped": self.clamped_scales,
        }


def bivariate_log_density(x: Tensor, mean: Tensor, sigma: Tensor, rho: Tensor) -> Tensor:
    """log N(x; mean, diag(sigma) R(rho) diag(sigma)) over the last axis of size 2."""
    d = (x - mean) / sigma
    one_m = 1 - rho**2
    z = d[..., 0] ** 2 - 2 * rho * d[..., 0] * d[..., 1] + d[..., 1] ** 2
    return -math.log(2 * math.pi) - torch.log(sigma[..., 0]) - torch.log(sigma[..., 1]) - 0.5 * torch.log(one_m) - z / (2 * one_m)


def mixture_nll(means: Tensor, log_scales: Tensor, rho: Tensor, logits: Tensor, truth: Tensor) -> tuple[Tensor, int]:
    """Per-frame mixture NLL, averaged over the batch. Returns (nll, clamped)."""
    sigma_raw = torch.exp(log_scales)
    clamped = int((sigma_raw < SIGMA_MIN).sum())
    sigma = torch.clamp(sigma_raw, min=SIGMA_MIN)
    log_n = bivariate_log_density(truth.unsqueeze(-3), means, sigma, rho)  # (B, M, t_f)
    log_mode = log_n.sum(dim=-1) + torch.log_softmax(logits, dim=-1)
    nll = -torch.logsumexp(log_mode, dim=-1) / truth.shape[-2]
    return nll.mean(), clamped


def top_mode_rmse(means: Tensor, logits: Tensor, truth: Tensor) -> Tensor:
    """RMSE of the highest-confidence mode over all future frames."""
    idx = logits.argmax(dim=-1)
    chosen = means[torch.arange(means.shape[0]), idx]
    mse = ((chosen - truth) ** 2).sum(dim=-1).mean(dim=-1)
    safe = torch.sqrt(torch.clamp(mse, min=1e-300))
    return torch.where(mse > 0, safe, torch.zeros_like(mse)).mean()


def loss(out: dict[str, Tensor], truth: Tensor, log_vars: Tensor) -> LossReport:
    """exp(-s_1) RMSE + s_1 + exp(-s_2) NLL + s_2 with bounded s_k."""
    if truth.shape[-2] != out["means"].shape[-2]:
        raise ValueError("truth does not cover the prediction horizon")
    rmse = top_mode_rmse(out["means"], out["logits"], truth)
    nll, clamped = mixture_nll(out["means"], out["log_scales"], out["rho"], out["logits"], truth)
    s = torch.clamp(log_vars, -LOG_VAR_BOUND, LOG_VAR_BOUND)
    total = torch.exp(-s[0]) * rmse + s[0] + torch.exp(-s[1]) * nll + s[1]
    return LossReport(rmse, nll, s.detach(), total, clamped)

