"""Adam + cosine warm restarts training loop with per-epoch metrics."""
from __future__ import annotations

import copy
import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import torch

from .features import WindowFeatures
from .model import CogniTraj, ModelConfig, collate, loss
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.functional import backward
from .nn.layers import ParamStore

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, checkpoint: str | None):
        super().__init__(f"non-finite loss at epoch {epoch}; last good checkpoint: {checkpoint}")
        self.epoch = epoch
        self.checkpoint = checkpoint


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    restart_epochs: int = 50
    restart_mult: int = 1
    seed: int = 0
    threads: int = 1


@dataclass
class TrainResult:
    model: CogniTraj
    history: list[dict] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [h["total"] for h in self.history]


def make_scheduler(opt: torch.optim.Optimizer, cfg: TrainConfig):
    return torch.optim.lr_scheduler.CosineAnnealingWarmRestarts(opt, T_0=cfg.restart_epochs, T_mult=cfg.restart_mult, eta_min=cfg.lr_min)


def build_model(model_cfg: ModelConfig, seed: int) -> CogniTraj:
    model = CogniTraj(model_cfg)
    ParamStore(model).initialize(seed)
    return model


def save_model(model: CogniTraj, path: str | Path, extra: dict | None = None) -> None:
    meta = {"model": asdict(model.cfg), **(extra or {})}
    save_checkpoint(path, ParamStore(model).tensors(), meta)


def load_model(path: str | Path) -> tuple[CogniTraj, dict]:
    tensors, meta = load_checkpoint(path)
    model = CogniTraj(ModelConfig.from_dict(meta["model"]))
    ParamStore(model).load(tensors)
    return model, meta


def train(
    items: Sequence[WindowFeatures],
    model_cfg: ModelConfig = ModelConfig(),
    cfg: TrainConfig = TrainConfig(),
    checkpoint: str | Path | None = None,
    metrics_path: str | Path | None = None,
) -> TrainResult:
    if not items:
        raise ValueError("empty training set")
    if any(it.future is None for it in items):
        raise ValueError("every training window needs full future ground truth")
    torch.set_num_threads(cfg.threads)
    torch.use_deterministic_algorithms(True)
    model = build_model(model_cfg, cfg.seed)
    model.scaler.fit(items)
    opt = torch.optim.Adam([p for p in model.parameters() if p.requires_grad], lr=cfg.lr_max)
    sched = make_scheduler(opt, cfg)
    gen = torch.Generator().manual_seed(cfg.seed)

    result = TrainResult(model)
    last_good = copy.deepcopy(model.state_dict())
    for epoch in range(cfg.epochs):
        model.train()
        order = torch.randperm(len(items), generator=gen).tolist()
        lr = opt.param_groups[0]["lr"]
        sums = {"total": 0.0, "rmse": 0.0, "nll": 0.0}
        for i in range(0, len(order), cfg.batch_size):
            key = tuple(order[i:i + cfg.batch_size])
            batch = collate([items[j] for j in key])
            out = model(batch)
            rep = loss(out, batch.future, model.task_weights.log_vars)
            if not torch.isfinite(rep.total):
                if checkpoint is not None:
                    model.load_state_dict(last_good)
                    save_model(model, checkpoint, {"epoch": epoch, "aborted": True})
                raise TrainingDiverged(epoch, str(checkpoint) if checkpoint else None)
            opt.zero_grad()
            backward(rep.total)
            opt.step()
            n = len(key)
            sums["total"] += float(rep.total.detach()) * n
            sums["rmse"] += float(rep.rmse_term.detach()) * n
            sums["nll"] += float(rep.nll_term.detach()) * n
        sched.step()
        last_good = copy.deepcopy(model.state_dict())
        row = {"epoch": epoch, **{k: v / len(items) for k, v in sums.items()}, "lr": lr}
        result.history.append(row)
        log.debug("epoch %d total %.6f rmse %.4f nll %.4f lr %.2e", epoch, row["total"], row["rmse"], row["nll"], lr)

    if checkpoint is not None:
        save_model(model, checkpoint, {"epochs": cfg.epochs, "train": asdict(cfg)})
    if metrics_path is not None:
        write_metrics(result.history, metrics_path)
    return result


def write_metrics(history: list[dict], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "total", "rmse", "nll", "lr"])
        for h in history:
            w.writerow([h["epoch"], repr(h["total"]), repr(h["rmse"]), repr(h["nll"]), repr(h["lr"])])
