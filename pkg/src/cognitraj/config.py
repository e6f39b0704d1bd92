"""Run configuration: one flat record of every tunable, loaded from JSON."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .graph import CentralityConfig
from .model import ModelConfig
from .safety import SafetyConfig
from .synth import KINDS
from .train import TrainConfig

MISSING_VARIANTS = ("complete", "drop3", "drop5", "drop8")


class ConfigError(ValueError):
    def __init__(self, problems: dict[str, str]):
        super().__init__("; ".join(f"{k}: {v}" for k, v in problems.items()))
        self.problems = problems


@dataclass
class RunConfig:
    # paths
    input_csv: str = ""
    windows: str = "windows.jsonl"
    checkpoint: str = "model.ckpt"
    out: str = ""
    window_id: str = ""
    # scene data
    dt: float = 0.1
    t_h: float = 3.0
    t_f: float = 5.0
    stride: int = 0  # frames; 0 means non-overlapping windows
    target_policy: str = "all"
    # safety
    ttc_star: float = 3.0
    tau_sc: float = 0.1
    # behavior graph
    r: float = 25.0
    power_K: int = 32
    katz_alpha: float = 0.0  # 0 selects 0.5 / lambda_max per frame
    katz_beta: float = 0.0
    katz_K: int = 256
    # model
    width: int = 64
    heads: int = 4
    modes: int = 6
    gcn_layers: int = 2
    gn_groups: int = 4
    use_qsa: bool = True
    use_dbp: bool = True
    use_priority: bool = True
    use_interaction: bool = True
    multimodal: bool = True
    # training
    epochs: int = 200
    batch_size: int = 64
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    restart_epochs: int = 50
    fraction: float = 1.0
    seed: int = 0
    threads: int = 1
    # evaluation / synthesis
    variant: str = "complete"
    synth_n: int = 32
    synth_kind: str = "constant-velocity"

    def problems(self) -> dict[str, str]:
        p: dict[str, str] = {}
        for name in ("dt", "t_h", "t_f", "r", "ttc_star", "tau_sc", "lr_max", "lr_min"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                p[name] = "must be a positive number"
        for name in ("power_K", "katz_K", "width", "heads", "modes", "gcn_layers", "gn_groups", "epochs", "batch_size", "restart_epochs", "threads", "synth_n"):
            val = getattr(self, name)
            if not (isinstance(val, int) and val >= 1):
                p[name] = "must be an integer >= 1"
        if not (isinstance(self.stride, int) and self.stride >= 0):
            p["stride"] = "must be a non-negative integer"
        if self.katz_alpha < 0:
            p["katz_alpha"] = "must be >= 0"
        if not 0 < self.fraction <= 1:
            p["fraction"] = "must lie in (0, 1]"
        if self.variant not in MISSING_VARIANTS:
            p["variant"] = f"must be one of {', '.join(MISSING_VARIANTS)}"
        if self.synth_kind not in KINDS:
            p["synth_kind"] = f"must be one of {', '.join(KINDS)}"
        if self.target_policy not in ("all", "first"):
            p["target_policy"] = "must be 'all' or 'first'"
        if "dt" not in p and "t_h" not in p and round(self.t_h / self.dt) < 15:
            p["t_h"] = "history must hold at least 15 frames so every drop variant stays interior"
        if "width" not in p and "heads" not in p and self.width % self.heads:
            p["width"] = "must be divisible by heads"
        if "width" not in p and "gn_groups" not in p and self.width % self.gn_groups:
            p["gn_groups"] = "must divide width"
        if "lr_max" not in p and "lr_min" not in p and self.lr_min > self.lr_max:
            p["lr_min"] = "must not exceed lr_max"
        return p

    def validate(self) -> "RunConfig":
        p = self.problems()
        if p:
            raise ConfigError(p)
        return self

    # ------------------------------------------------------------ views

    @property
    def t_h_frames(self) -> int:
        return int(round(self.t_h / self.dt))

    @property
    def t_f_frames(self) -> int:
        return int(round(self.t_f / self.dt))

    def safety(self) -> SafetyConfig:
        return SafetyConfig(self.ttc_star, self.tau_sc)

    def graph(self) -> CentralityConfig:
        return CentralityConfig(self.r, self.power_K, self.katz_alpha or None, self.katz_beta, self.katz_K)

    def model(self) -> ModelConfig:
        return ModelConfig(
            width=self.width,
            heads=self.heads,
            modes=self.modes,
            gcn_layers=self.gcn_layers,
            gn_groups=self.gn_groups,
            t_f_frames=self.t_f_frames,
            use_qsa=self.use_qsa,
            use_dbp=self.use_dbp,
            use_priority=self.use_priority,
            use_interaction=self.use_interaction,
            multimodal=self.multimodal,
        )

    def training(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr_max=self.lr_max,
            lr_min=self.lr_min,
            restart_epochs=self.restart_epochs,
            seed=self.seed,
            threads=self.threads,
        )

    # ------------------------------------------------------------ io

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = sorted(set(d) - set(cls.field_names()))
        if unknown:
            raise ConfigError({k: "unknown configuration key" for k in unknown})
        types = {f.name: f.type for f in fields(cls)}
        clean = {}
        bad = {}
        for k, v in d.items():
            want = types[k]
            if want == "bool" and not isinstance(v, bool):
                bad[k] = "must be true or false"
            elif want == "int" and (isinstance(v, bool) or not isinstance(v, int)):
                bad[k] = "must be an integer"
            elif want == "float" and (isinstance(v, bool) or not isinstance(v, (int, float))):
                bad[k] = "must be a number"
            elif want == "str" and not isinstance(v, str):
                bad[k] = "must be a string"
            else:
                clean[k] = float(v) if want == "float" else v
        if bad:
            raise ConfigError(bad)
        return cls(**clean)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        with Path(path).open(encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
