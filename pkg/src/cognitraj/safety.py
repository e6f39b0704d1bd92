"""Surrogate safety measures: TTC, TET, TIT and the SPR/DRV risk tendency pair.

Scalar functions take one agent pair; the ``*_batch`` variants operate on
arrays of relative kinematics with shape (..., 2) and are what the
featurization path uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scene import SceneWindow


class CollisionStateUndefined(ValueError):
    """Raised when two agents share a position, so TTC has no direction."""


class _NoApproach:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NoApproach"

    def __reduce__(self):
        return (_NoApproach, ())


NoApproach = _NoApproach()


@dataclass(frozen=True)
class SafetyConfig:
    ttc_star: float = 3.0
    tau_sc: float = 0.1

    def __post_init__(self):
        if not (self.ttc_star > 0 and self.tau_sc > 0):
            raise ValueError("ttc_star and tau_sc must be positive")

    @property
    def no_approach_value(self) -> float:
        """Numeric stand-in for NoApproach when a bounded input is needed."""
        return self.ttc_star + 1.0


@dataclass(frozen=True)
class PairKinematics:
    dp: tuple[float, float]
    dv: tuple[float, float]
    da: tuple[float, float] = (0.0, 0.0)

    @classmethod
    def between(cls, p_i, v_i, a_i, p_j, v_j, a_j) -> "PairKinematics":
        """Relative state of agent i with respect to agent j (i minus j)."""
        sub = lambda x, y: (float(x[0] - y[0]), float(x[1] - y[1]))  # noqa: E731
        return cls(sub(p_i, p_j), sub(v_i, v_j), sub(a_i, a_j))

    def swapped(self) -> "PairKinematics":
        neg = lambda x: (-x[0], -x[1])  # noqa: E731
        return PairKinematics(neg(self.dp), neg(self.dv), neg(self.da))


@dataclass
class RiskFeatures:
    """Per-frame features of one agent; tet and tit are running totals."""

    ttc: list
    tet: np.ndarray
    tit: np.ndarray
    spr: np.ndarray
    drv: np.ndarray

    def as_array(self, cfg: SafetyConfig) -> np.ndarray:
        """(frames, 5) numeric matrix with NoApproach mapped to TTC* + 1."""
        ttc = np.array([cfg.no_approach_value if t is NoApproach else t for t in self.ttc], dtype=np.float64)
        return np.column_stack([ttc, self.tet, self.tit, self.spr, self.drv])


# ---------------------------------------------------------------- scalar


def ttc(pair: PairKinematics):
    dx, dy = pair.dp
    d = math.hypot(dx, dy)
    if d == 0:
        raise CollisionStateUndefined("coincident positions, TTC undefined")
    d_dot = (dx * pair.dv[0] + dy * pair.dv[1]) / d
    if d_dot >= 0:
        return NoApproach
    return -d / d_dot


def _is_critical(value, cfg: SafetyConfig) -> bool:
    return value is not NoApproach and 0 <= value <= cfg.ttc_star


def tet(ttc_series: Sequence, cfg: SafetyConfig = SafetyConfig()) -> float:
    if len(ttc_series) == 0:
        raise ValueError("empty TTC series")
    return cfg.tau_sc * sum(1 for x in ttc_series if _is_critical(x, cfg))


def tit(ttc_series: Sequence, cfg: SafetyConfig = SafetyConfig()) -> float:
    if len(ttc_series) == 0:
        raise ValueError("empty TTC series")
    return sum((cfg.ttc_star - x) * cfg.tau_sc for x in ttc_series if _is_critical(x, cfg))


def _closing_proxy(rel: tuple[float, float], dp: tuple[float, float]) -> float:
    norm2 = rel[0] * rel[0] + rel[1] * rel[1]
    if norm2 == 0:
        return 0.0
    return -(rel[0] * dp[0] + rel[1] * dp[1]) / norm2


def spr(pair: PairKinematics) -> float:
    q = max(_closing_proxy(pair.dv, pair.dp), 0.0)
    return math.exp(-q) if q > 0 else 0.0


def drv(pair: PairKinematics) -> float:
    q_dot = _closing_proxy(pair.da, pair.dp)
    return math.exp(-q_dot) if q_dot > 0 else 0.0


# ---------------------------------------------------------------- vectorized


def ttc_batch(dp: np.ndarray, dv: np.ndarray, cfg: SafetyConfig | None = None) -> np.ndarray:
    """TTC over arrays; NoApproach is ``inf`` (or TTC* + 1 when cfg is given)."""
    dp = np.asarray(dp, dtype=np.float64)
    dv = np.asarray(dv, dtype=np.float64)
    d = np.hypot(dp[..., 0], dp[..., 1])
    if np.any(d == 0):
        raise CollisionStateUndefined("coincident positions, TTC undefined")
    d_dot = (dp[..., 0] * dv[..., 0] + dp[..., 1] * dv[..., 1]) / d
    closing = d_dot < 0
    out = np.full(d.shape, np.inf)
    np.divide(-d, d_dot, out=out, where=closing)
    if cfg is not None:
        out[~closing] = cfg.no_approach_value
    return out


def _proxy_batch(rel: np.ndarray, dp: np.ndarray) -> np.ndarray:
    norm2 = rel[..., 0] * rel[..., 0] + rel[..., 1] * rel[..., 1]
    num = -(rel[..., 0] * dp[..., 0] + rel[..., 1] * dp[..., 1])
    out = np.zeros(norm2.shape)
    np.divide(num, norm2, out=out, where=norm2 != 0)
    return out


def spr_batch(dp: np.ndarray, dv: np.ndarray) -> np.ndarray:
    q = np.maximum(_proxy_batch(np.asarray(dv, float), np.asarray(dp, float)), 0.0)
    return np.where(q > 0, np.exp(-q), 0.0)


def drv_batch(dp: np.ndarray, da: np.ndarray) -> np.ndarray:
    q_dot = _proxy_batch(np.asarray(da, float), np.asarray(dp, float))
    return np.where(q_dot > 0, np.exp(-np.where(q_dot > 0, q_dot, 0.0)), 0.0)


def critical_mask(ttc_values: np.ndarray, cfg: SafetyConfig) -> np.ndarray:
    return (ttc_values >= 0) & (ttc_values <= cfg.ttc_star)


def tet_batch(ttc_values: np.ndarray, cfg: SafetyConfig, axis: int = -1) -> np.ndarray:
    """TET along ``axis`` of an array where non-approaching frames are inf."""
    return cfg.tau_sc * critical_mask(ttc_values, cfg).sum(axis=axis)


def tit_batch(ttc_values: np.ndarray, cfg: SafetyConfig, axis: int = -1) -> np.ndarray:
    crit = critical_mask(ttc_values, cfg)
    return (np.where(crit, cfg.ttc_star - np.where(crit, ttc_values, 0.0), 0.0) * cfg.tau_sc).sum(axis=axis)


# ---------------------------------------------------------------- per window


def _most_critical(ttc_row: np.ndarray, spr_row: np.ndarray, drv_row: np.ndarray) -> int:
    # ties on TTC resolved by the larger SPR, then DRV, so the choice never
    # depends on how neighbors happen to be ordered
    keys = sorted(range(len(ttc_row)), key=lambda j: (ttc_row[j], -spr_row[j], -drv_row[j]))
    return keys[0]


def pairwise_frame(p: np.ndarray, v: np.ndarray, a: np.ndarray):
    """All-pairs TTC (inf = NoApproach), SPR and DRV at one frame.

    Inputs have shape (n, 2); outputs (n, n) with a meaningless diagonal.
    """
    dp = p[:, None, :] - p[None, :, :]
    dv = v[:, None, :] - v[None, :, :]
    da = a[:, None, :] - a[None, :, :]
    n = len(p)
    off = ~np.eye(n, dtype=bool)
    t = np.full((n, n), np.inf)
    t[off] = ttc_batch(dp[off], dv[off])
    s = np.zeros((n, n))
    s[off] = spr_batch(dp[off], dv[off])
    r = np.zeros((n, n))
    r[off] = drv_batch(dp[off], da[off])
    return t, s, r


def _risk_arrays(window: SceneWindow, cfg: SafetyConfig):
    if window.gaps:
        raise ValueError("window has unrepaired gaps")
    p = window.history_array("p")
    v = window.history_array("v")
    a = window.history_array("a")
    n, frames = p.shape[:2]
    ttc_sel = np.full((n, frames), np.inf)
    spr_sel = np.zeros((n, frames))
    drv_sel = np.zeros((n, frames))
    if n > 1:
        for k in range(frames):
            t, s, r = pairwise_frame(p[:, k], v[:, k], a[:, k])
            for i in range(n):
                others = [j for j in range(n) if j != i]
                j = others[_most_critical(t[i, others], s[i, others], r[i, others])]
                ttc_sel[i, k], spr_sel[i, k], drv_sel[i, k] = t[i, j], s[i, j], r[i, j]
    crit = critical_mask(ttc_sel, cfg)
    tet_run = np.cumsum(crit, axis=1) * cfg.tau_sc
    tit_run = np.cumsum(np.where(crit, (cfg.ttc_star - np.where(crit, ttc_sel, 0.0)) * cfg.tau_sc, 0.0), axis=1)
    return ttc_sel, tet_run, tit_run, spr_sel, drv_sel


def risk_features_all(window: SceneWindow, cfg: SafetyConfig = SafetyConfig()) -> np.ndarray:
    """(n_agents, t_h_frames, 5) features for every agent in the window.

    Columns: TTC (NoApproach -> TTC* + 1), running TET, running TIT, SPR, DRV,
    each taken from the neighbor with the smallest TTC at that frame.
    """
    ttc_sel, tet_run, tit_run, spr_sel, drv_sel = _risk_arrays(window, cfg)
    ttc_num = np.where(np.isinf(ttc_sel), cfg.no_approach_value, ttc_sel)
    return np.stack([ttc_num, tet_run, tit_run, spr_sel, drv_sel], axis=-1)


def risk_features(window: SceneWindow, agent: int = 0, cfg: SafetyConfig = SafetyConfig()) -> RiskFeatures:
    """Per-frame risk features of one agent (index into ``window.agents``)."""
    ttc_sel, tet_run, tit_run, spr_sel, drv_sel = (x[agent] for x in _risk_arrays(window, cfg))
    ttc_list = [NoApproach if math.isinf(x) else float(x) for x in ttc_sel]
    return RiskFeatures(ttc_list, tet_run, tit_run, spr_sel, drv_sel)
