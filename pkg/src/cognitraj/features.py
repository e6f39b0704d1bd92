"""Turn a repaired SceneWindow into the arrays the encoders consume.

Neighbors are put into a canonical order that depends only on their
kinematics, never on agent ids, so relabeling agents reproduces the same
floating-point reductions downstream.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .graph import CentralityConfig, behavior_indices, build_graph, centrality_series
from .safety import SafetyConfig, risk_features_all
from .scene import SceneWindow


@dataclass
class WindowFeatures:
    window_id: str
    q: np.ndarray  # (t_h, n, 5) per-agent safety criteria, target at node 0
    adj: np.ndarray  # (t_h, n, n) distance-weighted proximity graphs
    behavior: np.ndarray  # (t_h, 18) target BMI | BTI | BCI
    s: np.ndarray  # (t_h, 6) target frame-to-frame deltas of p, v, a
    p: np.ndarray  # (t_h, 6) target minus nearest neighbor p, v, a
    origin: np.ndarray  # (2,) target position at the current frame
    future: np.ndarray | None  # (t_f, 2) target future relative to origin

    @property
    def n_agents(self) -> int:
        return self.q.shape[1]


def canonical_order(window: SceneWindow) -> list[int]:
    """Target first, then neighbors sorted by their full history values."""
    t_idx = window.target_index
    hist = [window.history(tr) for tr in window.agents]
    origin = hist[t_idx].p[-1]

    def key(i: int):
        h = hist[i]
        d = float(np.hypot(*(h.p[-1] - origin)))
        return (d, tuple(np.concatenate([h.p.ravel(), h.v.ravel(), h.a.ravel()])))

    others = sorted((i for i in range(window.n_agents) if i != t_idx), key=key)
    return [t_idx, *others]


def reorder(window: SceneWindow, order: list[int]) -> SceneWindow:
    return replace(window, agents=[window.agents[i] for i in order], target_index=0)


def compute_priority_vectors(window: SceneWindow) -> tuple[np.ndarray, np.ndarray]:
    """(S, P) for the target, each (t_h, 6) ordered as (p, v, a) x (x, y).

    S[0] is zero because the first history frame has no predecessor. P takes
    the neighbor nearest to the target at each frame; zero when alone.
    """
    if window.t_h_frames < 2:
        raise ValueError("priority vectors need at least 2 history frames")
    if window.gaps:
        raise ValueError("window has unrepaired gaps")
    hist = [window.history(tr) for tr in window.agents]
    tgt = hist[window.target_index]
    kin = np.concatenate([tgt.p, tgt.v, tgt.a], axis=1)
    S = np.zeros_like(kin)
    S[1:] = kin[1:] - kin[:-1]
    P = np.zeros_like(kin)
    others = [h for i, h in enumerate(hist) if i != window.target_index]
    if others:
        other_kin = np.stack([np.concatenate([h.p, h.v, h.a], axis=1) for h in others])  # (m, T, 6)
        rel = kin[None] - other_kin
        dist = np.hypot(rel[..., 0], rel[..., 1])  # (m, T)
        for k in range(kin.shape[0]):
            j = min(range(len(others)), key=lambda j: (dist[j, k], tuple(rel[j, k])))
            P[k] = rel[j, k]
    return S, P


def featurize(
    window: SceneWindow,
    safety: SafetyConfig = SafetyConfig(),
    graph: CentralityConfig = CentralityConfig(),
) -> WindowFeatures:
    if window.gaps:
        raise ValueError("window has unrepaired gaps; call interpolate_gaps first")
    w = reorder(window, canonical_order(window))
    q = risk_features_all(w, safety).transpose(1, 0, 2)
    pos = w.history_array("p").transpose(1, 0, 2)  # (T, n, 2)
    adj = np.stack([build_graph(frame, graph.r).adjacency for frame in pos])
    cent = centrality_series(pos, graph)[:, 0, :]
    behavior = behavior_indices(cent, w.dt).stacked()
    S, P = compute_priority_vectors(w)
    tgt = w.target
    origin = w.history(tgt).p[-1].copy()
    fut = w.future(tgt)
    future = fut.p - origin if len(fut) == w.t_f_frames else None
    return WindowFeatures(window.window_id, q, adj, behavior, S, P, origin, future)
