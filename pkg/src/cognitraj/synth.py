"""Synthetic desk-scale highway scenes with closed-form kinematics."""
from __future__ import annotations

import numpy as np

from .scene import SceneWindow, Track, make_windows

KINDS = ("constant-velocity", "lane-change", "braking")
LANE_WIDTH = 3.5


def _cv(x0, y0, vx, vy, t):
    p = np.column_stack([x0 + vx * t, y0 + vy * t])
    v = np.column_stack([np.full_like(t, vx), np.full_like(t, vy)])
    return p, v, np.zeros_like(p)


def _lane_change(x0, y0, vx, amp, omega, phase, t):
    # lateral sinusoid around the lane centre, constant longitudinal speed
    arg = omega * t + phase
    p = np.column_stack([x0 + vx * t, y0 + amp * np.sin(arg)])
    v = np.column_stack([np.full_like(t, vx), amp * omega * np.cos(arg)])
    a = np.column_stack([np.zeros_like(t), -amp * omega**2 * np.sin(arg)])
    return p, v, a


def _braking(x0, y0, v0, decel, t):
    t_stop = v0 / decel
    tc = np.minimum(t, t_stop)
    x = x0 + v0 * tc - 0.5 * decel * tc**2
    vx = np.where(t < t_stop, v0 - decel * t, 0.0)
    ax = np.where(t < t_stop, -decel, 0.0)
    p = np.column_stack([x, np.full_like(t, y0)])
    v = np.column_stack([vx, np.zeros_like(t)])
    return p, v, np.column_stack([ax, np.zeros_like(t)])


def scene_tracks(kind: str, rng: np.random.Generator, n_frames: int = 80, dt: float = 0.1, first_id: int = 0) -> list[Track]:
    """Target (first id) plus two or three neighbors in adjacent lanes."""
    if kind not in KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; expected one of {KINDS}")
    t = np.arange(n_frames) * dt
    frames = np.arange(n_frames)
    n_neighbors = int(rng.integers(2, 4))
    lanes = [0.0, LANE_WIDTH, -LANE_WIDTH, 0.0]
    tracks = []
    for k in range(n_neighbors + 1):
        y0 = lanes[k]
        # the same-lane fourth agent runs 30-40 m ahead so nobody overlaps
        x0 = 0.0 if k == 0 else (rng.uniform(30, 40) if k == 3 else rng.uniform(-20, 20))
        speed = rng.uniform(8, 14)
        if kind == "constant-velocity":
            p, v, a = _cv(x0, y0, speed, rng.uniform(-0.2, 0.2), t)
        elif kind == "lane-change":
            p, v, a = _lane_change(x0, y0, speed, rng.uniform(0.8, 1.6), rng.uniform(0.5, 1.0), rng.uniform(0, 2 * np.pi), t)
        else:
            p, v, a = _braking(x0, y0, speed, rng.uniform(0.5, 2.0), t)
        tracks.append(Track(first_id + k, frames, p, v, a, dt))
    return tracks


def synth_windows(n: int, kind: str = "constant-velocity", seed: int = 0, t_h: float = 3.0, t_f: float = 5.0, dt: float = 0.1) -> list[SceneWindow]:
    """``n`` independent scenes, one window each with agent 0 of the scene as target."""
    rng = np.random.default_rng(seed)
    n_frames = int(round((t_h + t_f) / dt))
    out = []
    for i in range(n):
        tracks = scene_tracks(kind, rng, n_frames, dt, first_id=10 * i)
        (w,) = make_windows(tracks, t_h, t_f, target_policy="first")
        w.window_id = f"{kind}-{i}"
        out.append(w)
    return out
