"""Trajectory ingestion, scene windowing and missing-frame handling.

Tracks are stored column-wise as numpy arrays (one row per frame) rather than
as lists of per-frame objects; :class:`AgentState` is the per-frame view.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("agent_id", "frame", "x", "y")
VELOCITY_COLUMNS = ("vx", "vy")
ACCEL_COLUMNS = ("ax", "ay")

# Offsets before the current frame t (inclusive ranges). drop5 is t-12..t-8;
# drop3 and drop8 share its midpoint.
DROP_OFFSETS = {
    "drop3": tuple(range(9, 12)),
    "drop5": tuple(range(8, 13)),
    "drop8": tuple(range(7, 15)),
}


class TrackError(ValueError):
    pass


class CSVParseError(TrackError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MissingFrameError(ValueError):
    pass


@dataclass(frozen=True)
class AgentState:
    agent_id: int
    frame: int
    p: tuple[float, float]
    v: tuple[float, float]
    a: tuple[float, float]

    def __post_init__(self):
        if self.frame < 0:
            raise TrackError(f"negative frame {self.frame}")
        if not all(math.isfinite(c) for c in (*self.p, *self.v, *self.a)):
            raise TrackError(f"non-finite state for agent {self.agent_id} frame {self.frame}")


@dataclass
class Track:
    """One agent sampled at a fixed interval ``dt``.

    ``p``, ``v`` and ``a`` have shape (n, 2). Rows may be NaN only inside a
    :class:`SceneWindow` that records them as gaps.
    """

    agent_id: int
    frames: np.ndarray
    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    dt: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64)
        self.p = np.asarray(self.p, dtype=np.float64).reshape(-1, 2)
        self.v = np.asarray(self.v, dtype=np.float64).reshape(-1, 2)
        self.a = np.asarray(self.a, dtype=np.float64).reshape(-1, 2)
        n = len(self.frames)
        if not (len(self.p) == len(self.v) == len(self.a) == n):
            raise TrackError(f"agent {self.agent_id}: column lengths differ")
        if not self.dt > 0:
            raise TrackError(f"agent {self.agent_id}: dt must be positive")
        if n and self.frames[0] < 0:
            raise TrackError(f"agent {self.agent_id}: negative frame index")
        if n > 1 and np.any(np.diff(self.frames) != 1):
            raise TrackError(f"agent {self.agent_id}: frames must increase by exactly 1")

    def __len__(self):
        return len(self.frames)

    @property
    def first_frame(self) -> int:
        return int(self.frames[0])

    @property
    def last_frame(self) -> int:
        return int(self.frames[-1])

    def state(self, i: int) -> AgentState:
        return AgentState(
            self.agent_id,
            int(self.frames[i]),
            tuple(self.p[i]),
            tuple(self.v[i]),
            tuple(self.a[i]),
        )

    def states(self) -> Iterator[AgentState]:
        for i in range(len(self)):
            yield self.state(i)

    def clip(self, start: int, stop: int) -> "Track":
        """Rows with ``start <= frame < stop``."""
        sel = (self.frames >= start) & (self.frames < stop)
        return Track(self.agent_id, self.frames[sel], self.p[sel], self.v[sel], self.a[sel], self.dt)

    def copy(self) -> "Track":
        return Track(self.agent_id, self.frames.copy(), self.p.copy(), self.v.copy(), self.a.copy(), self.dt)

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "frames": self.frames.tolist(),
            "p": _nan_to_none(self.p),
            "v": _nan_to_none(self.v),
            "a": _nan_to_none(self.a),
        }

    @classmethod
    def from_dict(cls, d: dict, dt: float) -> "Track":
        return cls(d["agent_id"], d["frames"], _none_to_nan(d["p"]), _none_to_nan(d["v"]), _none_to_nan(d["a"]), dt)


def _nan_to_none(arr: np.ndarray) -> list:
    return [[None if math.isnan(c) else float(c) for c in row] for row in arr]


def _none_to_nan(rows) -> np.ndarray:
    return np.array([[np.nan if c is None else c for c in row] for row in rows], dtype=np.float64).reshape(-1, 2)


@dataclass(frozen=True)
class MissingSpec:
    variant: str
    dropped_frames: tuple[int, ...]  # offsets before t: frame t - k is dropped

    @classmethod
    def from_variant(cls, variant: str) -> "MissingSpec":
        try:
            return cls(variant, DROP_OFFSETS[variant])
        except KeyError:
            raise ValueError(f"unknown missing variant {variant!r}; expected one of {sorted(DROP_OFFSETS)}") from None


@dataclass
class SceneWindow:
    """A target agent plus co-present neighbors, clipped to history + future.

    ``agents[target_index]`` is the target. The current time t is the last
    history frame, ``start_frame + t_h_frames - 1``. ``gaps`` holds history
    offsets (k for frame t - k) whose rows are currently NaN.
    """

    target_index: int
    agents: list[Track]
    t_h_frames: int
    t_f_frames: int
    dt: float
    start_frame: int
    window_id: str = ""
    gaps: tuple[int, ...] = ()

    @property
    def target(self) -> Track:
        return self.agents[self.target_index]

    @property
    def current_frame(self) -> int:
        return self.start_frame + self.t_h_frames - 1

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def history(self, track: Track) -> Track:
        return track.clip(self.start_frame, self.current_frame + 1)

    def future(self, track: Track) -> Track:
        return track.clip(self.current_frame + 1, self.current_frame + 1 + self.t_f_frames)

    def history_array(self, which: str = "p") -> np.ndarray:
        """(n_agents, t_h_frames, 2) array of one kinematic quantity."""
        return np.stack([getattr(self.history(tr), which) for tr in self.agents])

    def present_history_frames(self) -> int:
        return self.t_h_frames - len(self.gaps)

    def has_full_future(self) -> bool:
        return len(self.future(self.target)) == self.t_f_frames

    def to_dict(self) -> dict:
        return {
            "window_id": self.window_id,
            "target_index": self.target_index,
            "t_h_frames": self.t_h_frames,
            "t_f_frames": self.t_f_frames,
            "dt": self.dt,
            "start_frame": self.start_frame,
            "gaps": list(self.gaps),
            "agents": [tr.to_dict() for tr in self.agents],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneWindow":
        dt = float(d["dt"])
        return cls(
            target_index=int(d["target_index"]),
            agents=[Track.from_dict(a, dt) for a in d["agents"]],
            t_h_frames=int(d["t_h_frames"]),
            t_f_frames=int(d["t_f_frames"]),
            dt=dt,
            start_frame=int(d["start_frame"]),
            window_id=d.get("window_id", ""),
            gaps=tuple(d.get("gaps", ())),
        )


# ---------------------------------------------------------------- ingestion


def finite_difference(values: np.ndarray, dt: float) -> np.ndarray:
    """Central differences inside, forward/backward at the two ends."""
    values = np.asarray(values, dtype=np.float64)
    out = np.zeros_like(values)
    n = len(values)
    if n < 2:
        return out
    out[1:-1] = (values[2:] - values[:-2]) / (2 * dt)
    out[0] = (values[1] - values[0]) / dt
    out[-1] = (values[-1] - values[-2]) / dt
    return out


def _parse_float(raw: str, line: int, col: str) -> float:
    try:
        val = float(raw)
    except (TypeError, ValueError):
        raise CSVParseError(line, f"column {col!r}: cannot parse {raw!r} as a number") from None
    if not math.isfinite(val):
        raise CSVParseError(line, f"column {col!r}: non-finite value {raw!r}")
    return val


def _parse_int(raw: str, line: int, col: str) -> int:
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise CSVParseError(line, f"column {col!r}: cannot parse {raw!r} as an integer") from None


def ingest_csv(path: str | Path, dt: float = 0.1) -> list[Track]:
    """Read ``agent_id,frame,x,y[,vx,vy,ax,ay]`` rows into one Track per agent.

    Missing velocity columns are derived from position, and missing
    acceleration columns from velocity, by finite differences.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        header = [h.strip() for h in header]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise CSVParseError(1, f"missing required columns {missing}")
        has_v = all(c in header for c in VELOCITY_COLUMNS)
        has_a = all(c in header for c in ACCEL_COLUMNS)
        idx = {c: header.index(c) for c in header}

        rows: dict[int, dict[int, tuple]] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CSVParseError(line_no, f"expected {len(header)} fields, got {len(row)}")
            agent = _parse_int(row[idx["agent_id"]], line_no, "agent_id")
            frame = _parse_int(row[idx["frame"]], line_no, "frame")
            if frame < 0:
                raise CSVParseError(line_no, f"negative frame {frame}")
            vals = [_parse_float(row[idx[c]], line_no, c) for c in ("x", "y")]
            if has_v:
                vals += [_parse_float(row[idx[c]], line_no, c) for c in VELOCITY_COLUMNS]
            if has_a:
                vals += [_parse_float(row[idx[c]], line_no, c) for c in ACCEL_COLUMNS]
            per_agent = rows.setdefault(agent, {})
            if frame in per_agent:
                raise TrackError(f"line {line_no}: duplicate row for agent {agent} frame {frame}")
            per_agent[frame] = tuple(vals)

    tracks = []
    for agent in sorted(rows):
        frames = np.array(sorted(rows[agent]), dtype=np.int64)
        if len(frames) > 1 and np.any(np.diff(frames) != 1):
            raise TrackError(f"agent {agent}: non-constant frame step")
        data = np.array([rows[agent][f] for f in frames], dtype=np.float64)
        p = data[:, 0:2]
        v = data[:, 2:4] if has_v else finite_difference(p, dt)
        a_col = 4 if has_v else 2
        a = data[:, a_col:a_col + 2] if has_a else finite_difference(v, dt)
        tracks.append(Track(agent, frames, p, v, a, dt))
    return tracks


def write_csv(tracks: Iterable[Track], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["agent_id", "frame", "x", "y", "vx", "vy", "ax", "ay"])
        for tr in tracks:
            for i in range(len(tr)):
                w.writerow([tr.agent_id, int(tr.frames[i]), *map(repr, tr.p[i]), *map(repr, tr.v[i]), *map(repr, tr.a[i])])


# ---------------------------------------------------------------- windows


@dataclass
class WindowReport:
    windows: int = 0
    skipped_short: list[int] = field(default_factory=list)


def make_windows(
    tracks: Sequence[Track],
    t_h: float = 3.0,
    t_f: float = 5.0,
    target_policy: str = "all",
    stride: int | None = None,
    report: WindowReport | None = None,
) -> list[SceneWindow]:
    """Slide (t_h + t_f)-second windows over every eligible target track.

    ``target_policy`` is ``"all"`` (every agent with full coverage becomes a
    target) or ``"first"`` (only the lowest agent id). ``stride`` is in frames
    and defaults to the window length.
    """
    if not tracks:
        return []
    dt = tracks[0].dt
    if any(not math.isclose(tr.dt, dt, rel_tol=1e-12) for tr in tracks):
        raise ValueError("all tracks must share one dt")
    h = int(round(t_h / dt))
    f = int(round(t_f / dt))
    length = h + f
    stride = stride or length
    if h < 2 or f < 1:
        raise ValueError("window needs at least 2 history and 1 future frame")
    if target_policy not in ("all", "first"):
        raise ValueError(f"unknown target policy {target_policy!r}")
    report = report if report is not None else WindowReport()

    ordered = sorted(tracks, key=lambda tr: tr.agent_id)
    targets = ordered if target_policy == "all" else ordered[:1]
    windows = []
    for target in targets:
        if len(target) < length:
            report.skipped_short.append(target.agent_id)
            continue
        start = target.first_frame
        while start + length - 1 <= target.last_frame:
            hist_end = start + h - 1
            agents = [target.clip(start, start + length)]
            for other in ordered:
                if other.agent_id == target.agent_id:
                    continue
                if other.first_frame <= start and other.last_frame >= hist_end:
                    agents.append(other.clip(start, start + length))
            windows.append(SceneWindow(0, agents, h, f, dt, start, f"{target.agent_id}@{start}"))
            start += stride
    report.windows += len(windows)
    if report.skipped_short:
        log.info("skipped %d tracks shorter than %d frames", len(report.skipped_short), length)
    return windows


def apply_missing(window: SceneWindow, spec: MissingSpec) -> SceneWindow:
    """Blank out the listed history frames for every agent."""
    offsets = sorted(set(spec.dropped_frames))
    for k in offsets:
        # first history frame is offset t_h_frames - 1; endpoints must survive
        if not 0 < k < window.t_h_frames - 1:
            raise MissingFrameError(f"offset t-{k} is not strictly inside a {window.t_h_frames}-frame history")
    t = window.current_frame
    drop = np.array([t - k for k in offsets], dtype=np.int64)
    agents = []
    for tr in window.agents:
        tr = tr.copy()
        sel = np.isin(tr.frames, drop)
        tr.p[sel] = np.nan
        tr.v[sel] = np.nan
        tr.a[sel] = np.nan
        agents.append(tr)
    gaps = tuple(sorted(set(window.gaps) | set(offsets)))
    return replace(window, agents=agents, gaps=gaps)


def _fill_linear(frames: np.ndarray, values: np.ndarray, missing: np.ndarray) -> np.ndarray:
    out = values.copy()
    known = ~missing
    for c in range(values.shape[1]):
        out[missing, c] = np.interp(frames[missing], frames[known], values[known, c])
    return out


def interpolate_gaps(window: SceneWindow) -> SceneWindow:
    """Linearly interpolate p, v, a across every recorded gap."""
    if not window.gaps:
        return window
    lo = window.start_frame
    hi = window.current_frame
    agents = []
    for tr in window.agents:
        missing = np.isnan(tr.p).any(axis=1) | np.isnan(tr.v).any(axis=1) | np.isnan(tr.a).any(axis=1)
        if not missing.any():
            agents.append(tr)
            continue
        gap_frames = tr.frames[missing]
        if gap_frames.min() <= lo or gap_frames.max() >= hi:
            raise MissingFrameError(f"agent {tr.agent_id}: gap touches the history boundary, cannot extrapolate")
        if len(tr) == 0 or tr.frames[0] > lo:
            raise MissingFrameError(f"agent {tr.agent_id}: no frame before the gap")
        tr = tr.copy()
        tr.p = _fill_linear(tr.frames, tr.p, missing)
        tr.v = _fill_linear(tr.frames, tr.v, missing)
        tr.a = _fill_linear(tr.frames, tr.a, missing)
        agents.append(tr)
    return replace(window, agents=agents, gaps=())


def subsample_training(windows: Sequence[SceneWindow], fraction: float, seed: int = 0) -> list[SceneWindow]:
    """Seeded subset of floor(fraction * N) windows, in original order."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    n = len(windows)
    if fraction == 1:
        return list(windows)
    k = math.floor(fraction * n)
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(n, size=k, replace=False))
    return [windows[i] for i in keep]


# ---------------------------------------------------------------- JSON lines


def save_windows(windows: Iterable[SceneWindow], path: str | Path) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for w in windows:
            fh.write(json.dumps(w.to_dict(), separators=(",", ":")))
            fh.write("\n")
            n += 1
    return n


def load_windows(path: str | Path) -> list[SceneWindow]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(SceneWindow.from_dict(json.loads(line)))
    return out
