"""Per-horizon RMSE scoring, missing-data test sets and plot-data emission."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .features import featurize
from .graph import CentralityConfig
from .model import CogniTraj, PredictionSet, predict
from .safety import SafetyConfig, risk_features_all
from .scene import MissingSpec, SceneWindow, apply_missing, interpolate_gaps

VARIANTS = ("complete", "drop3", "drop5", "drop8", "train25")
HORIZONS_S = (1, 2, 3, 4, 5)
REPORT_COLUMNS = ("variant", "horizon_s", "rmse_m", "rmse_best_of_m_m", "n_windows")


@dataclass
class EvalReport:
    variant: str
    horizons_s: list[float]
    rmse: list[float]
    rmse_best_of_m: list[float]
    n_windows: int

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.n_windows <= 0:
            raise ValueError("report needs at least one window")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for h, r, rb in zip(self.horizons_s, self.rmse, self.rmse_best_of_m):
            w.writerow([self.variant, repr(float(h)), repr(float(r)), repr(float(rb)), self.n_windows])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty report")
        return cls(
            variant=rows[0]["variant"],
            horizons_s=[float(r["horizon_s"]) for r in rows],
            rmse=[float(r["rmse_m"]) for r in rows],
            rmse_best_of_m=[float(r["rmse_best_of_m_m"]) for r in rows],
            n_windows=int(rows[0]["n_windows"]),
        )

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "EvalReport":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))

    def mean_rmse(self) -> float:
        return float(np.mean(self.rmse))


def horizon_index(h: float, dt: float) -> int:
    """Zero-based future row for a horizon of h seconds."""
    return int(round(h / dt)) - 1


def rmse_by_horizon(
    preds: Sequence[PredictionSet],
    truths: Sequence[np.ndarray],
    dt: float = 0.1,
    variant: str = "complete",
    horizons: Sequence[float] = HORIZONS_S,
) -> EvalReport:
    """RMSE of the most likely mode at each horizon frame; best-of-M alongside.

    ``truths`` are absolute future positions, (t_f, 2) per window.
    """
    if len(preds) == 0:
        raise ValueError("nothing to score")
    if len(preds) != len(truths):
        raise ValueError("predictions and ground truth are not aligned")
    t_f = preds[0].means.shape[1]
    hs = [h for h in horizons if 0 <= horizon_index(h, dt) < t_f]
    idx = np.array([horizon_index(h, dt) for h in hs])
    top = np.stack([p.most_likely()[idx] for p in preds])  # (N, H, 2)
    truth = np.stack([np.asarray(t)[idx] for t in truths])
    err_top = np.sum((top - truth) ** 2, axis=-1)
    all_modes = np.stack([p.means[:, idx] for p in preds], axis=0) if len({p.n_modes for p in preds}) == 1 else None
    if all_modes is not None:
        err_best = np.min(np.sum((all_modes - truth[:, None]) ** 2, axis=-1), axis=1)
    else:
        err_best = np.stack([np.min(np.sum((p.means[:, idx] - t[None]) ** 2, axis=-1), axis=0) for p, t in zip(preds, truth)])
    return EvalReport(
        variant=variant,
        horizons_s=[float(h) for h in hs],
        rmse=np.sqrt(err_top.mean(axis=0)).tolist(),
        rmse_best_of_m=np.sqrt(err_best.mean(axis=0)).tolist(),
        n_windows=len(preds),
    )


def prepare(window: SceneWindow, variant: str = "complete") -> SceneWindow:
    if variant in ("complete", "train25"):
        return window
    return interpolate_gaps(apply_missing(window, MissingSpec.from_variant(variant)))


def eval_missing(
    model: CogniTraj,
    windows: Sequence[SceneWindow],
    variant: str = "complete",
    safety: SafetyConfig = SafetyConfig(),
    graph: CentralityConfig = CentralityConfig(),
) -> EvalReport:
    """Drop + interpolate (for drop variants), featurize, predict, score."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if not windows:
        raise ValueError("nothing to evaluate")
    items = [featurize(prepare(w, variant), safety, graph) for w in windows]
    preds = predict(model, items)
    truths = [it.origin + it.future for it in items]
    return rmse_by_horizon(preds, truths, windows[0].dt, variant)


# ---------------------------------------------------------------- plot data


def emit_plot_data(window: SceneWindow, pred: PredictionSet, out_dir: str | Path, svg: bool = True, safety: SafetyConfig = SafetyConfig()) -> list[Path]:
    """Per-window CSV of every agent's frames, predicted modes and risk heat.

    Rows: one ``track`` row per agent per frame (history and ground-truth
    future), then one ``mode`` row per mode per future frame.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = (window.window_id or "window").replace("/", "_").replace("@", "_")
    risk = risk_features_all(window, safety)  # (n, t_h, 5)
    t = window.current_frame
    csv_path = out_dir / f"{stem}.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "agent_id", "mode", "frame", "x", "y", "confidence", "spr", "drv"])
        for a_idx, tr in enumerate(window.agents):
            for i in range(len(tr)):
                frame = int(tr.frames[i])
                k = frame - window.start_frame
                spr = drv = ""
                if 0 <= k < window.t_h_frames:
                    spr, drv = repr(float(risk[a_idx, k, 3])), repr(float(risk[a_idx, k, 4]))
                w.writerow(["track", tr.agent_id, "", frame, repr(float(tr.p[i, 0])), repr(float(tr.p[i, 1])), "", spr, drv])
        for m in range(pred.n_modes):
            for i in range(pred.means.shape[1]):
                w.writerow(["mode", window.target.agent_id, m, t + 1 + i, repr(float(pred.means[m, i, 0])), repr(float(pred.means[m, i, 1])), repr(float(pred.confidences[m])), "", ""])
    paths = [csv_path]
    if svg:
        svg_path = out_dir / f"{stem}.svg"
        svg_path.write_text(_svg(window, pred), encoding="utf-8")
        paths.append(svg_path)
    return paths


def _svg(window: SceneWindow, pred: PredictionSet, size: int = 600) -> str:
    pts = [tr.p for tr in window.agents] + [pred.means.reshape(-1, 2)]
    allp = np.concatenate([p[np.isfinite(p).all(axis=1)] for p in pts])
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-6))
    pad = 20

    def xy(p):
        return f"{pad + (p[0] - lo[0]) / span * (size - 2 * pad):.3f},{size - pad - (p[1] - lo[1]) / span * (size - 2 * pad):.3f}"

    def line(points, color, width=1.5, opacity=1.0):
        pts = " ".join(xy(p) for p in points if np.isfinite(p).all())
        return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}" stroke-opacity="{opacity:.3f}"/>'

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">']
    parts.append(f"<title>{escape(window.window_id or 'window')}</title>")
    for a_idx, tr in enumerate(window.agents):
        hist, fut = window.history(tr), window.future(tr)
        color = "#c0392b" if a_idx == window.target_index else "#7f8c8d"
        parts.append(line(hist.p, color, 2.0))
        if len(fut):
            parts.append(line(fut.p, "#27ae60", 1.5))
    for m in range(pred.n_modes):
        parts.append(line(pred.means[m], "#2980b9", 1.0, 0.2 + 0.8 * float(pred.confidences[m])))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report.__dict__, sort_keys=True)


def report_from_json(text: str) -> EvalReport:
    return EvalReport(**json.loads(text))
