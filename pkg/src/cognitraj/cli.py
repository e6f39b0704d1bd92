"""``cognitraj`` command line: synth, ingest, featurize, train, eval, predict.

Every ``--flag`` other than ``--config`` is generated from a RunConfig field,
so flags and config keys are the same set. Precedence: defaults < config file
< flags. Failures print one JSON line on stderr and exit non-zero.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig

log = logging.getLogger("cognitraj")

COMMANDS = ("synth", "ingest", "featurize", "train", "eval", "predict")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cognitraj", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="JSON file with RunConfig keys")
        for f in fields(RunConfig):
            if f.type == "bool":
                p.add_argument(_flag(f.name), dest=f.name, action=argparse.BooleanOptionalAction, default=None)
            else:
                kind = {"int": int, "float": float, "str": str}[f.type]
                p.add_argument(_flag(f.name), dest=f.name, type=kind, default=None)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    base = RunConfig.load(args.config).to_dict() if args.config else RunConfig().to_dict()
    for name in RunConfig.field_names():
        val = getattr(args, name)
        if val is not None:
            base[name] = val
    return RunConfig.from_dict(base).validate()


# ---------------------------------------------------------------- commands


def cmd_synth(cfg: RunConfig) -> dict:
    from .scene import save_windows
    from .synth import synth_windows

    windows = synth_windows(cfg.synth_n, cfg.synth_kind, cfg.seed, cfg.t_h, cfg.t_f, cfg.dt)
    out = cfg.out or cfg.windows
    save_windows(windows, out)
    return {"windows": len(windows), "kind": cfg.synth_kind, "out": out}


def cmd_ingest(cfg: RunConfig) -> dict:
    from .scene import WindowReport, ingest_csv, make_windows, save_windows

    if not cfg.input_csv:
        raise ConfigError({"input_csv": "required for ingest"})
    tracks = ingest_csv(cfg.input_csv, cfg.dt)
    report = WindowReport()
    windows = make_windows(tracks, cfg.t_h, cfg.t_f, cfg.target_policy, cfg.stride or None, report)
    out = cfg.out or cfg.windows
    save_windows(windows, out)
    return {"tracks": len(tracks), "windows": len(windows), "skipped_short": report.skipped_short, "out": out}


def cmd_featurize(cfg: RunConfig) -> dict:
    from .graph import CENTRALITY_NAMES, behavior_indices, centrality_series
    from .safety import risk_features_all
    from .scene import interpolate_gaps, load_windows

    windows = load_windows(cfg.windows)
    out = cfg.out or str(Path(cfg.windows).with_suffix(".features.jsonl"))
    safety, graph = cfg.safety(), cfg.graph()
    n = 0
    with open(out, "w", encoding="utf-8") as fh:
        for w in windows:
            w = interpolate_gaps(w)
            risk = risk_features_all(w, safety)
            pos = w.history_array("p").transpose(1, 0, 2)
            cent = centrality_series(pos, graph)
            for a_idx, tr in enumerate(w.agents):
                idx = behavior_indices(cent[:, a_idx], w.dt)
                for k in range(w.t_h_frames):
                    rec = {
                        "window_id": w.window_id,
                        "agent_id": tr.agent_id,
                        "frame": w.start_frame + k,
                        "ttc": float(risk[a_idx, k, 0]),
                        "tet": float(risk[a_idx, k, 1]),
                        "tit": float(risk[a_idx, k, 2]),
                        "spr": float(risk[a_idx, k, 3]),
                        "drv": float(risk[a_idx, k, 4]),
                    }
                    for c, name in enumerate(CENTRALITY_NAMES):
                        rec[name] = float(cent[k, a_idx, c])
                        rec[f"bmi_{name}"] = float(idx.bmi[k, c])
                        rec[f"bti_{name}"] = float(idx.bti[k, c])
                        rec[f"bci_{name}"] = float(idx.bci[k, c])
                    fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
                    n += 1
    return {"records": n, "out": out}


def _featurize_all(windows, cfg: RunConfig):
    from .features import featurize

    return [featurize(w, cfg.safety(), cfg.graph()) for w in windows]


def cmd_train(cfg: RunConfig) -> dict:
    from .scene import interpolate_gaps, load_windows, subsample_training
    from .train import train

    windows = [interpolate_gaps(w) for w in load_windows(cfg.windows)]
    windows = [w for w in windows if w.has_full_future()]
    windows = subsample_training(windows, cfg.fraction, cfg.seed)
    if not windows:
        raise ValueError("no training windows with full future ground truth")
    items = _featurize_all(windows, cfg)
    ckpt = cfg.out or cfg.checkpoint
    metrics = str(Path(ckpt).with_suffix(".metrics.csv"))
    result = train(items, cfg.model(), cfg.training(), checkpoint=ckpt, metrics_path=metrics)
    # training only stores model metadata; append the run config for eval
    from .nn.checkpoint import load_checkpoint, save_checkpoint

    tensors, meta = load_checkpoint(ckpt)
    meta["run"] = cfg.to_dict()
    save_checkpoint(ckpt, tensors, meta)
    return {"windows": len(items), "final_loss": result.losses[-1], "checkpoint": ckpt, "metrics": metrics}


def cmd_eval(cfg: RunConfig) -> dict:
    from .evaluation import EvalReport, eval_missing
    from .scene import load_windows
    from .train import load_model

    model, meta = load_model(cfg.checkpoint)
    windows = [w for w in load_windows(cfg.windows) if w.has_full_future()]
    report = eval_missing(model, windows, cfg.variant, cfg.safety(), cfg.graph())
    trained_fraction = meta.get("run", {}).get("fraction", 1.0)
    if cfg.variant == "complete" and trained_fraction == 0.25:
        report = EvalReport("train25", report.horizons_s, report.rmse, report.rmse_best_of_m, report.n_windows)
    if cfg.out:
        report.write(cfg.out)
    else:
        sys.stdout.write(report.to_csv())
    return {"variant": report.variant, "n_windows": report.n_windows, "out": cfg.out or "-"}


def cmd_predict(cfg: RunConfig) -> dict:
    from .evaluation import emit_plot_data
    from .features import featurize
    from .model import predict
    from .scene import interpolate_gaps, load_windows
    from .train import load_model

    model, _ = load_model(cfg.checkpoint)
    windows = load_windows(cfg.windows)
    matches = [w for w in windows if w.window_id == cfg.window_id] if cfg.window_id else windows[:1]
    if not matches:
        raise ConfigError({"window_id": f"no window {cfg.window_id!r} in {cfg.windows}"})
    window = interpolate_gaps(matches[0])
    (pred,) = predict(model, [featurize(window, cfg.safety(), cfg.graph())])
    result = {
        "window_id": window.window_id,
        "confidences": pred.confidences.tolist(),
        "means": np.round(pred.means, 6).tolist(),
    }
    if cfg.out:
        result["files"] = [str(p) for p in emit_plot_data(window, pred, cfg.out, safety=cfg.safety())]
    return result


HANDLERS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
}


def _error_line(kind: str, message: str, fields_: dict | None = None) -> str:
    payload = {"error": kind, "message": message}
    if fields_:
        payload["fields"] = fields_
    return json.dumps(payload, sort_keys=True)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("COGNITRAJ_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        import torch

        torch.set_num_threads(cfg.threads)
        summary = HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(_error_line("config", str(exc), exc.problems), file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(_error_line(type(exc).__name__, str(exc)), file=sys.stderr)
        return 1
    if args.command != "eval" or summary.get("out") != "-":
        print(json.dumps(summary, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
