import csv
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from cognitraj.evaluation import (
    EvalReport,
    emit_plot_data,
    eval_missing,
    horizon_index,
    report_from_json,
    report_to_json,
    rmse_by_horizon,
)
from cognitraj.model import ModelConfig, PredictionSet
from cognitraj.nn.layers import ParamStore
from cognitraj.model import CogniTraj
from cognitraj.synth import synth_windows

pytestmark = pytest.mark.filterwarnings("ignore::cognitraj.graph.TruncationWarning")


def pred_from(means, conf=None):
    means = np.asarray(means, dtype=float)
    M = means.shape[0]
    conf = np.full(M, 1.0 / M) if conf is None else np.asarray(conf, dtype=float)
    return PredictionSet(means, conf, np.ones_like(means), np.zeros(means.shape[:2]))


def naive_rmse(preds, truths, dt, horizons):
    out = []
    for h in horizons:
        k = int(round(h / dt)) - 1
        total = 0.0
        for p, t in zip(preds, truths):
            best = p.means[int(np.argmax(p.confidences))]
            total += (best[k][0] - t[k][0]) ** 2 + (best[k][1] - t[k][1]) ** 2
        out.append(math.sqrt(total / len(preds)))
    return out


def test_horizon_index():
    assert horizon_index(1, 0.1) == 9
    assert horizon_index(5, 0.1) == 49
    assert horizon_index(0.5, 0.25) == 1


def test_perfect_prediction_scores_zero():
    truth = np.cumsum(np.ones((50, 2)), axis=0)
    rep = rmse_by_horizon([pred_from(truth[None])], [truth])
    assert rep.rmse == [0.0] * 5 and rep.rmse_best_of_m == [0.0] * 5


def test_constant_offset_scores_one():
    truth = np.zeros((50, 2))
    rep = rmse_by_horizon([pred_from((truth + [1.0, 0.0])[None])] * 3, [truth] * 3)
    assert rep.rmse == [1.0] * 5


def test_zero_and_two_metre_errors_give_root_two():
    truth = np.zeros((50, 2))
    preds = [pred_from(truth[None]), pred_from((truth + [0.0, 2.0])[None])]
    rep = rmse_by_horizon(preds, [truth, truth])
    assert rep.rmse == [math.sqrt(2)] * 5


def test_best_of_m_takes_the_closest_mode():
    truth = np.zeros((50, 2))
    modes = np.stack([truth + 3.0, truth + [0.0, 0.5]])
    rep = rmse_by_horizon([pred_from(modes, [0.9, 0.1])], [truth])
    assert rep.rmse == [math.sqrt(18)] * 5
    assert rep.rmse_best_of_m == [0.5] * 5


def test_scorer_matches_naive_reference():
    rng = np.random.default_rng(0)
    preds = [pred_from(rng.normal(0, 10, (6, 50, 2)), rng.dirichlet(np.ones(6))) for _ in range(200)]
    truths = [rng.normal(0, 10, (50, 2)) for _ in range(200)]
    rep = rmse_by_horizon(preds, truths)
    want = naive_rmse(preds, truths, 0.1, (1, 2, 3, 4, 5))
    assert max(abs(a - b) for a, b in zip(rep.rmse, want)) <= 1e-12
    assert rep.n_windows == 200


def test_scorer_rejects_misaligned_inputs():
    with pytest.raises(ValueError):
        rmse_by_horizon([], [])
    with pytest.raises(ValueError):
        rmse_by_horizon([pred_from(np.zeros((1, 50, 2)))], [])


def test_short_horizon_drops_unreachable_rows():
    rep = rmse_by_horizon([pred_from(np.zeros((1, 20, 2)))], [np.zeros((20, 2))])
    assert rep.horizons_s == [1.0, 2.0]


def test_report_roundtrips():
    rep = EvalReport("drop5", [1.0, 2.0], [0.123456789012345, 1 / 3], [0.1, 0.2], 17)
    assert EvalReport.from_csv(rep.to_csv()) == rep
    assert report_from_json(report_to_json(rep)) == rep
    header = rep.to_csv().splitlines()[0]
    assert header == "variant,horizon_s,rmse_m,rmse_best_of_m_m,n_windows"
    with pytest.raises(ValueError):
        EvalReport("drop4", [1.0], [0.0], [0.0], 1)


# ---------------------------------------------------------------- end to end


@pytest.fixture(scope="module")
def model():
    m = CogniTraj(ModelConfig(width=8, heads=2, modes=2, gn_groups=2))
    ParamStore(m).initialize(0)
    return m


def test_drop_variants_match_complete_on_constant_velocity(model):
    windows = synth_windows(6, "constant-velocity", seed=4)
    base = eval_missing(model, windows, "complete")
    for variant in ("drop3", "drop5", "drop8"):
        rep = eval_missing(model, windows, variant)
        assert rep.variant == variant and rep.n_windows == 6
        np.testing.assert_allclose(rep.rmse, base.rmse, rtol=0, atol=1e-9)


def test_unknown_variant(model):
    with pytest.raises(ValueError, match="drop4"):
        eval_missing(model, synth_windows(1, "braking", seed=0), "drop4")


def test_plot_data(model, tmp_path):
    from cognitraj.features import featurize
    from cognitraj.model import predict

    (w,) = synth_windows(1, "lane-change", seed=2)
    (pred,) = predict(model, [featurize(w)])
    paths = emit_plot_data(w, pred, tmp_path)
    assert [p.suffix for p in paths] == [".csv", ".svg"]
    with paths[0].open() as fh:
        rows = list(csv.DictReader(fh))
    tracks = [r for r in rows if r["kind"] == "track"]
    modes = [r for r in rows if r["kind"] == "mode"]
    assert len(tracks) == sum(len(tr) for tr in w.agents)
    assert len(modes) == pred.n_modes * w.t_f_frames
    hist_rows = [r for r in tracks if int(r["frame"]) <= w.current_frame]
    assert all(r["spr"] != "" for r in hist_rows)
    root = ET.parse(paths[1]).getroot()
    lines = root.findall("{http://www.w3.org/2000/svg}polyline")
    assert len(lines) == 2 * w.n_agents + pred.n_modes
