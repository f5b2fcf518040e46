import json
import math
from pathlib import Path

import pytest

import ltv

CONFIGS = Path(__file__).resolve().parents[2] / "configs"


def small_experiment():
    cfg = json.loads((CONFIGS / "cli_small.json").read_text())
    cfg["simulation"]["n_users"] = 800
    cfg["train"]["epochs"] = 2
    return cfg


def test_labels_and_subsampling():
    row = [0.82, 0.96, 0.77, 0.00, 0.78, 1.00]
    labels = ltv.acquisition_labels(row, 5)
    assert labels["remaining"][2] == pytest.approx(1.78, abs=1e-12)
    assert labels["total"] == pytest.approx(4.33, abs=1e-12)
    kept, gaps = ltv.subsample_zero_records([0, 0, 3, 0, 0, 0, 1, 0], 0.0)
    assert kept == [0, 2, 6, 7]
    assert gaps == [0, 2, 4, 1]
    rolled = ltv.rolling_labels([1.0, 2.0, 3.0, 4.0], [0, 1], [1, 2], 4)
    assert rolled["targets"] == [2.0, 5.0, 3.0, 7.0]


def test_metrics():
    assert ltv.asmape([0.0], [1.0], 1.0) == pytest.approx(1.0, abs=1e-12)
    assert ltv.asmape([100.0], [50.0], 1.0) == pytest.approx(2 / 3, abs=1e-12)
    assert ltv.smape([0.0, 2.0], [0.0, 2.0]) == 0.0
    assert ltv.rmse([1.0, 3.0], [1.0, 1.0]) == pytest.approx(math.sqrt(2.0))
    value, excluded = ltv.mdape([0.0, 10.0, 20.0], [1.0, 11.0, 20.0])
    assert excluded == 1
    with pytest.raises(ltv.UsageError):
        ltv.asmape([1.0], [-1.0], 1.0)


def test_gradient_check_and_hypergeometric():
    err, n = ltv.gradient_check()
    assert n > 0 and err < 1e-4
    assert ltv.hyp2f1(1.0, 1.0, 2.0, 0.5) == pytest.approx(-math.log(0.5) / 0.5, rel=1e-10)


def test_simulate_is_deterministic():
    cfg = ltv.default_sim_config(50, 7)
    a, b = ltv.simulate(cfg), ltv.simulate(cfg)
    assert a == b and len(a) == 50
    assert all(v >= 0 for u in a for v in u["values"])
    with pytest.raises(ltv.LtvError):
        ltv.simulate({"n_users": -3})


def test_btyd_fit_and_forecast():
    rows = [(x % 5, float(x % 5) * 3.0, 40.0, 5.0 + (x % 3)) for x in range(300)]
    fitted = ltv.fit_btyd(rows)
    assert fitted["format"] == "ltv-btyd"
    near = ltv.bgnbd_expected_transactions(fitted, 2, 10, 30, 4)
    far = ltv.bgnbd_expected_transactions(fitted, 2, 10, 30, 26)
    assert 0 <= near <= far


def test_pipeline_end_to_end(tmp_path):
    cfg = small_experiment()
    csv = tmp_path / "panel.csv"
    assert ltv.simulate_csv(cfg["simulation"], csv) == 800
    assert len(ltv.read_panel(csv)) == 800
    data = tmp_path / "data"
    n_train, n_val, n_test = ltv.prepare(csv, data, cfg["prepare"], mode="rolling")
    assert n_train > 0 and n_test > 0
    spec = {"embedding_dims": [2], "blocks": [{"layers": [{"dilation": 1, "n_y": 4, "n_h": 3},
                                                          {"dilation": 2, "n_y": 4, "n_h": 3}]}]}
    model = tmp_path / "model.txt"
    best, ran = ltv.train(data, spec, model, {"epochs": 2, "threads": 1}, seed=3)
    assert 1 <= best <= ran <= 2
    reports = [ltv.evaluate(model, data, floor=1.0), ltv.baseline("ridge", data), ltv.baseline("btyd", data)]
    assert reports[0]["floor"] == 1.0
    merged = ltv.compare(reports)
    assert [m["model"] for m in merged["models"]] == ["drnn", "ridge_lag", "btyd"]
    with pytest.raises(ltv.UsageError):
        ltv.baseline("forest", data)
    with pytest.raises(ltv.DataError):
        ltv.evaluate(tmp_path / "missing.txt", data)


def test_run_experiment_matches_itself():
    cfg = small_experiment()
    assert ltv.run_experiment(cfg) == ltv.run_experiment(cfg)
