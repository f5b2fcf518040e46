"""Customer lifetime-value forecasting: simulator, dRNN, BTYD and lag-ridge baselines.

Config and report arguments are plain dicts in the same JSON layout the
``ltv`` command line tool reads and writes.
"""

import json

from . import _ltv
from ._ltv import (
    DataError,
    FitError,
    LtvError,
    NumericError,
    OracleError,
    ShapeError,
    TrainingError,
    UsageError,
    acquisition_labels,
    asmape,
    hyp2f1,
    mdape,
    rmse,
    rolling_labels,
    smape,
    subsample_zero_records,
)

__all__ = [
    "DataError", "FitError", "LtvError", "NumericError", "OracleError", "ShapeError", "TrainingError", "UsageError",
    "acquisition_labels", "asmape", "baseline", "bgnbd_expected_transactions", "compare", "default_sim_config",
    "evaluate", "fit_btyd", "gradient_check", "hyp2f1", "mdape", "prepare", "read_panel", "rmse",
    "rolling_labels", "run_experiment", "simulate", "simulate_csv", "smape", "subsample_zero_records", "train",
]

DEFAULT_GRADCHECK_SPEC = {
    "input_dim": 3,
    "output_dim": 2,
    "blocks": [{"layers": [{"dilation": 1, "n_y": 2, "n_h": 2}, {"dilation": 2, "n_y": 2, "n_h": 2}]}],
}


def default_sim_config(n_users=1000, seed=1):
    return json.loads(_ltv.default_sim_config(n_users, seed))


def simulate(config):
    """List of users, each a dict with user_id, cohort_date, cutoff, values and categories."""
    return _ltv.simulate(json.dumps(config))


def simulate_csv(config, path):
    return _ltv.simulate_csv(json.dumps(config), str(path))


def read_panel(path):
    return _ltv.read_panel(str(path))


def prepare(panel_csv, out_dir, config=None, **overrides):
    """Writes a prepared dataset directory; returns (train, validation, test) user counts."""
    cfg = dict(config or {})
    cfg.update(overrides)
    return _ltv.prepare(str(panel_csv), str(out_dir), json.dumps(cfg))


def train(data_dir, spec, model_out, train_config=None, seed=1):
    """Trains on a prepared dataset; sizes left out of ``spec`` come from the data."""
    return _ltv.train(str(data_dir), json.dumps(spec), json.dumps(train_config or {}), seed, str(model_out))


def evaluate(model, data_dir, floor=1.0):
    return json.loads(_ltv.evaluate(str(model), str(data_dir), floor))


def baseline(kind, data_dir, floor=1.0, penalty=1.0):
    return json.loads(_ltv.baseline(kind, str(data_dir), floor, penalty))


def compare(reports):
    return json.loads(_ltv.merge_reports([json.dumps(r) for r in reports]))


def fit_btyd(rows):
    """rows: (x, t_x, T, mean_value) per user with at least one purchase, in periods."""
    return json.loads(_ltv.fit_btyd([tuple(r) for r in rows]))


def bgnbd_expected_transactions(params, x, t_x, T, horizon):
    return _ltv.bgnbd_expected_transactions(json.dumps(params), x, t_x, T, horizon)


def run_experiment(config):
    return json.loads(_ltv.run_experiment(json.dumps(config)))


def gradient_check(spec=None, length=12, seed=1):
    """(max relative error, parameter count) of analytic vs central-difference gradients."""
    return _ltv.gradient_check(json.dumps(spec or DEFAULT_GRADCHECK_SPEC), length, seed)
