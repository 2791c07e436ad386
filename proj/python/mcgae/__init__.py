"""Constraint-guided autoencoders (MCGAE, CGAE) and AE-DSVDD on run-to-failure data."""

import json as _json

from . import _core
from ._core import (
    ConfigError,
    FormatError,
    NumericalError,
    anomalous_direction,
    balanced_accuracy,
    monotonicity_coefficients,
    normal_direction,
    spearman,
    t_diff,
    t_fixed,
    t_opt,
    t_sigmoid,
    t_train,
    trivial_balanced_accuracy,
)


def preset(name="desk"):
    return _json.loads(_core.preset(name))


def generate(**config):
    """Synthetic runs as dicts; frames are (T, F) arrays."""
    return _core.generate(_json.dumps(config))


def train(spec=None, method="MCGAE", n_anomalous=1, fold=0, seed=0):
    """Train and evaluate one job; `spec` overrides the desk preset."""
    text = _json.dumps(spec or {})
    return _json.loads(_core.train_job(text, method, n_anomalous, fold, seed))


def sweep(spec, out, workers=1, ablation=False):
    return _json.loads(_core.sweep(_json.dumps(spec), str(out), workers, ablation))
