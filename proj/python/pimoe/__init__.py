"""Python access to the pimoe native core.

Configs and reports cross the boundary as JSON and come back as dicts.
"""

import json

from ._pimoe import (
    Model,
    PimoeError,
    gate_weights,
    importance_cv_loss,
    poly_baseline,
    stat_features as _stat_features,
)
from . import _pimoe

__all__ = [
    "Model",
    "PimoeError",
    "compute_metrics",
    "evaluate",
    "gate_weights",
    "importance_cv_loss",
    "load",
    "model_config",
    "model_metadata",
    "poly_baseline",
    "stat_features",
    "synth",
    "train",
    "tsne",
]

_STAT_NAMES = ("max", "mean", "min", "var", "skew", "kurt")


def _dump(config):
    return "" if config is None else json.dumps(config)


def synth(out_dir, config=None):
    """Generate a synthetic fleet archive in out_dir; returns the battery ids."""
    return _pimoe.synth(str(out_dir), _dump(config))


def train(data_dir, config=None, ids=None):
    """Fit on the given batteries of an archive (all of them by default)."""
    return _pimoe.train(str(data_dir), _dump(config), list(ids or []))


def load(path):
    return Model.load(str(path))


def evaluate(model, data_dir, ids=None):
    return json.loads(model.evaluate(str(data_dir), list(ids or [])))


def model_config(model):
    return json.loads(model.config_json)


def model_metadata(model):
    return json.loads(model.metadata_json)


def compute_metrics(prediction, truth):
    return json.loads(_pimoe.compute_metrics(list(prediction), list(truth)))


def stat_features(x):
    return dict(zip(_STAT_NAMES, _stat_features(list(x))))


def tsne(points, perplexity=30.0, iterations=1000, seed=0):
    """Exact 2-D t-SNE. Returns (embedding rows, KL trace)."""
    return _pimoe.tsne([list(p) for p in points], perplexity, iterations, seed)
