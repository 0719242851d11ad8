"""Markov regime-switching models: simulation, maximum likelihood and inference."""

import json

import numpy as np

from . import _core
from ._core import RegimeSwitchError, set_threads

__all__ = [
    "RegimeSwitchError",
    "coverage",
    "fit",
    "forgetting_curve",
    "loglik",
    "parameter_names",
    "set_threads",
    "simulate",
    "smooth",
]


def _text(obj):
    return obj if isinstance(obj, str) else json.dumps(obj)


def _series(y):
    return np.ascontiguousarray(y, dtype=np.float64)


def parameter_names(model):
    return _core.parameter_names(_text(model))


def simulate(model, theta, n, burn_in=800, seed=0):
    """Returns (y, regimes, presample); y includes the presample values."""
    y, regimes, presample = _core.simulate(_text(model), _text(theta), n, burn_in, seed)
    return np.asarray(y), np.asarray(regimes), presample


def loglik(model, theta, y, init="x0=0"):
    return _core.loglik(_text(model), _text(theta), _series(y), init)


def fit(model, y, init="estimate", starts=10, seed=0, label_order="ascending", hessian=True):
    """Fits the model and returns the result document as a dict."""
    return json.loads(_core.fit(_text(model), _series(y), init, starts, seed, label_order, hessian))


def smooth(fit_result, y):
    """Smoothed regime probabilities, one row per observation."""
    return np.asarray(_core.smooth(_text(fit_result), _series(y)))


def coverage(model, theta, n, reps, method="opg_xi", seed=0, starts=2):
    return json.loads(_core.coverage(_text(model), _text(theta), n, reps, method, seed, starts))


def forgetting_curve(model, theta, y, m, mu1, mu2):
    """Rows of (k, tv_distance, bound) and whether the bound held everywhere."""
    points, holds = _core.forgetting_curve(
        _text(model), _text(theta), _series(y), m, _series(mu1), _series(mu2)
    )
    return np.asarray(points), holds
