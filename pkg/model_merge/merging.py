"""
Weight-space averaging of same-architecture checkpoints.
"""

import logging
import math

import numpy as np

from Keye_Curation.exceptions import InvalidInputError
from .params import ParamMap

logger = logging.getLogger(__name__)


def normalize_weights(weights, count):
    """Uniform weights when none are given, else the given ones scaled to sum to 1."""
    if weights is None:
        return [1.0 / count] * count
    weights = [float(w) for w in weights]
    if len(weights) != count:
        raise InvalidInputError(f"Got {len(weights)} weights for {count} models.")
    if any(not math.isfinite(w) or w < 0 for w in weights):
        raise InvalidInputError("Weights must be finite and non-negative.")
    total = math.fsum(weights)
    if total <= 0:
        raise InvalidInputError("Weights must not all be zero.")
    return [w / total for w in weights]


def check_structure(models):
    names = set(models[0])
    for index, model in enumerate(models[1:], start=1):
        if set(model) != names:
            diff = sorted(names.symmetric_difference(model))
            raise InvalidInputError(f"Model {index} parameter names differ from model 0: {', '.join(diff)}")
    for name in sorted(names):
        shape = models[0][name].shape
        for index, model in enumerate(models[1:], start=1):
            if model[name].shape != shape:
                raise InvalidInputError(
                    f"Parameter {name!r} has shape {model[name].shape} in model {index}, expected {shape}."
                )


def merge_average(models, weights=None):
    """
    Per-parameter convex combination of `models` (uniform weights by default).

    Weighted terms are summed in sorted order per element, so reordering the
    (model, weight) pairs cannot change the result; the result is clipped to
    the elementwise input range.
    """
    models = list(models)
    if not models:
        raise InvalidInputError("Need at least one model to merge.")
    models = [m if isinstance(m, ParamMap) else ParamMap(m) for m in models]
    check_structure(models)
    weights = normalize_weights(weights, len(models))

    merged = {}
    for name in sorted(models[0]):
        stack = np.stack([model[name] for model in models])
        terms = np.sort(stack * np.reshape(weights, (-1,) + (1,) * (stack.ndim - 1)), axis=0)
        merged[name] = np.clip(terms.sum(axis=0), stack.min(axis=0), stack.max(axis=0))
    logger.debug(f"Merged {len(models)} models over {len(merged)} parameters")
    return ParamMap(merged)
