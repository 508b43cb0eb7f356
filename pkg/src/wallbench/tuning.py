"""Seeded random-search hyperparameter tuning."""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import NumericalError, ValidationError

log = logging.getLogger(__name__)

__all__ = ["sample_space", "random_search_tune"]


def _sample(rng, name, dist):
    """Draw one value. ``dist`` is a constant or a tuple
    ``("choice", [..])``, ``("int", lo, hi)``, ``("uniform", lo, hi)``, ``("loguniform", lo, hi)``.
    """
    if not isinstance(dist, (tuple, list)) or not dist or not isinstance(dist[0], str):
        return dist
    kind = dist[0]
    if kind == "choice":
        options = list(dist[1])
        return options[int(rng.integers(len(options)))]
    if kind == "int":
        return int(rng.integers(dist[1], dist[2] + 1))
    if kind == "uniform":
        return float(rng.uniform(dist[1], dist[2]))
    if kind == "loguniform":
        return float(math.exp(rng.uniform(math.log(dist[1]), math.log(dist[2]))))
    raise ValidationError(f"unknown distribution {kind!r} for {name!r}")


def sample_space(space: dict, rng) -> dict:
    return {name: _sample(rng, name, space[name]) for name in sorted(space)}


def random_search_tune(
    space: dict,
    budget: int,
    seed: int,
    evaluate: Callable[[dict], float],
    log_path=None,
) -> tuple[dict, list[dict]]:
    """Evaluate ``budget`` seeded samples of ``space``; keep the best validation score.

    ``evaluate`` maps a parameter dict to a validation score (higher is
    better, e.g. R^2). The first trial wins ties, so a larger budget with the
    same seed never returns a worse score. Returns ``(best_params, trials)``.
    """
    if budget < 1:
        raise ValidationError(f"budget must be >= 1, got {budget}")
    rng = np.random.Generator(np.random.PCG64(seed))
    trials, best = [], None
    for k in range(budget):
        params = sample_space(space, rng)
        try:
            score = float(evaluate(params))
        except NumericalError as exc:
            log.warning("trial %d failed: %s", k, exc)
            score = float("nan")
        trials.append({"trial": k, "params": params, "score": score})
        log.info("trial %d score %.6g params %s", k, score, params)
        if math.isfinite(score) and (best is None or score > best["score"]):
            best = trials[-1]
    if log_path is not None:
        Path(log_path).write_text(json.dumps(trials, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if best is None:
        raise NumericalError(f"all {budget} tuning trials produced non-finite scores")
    return best["params"], trials
