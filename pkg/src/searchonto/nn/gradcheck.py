"""Central finite-difference gradient checks."""
from __future__ import annotations

from typing import Callable

import numpy as np


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, np.float64)
    n = np.asarray(numeric, np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))))


def numeric_gradient(f: Callable[[], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def gradient_check(model, inputs, h: float = 1e-5) -> float:
    """Max relative error between analytic and numeric parameter gradients.

    ``model`` exposes ``params`` (name -> array, mutated in place) and
    ``loss_and_grads(inputs) -> (loss, grads)``.
    """
    _, grads = model.loss_and_grads(inputs)
    grads = {k: np.array(v, copy=True) for k, v in grads.items()}
    worst = 0.0
    for name, p in model.params.items():
        num = numeric_gradient(lambda: model.loss_and_grads(inputs)[0], p, h)
        worst = max(worst, relative_error(grads[name], num))
    return worst
