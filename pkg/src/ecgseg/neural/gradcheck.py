"""Central finite-difference verification of the analytic gradients."""

from __future__ import annotations

import numpy as np

from .model import ModelParams, batch_loss, loss_and_grad

LAYER_TYPES = ("conv", "bn", "lstm", "head")


def layer_type(name: str) -> str:
    return next(t for t in LAYER_TYPES if name.startswith(t))


def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradients(params: ModelParams, batch, h: float = 1e-5, per_type: int | None = None, seed: int = 0):
    """Compare analytic and central-difference gradients.

    ``per_type`` limits the check to that many randomly chosen scalars per
    layer type (all of them when the type has fewer); ``None`` checks every
    parameter. Returns ``{layer_type: (n_checked, worst_relative_error)}``.
    The model must be float64.
    """
    if params.dtype != np.float64:
        raise TypeError("finite differences need float64 parameters")
    _, grads = loss_and_grad(params.copy(), batch)
    rng = np.random.default_rng(seed)
    coords = {t: [] for t in LAYER_TYPES}
    for name, w in params.weights.items():
        coords[layer_type(name)].extend((name, i) for i in range(w.size))
    report = {}
    for t, items in coords.items():
        if per_type is not None and len(items) > per_type:
            pick = rng.choice(len(items), size=per_type, replace=False)
            items = [items[i] for i in sorted(pick)]
        worst = 0.0
        for name, i in items:
            w = params.weights[name].reshape(-1)
            orig = w[i]
            w[i] = orig + h
            up = batch_loss(params, batch)
            w[i] = orig - h
            down = batch_loss(params, batch)
            w[i] = orig
            numeric = (up - down) / (2 * h)
            worst = max(worst, relative_error(float(grads[name].reshape(-1)[i]), numeric))
        report[t] = (len(items), worst)
    return report
