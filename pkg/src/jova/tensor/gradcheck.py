"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from jova.tensor.engine import Parameter, Tape


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    checked: int


def relative_error(analytic, numeric, floor: float = 1e-8):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def check_gradients(loss_fn, params: list[Parameter], h: float = 1e-5,
                    max_per_param: int | None = None, seed: int = 0) -> list[GradCheckResult]:
    """Compare tape gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must build the loss from ``params`` each call. Run it under
    float64 parameters; float32 cannot resolve h=1e-5 steps.
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    rng = np.random.default_rng(seed)
    results = []
    for p in params:
        flat = p.data.reshape(-1)
        grad = p.grad.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_param is not None and flat.size > max_per_param:
            idx = np.sort(rng.choice(flat.size, size=max_per_param, replace=False))
        numeric = np.empty(len(idx))
        for n, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn().data)
            flat[i] = orig - h
            down = float(loss_fn().data)
            flat[i] = orig
            numeric[n] = (up - down) / (2 * h)
        err = relative_error(grad[idx], numeric)
        results.append(GradCheckResult(p.name, float(err.max()) if err.size else 0.0, len(idx)))
    return results
