"""Central finite-difference checking for the hand-written backward passes.

``loss_fn`` must recompute the loss from scratch; parameters are perturbed
in place one element at a time. Use float64 parameters so the h**2
truncation error dominates rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["GradReport", "finite_difference", "compare_grads", "check_model_grads"]

# Denominator floor for the relative error. Central differences of a loss of
# magnitude f carry eps * f / h of cancellation noise (~1e-9 here), so exactly
# zero gradients (e.g. a key bias under shift-invariant softmax) must be
# compared against a floor rather than against themselves.
_REL_FLOOR = 1e-6


@dataclass
class GradReport:
    max_rel_err: float
    worst_param: str
    n_params: int

    def ok(self, tol: float) -> bool:
        return self.max_rel_err <= tol


def finite_difference(params: list[tuple[str, np.ndarray]], loss_fn,
                      h: float = 1e-5) -> dict[str, np.ndarray]:
    grads = {}
    for name, arr in params:
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss_fn()
            flat[i] = keep - h
            down = loss_fn()
            flat[i] = keep
            gflat[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def compare_grads(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray]) -> GradReport:
    worst = 0.0
    worst_name = ""
    count = 0
    for name, num in numeric.items():
        ana = analytic.get(name)
        if ana is None:
            raise KeyError(f"no analytic gradient for {name}")
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), _REL_FLOOR)
        rel = np.abs(ana - num) / denom
        count += num.size
        i = int(np.argmax(rel))
        if rel.reshape(-1)[i] > worst:
            worst = float(rel.reshape(-1)[i])
            worst_name = f"{name}[{i}]"
    return GradReport(worst, worst_name, count)


def check_model_grads(model, example: dict, h: float = 1e-5) -> GradReport:
    """Finite differences of the training loss over every model parameter."""
    def loss_fn():
        loss, _, _, _ = model.loss_and_grads(example)
        return loss

    _, _, _, analytic = model.loss_and_grads(example)
    numeric = finite_difference(model.parameters(), loss_fn, h=h)
    return compare_grads(analytic, numeric)
