"""iRprop+ minimiser for objectives supplying value plus gradient.

Resilient backpropagation adapts one step size per parameter from the sign
pattern of successive gradients; the "improved plus" variant additionally
reverts a parameter when its gradient flips sign while the loss got worse
(weight backtracking).  Only gradient signs enter the update, which makes
the method robust to badly scaled full-batch objectives.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class RpropConfig:
    """Update constants; defaults follow the published iRprop+ values."""

    eta_plus: float = 1.2
    eta_minus: float = 0.5
    step_init: float = 0.0125
    step_min: float = 1e-12
    step_max: float = 50.0

    def __post_init__(self) -> None:
        if not self.eta_plus > 1.0:
            raise ValueError("eta_plus must be > 1")
        if not 0.0 < self.eta_minus < 1.0:
            raise ValueError("eta_minus must be in (0, 1)")
        if not 0.0 < self.step_min <= self.step_init <= self.step_max:
            raise ValueError("need 0 < step_min <= step_init <= step_max")


class NonFiniteLossError(RuntimeError):
    """Objective returned a non-finite value or gradient during a run."""

    def __init__(self, message: str, iteration: int) -> None:
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration


class IRpropPlus:
    """Per-parameter step-size state machine.

    Drive it manually with :meth:`step` for instrumented use, or through
    :func:`minimize`.
    """

    def __init__(self, size: int, config: RpropConfig = RpropConfig()) -> None:
        self.config = config
        self.step_sizes = np.full(size, config.step_init)
        self.prev_gradient = np.zeros(size)
        self.prev_delta = np.zeros(size)
        self.prev_loss = np.inf

    def step(self, x: np.ndarray, loss: float, grad: np.ndarray) -> np.ndarray:
        """Next iterate from the value and gradient at ``x``."""
        cfg = self.config
        sign_prod = grad * self.prev_gradient
        same = sign_prod > 0.0
        flipped = sign_prod < 0.0

        self.step_sizes[same] = np.minimum(self.step_sizes[same] * cfg.eta_plus, cfg.step_max)
        self.step_sizes[flipped] = np.maximum(self.step_sizes[flipped] * cfg.eta_minus, cfg.step_min)

        delta = -np.sign(grad) * self.step_sizes
        if loss > self.prev_loss:
            # Backtrack parameters whose gradient flipped while loss rose.
            delta[flipped] = -self.prev_delta[flipped]
        else:
            delta[flipped] = 0.0

        stored_grad = grad.copy()
        stored_grad[flipped] = 0.0

        self.prev_gradient = stored_grad
        self.prev_delta = delta
        self.prev_loss = loss
        return x + delta


@dataclass
class MinimizeResult:
    params: np.ndarray
    trace: np.ndarray
    best_iteration: int

    @property
    def best_loss(self) -> float:
        return float(self.trace[self.best_iteration])


def minimize(
    objective: Objective,
    init: np.ndarray,
    max_iters: int,
    config: RpropConfig = RpropConfig(),
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> MinimizeResult:
    """Run iRprop+ for exactly ``max_iters`` iterations (no early stop).

    Returns the iterate with the lowest recorded loss; the trace has
    ``max_iters + 1`` entries including the initial loss.  Raises
    :class:`NonFiniteLossError` if the objective degenerates.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    x = np.array(init, dtype=np.float64)
    state = IRpropPlus(x.size, config)
    trace = np.empty(max_iters + 1)
    best_x = x.copy()
    best_loss = np.inf
    best_iter = 0

    for it in range(max_iters + 1):
        value, grad = objective(x)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise NonFiniteLossError("non-finite loss or gradient", it)
        trace[it] = value
        if value < best_loss:
            best_loss = value
            best_x = x.copy()
            best_iter = it
        if callback is not None:
            callback(it, x, value)
        if it < max_iters:
            x = state.step(x, value, grad)

    return MinimizeResult(params=best_x, trace=trace, best_iteration=best_iter)


def dump_trace(trace: Sequence[float], path: str | Path) -> None:
    """Write the loss trace as a two-column CSV (iteration, loss)."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iteration", "loss"])
        for it, value in enumerate(trace):
            writer.writerow([it, f"{value:.17g}"])
