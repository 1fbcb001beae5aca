"""Plain SGD update rules and a small driver that records per-step
diagnostics (task losses, gradient norms, conflict, bracket norm)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .autodiff import Partition, ScalarLoss, as_vector, hvp, partition_of, value_and_grad
from .errors import DivergenceError, NonFiniteError

MODES = ("single", "multitask", "continual_alternating")


def _check_h(h):
    if not h > 0:
        raise ValueError(f"learning rate must be positive, got {h}")


def sgd_step(loss: ScalarLoss, theta, h: float) -> np.ndarray:
    """``theta - h grad L(theta)``."""
    _check_h(h)
    x = as_vector(theta, loss.dimension)
    _, g = value_and_grad(loss, x)
    return x - h * g


def joint_multitask_step(L1: ScalarLoss, L2: ScalarLoss, alpha: float, beta: float, omega, h: float,
                         partition=None) -> np.ndarray:
    """One step on ``alpha L1 + beta L2`` over the whole ``omega`` vector.

    Same arithmetic as :func:`sgd_step` on ``WeightedSumLoss([L1, L2],
    [alpha, beta])``: the weighted gradient is accumulated L1 first.
    """
    _check_h(h)
    part = partition_of(partition, omega)
    x = as_vector(omega, L1.dimension)
    if part is not None:
        part.validate(x.size)
    grad = np.zeros(x.size)
    for w, loss in ((alpha, L1), (beta, L2)):
        grad += w * value_and_grad(loss, x)[1]
    return x - h * grad


def sequential_pair_step(L1: ScalarLoss, L2: ScalarLoss, theta0, h: float):
    """Two successive steps, first on L1 then on L2; returns both iterates."""
    theta1 = sgd_step(L1, theta0, h)
    return theta1, sgd_step(L2, theta1, h)


@dataclass
class StepDiagnostics:
    loss1: float
    loss2: float
    grad_norm1: float
    grad_norm2: float
    conflict: float
    bracket_norm: float


@dataclass
class TrajectoryTrace:
    mode: str
    h: float
    seed: int
    points: List[np.ndarray] = field(default_factory=list)
    diagnostics: List[StepDiagnostics] = field(default_factory=list)

    @property
    def steps(self):
        return len(self.points) - 1


def point_diagnostics(losses: Sequence[ScalarLoss], x, partition: Optional[Partition] = None) -> StepDiagnostics:
    """Diagnostics at one point; second-task fields are NaN for a single loss."""
    f1, g1 = value_and_grad(losses[0], x)
    if len(losses) == 1:
        nan = float("nan")
        return StepDiagnostics(f1, nan, float(np.linalg.norm(g1)), nan, nan, nan)
    f2, g2 = value_and_grad(losses[1], x)
    shared = partition.theta if partition is not None else slice(None)
    bracket = hvp(losses[1], x, g1) - hvp(losses[0], x, g2)
    return StepDiagnostics(
        f1, f2, float(np.linalg.norm(g1)), float(np.linalg.norm(g2)),
        float(g1[shared] @ g2[shared]), float(np.linalg.norm(bracket)),
    )


def run_training(mode: str, losses: Sequence[ScalarLoss], h: float, steps: int, seed: int = 0,
                 start=None, alpha: float = 1.0, beta: float = 1.0, partition=None) -> TrajectoryTrace:
    """Repeat the update rule of ``mode`` for ``steps`` transitions.

    ``continual_alternating`` applies L1, L2, L1, ... one step each. When
    ``start`` is omitted it is drawn from a standard normal seeded by
    ``seed``. The diagnostic for transition ``k`` is taken at ``points[k]``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    _check_h(h)
    if mode != "single" and len(losses) < 2:
        raise ValueError(f"mode {mode!r} needs two losses")
    part = partition_of(partition, start)
    n = losses[0].dimension
    if start is None:
        x = np.random.default_rng(seed).standard_normal(n)
    else:
        x = as_vector(start, n, "start").copy()
    active = losses[:1] if mode == "single" else losses[:2]

    trace = TrajectoryTrace(mode, float(h), int(seed), points=[x.copy()])
    for k in range(steps):
        try:
            trace.diagnostics.append(point_diagnostics(active, x, part))
            if mode == "single":
                x = sgd_step(losses[0], x, h)
            elif mode == "multitask":
                x = joint_multitask_step(losses[0], losses[1], alpha, beta, x, h, part)
            else:
                x = sgd_step(losses[k % 2], x, h)
        except NonFiniteError as exc:
            raise DivergenceError(k, f"non-finite value at step {k}: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise DivergenceError(k)
        trace.points.append(x.copy())
    return trace
