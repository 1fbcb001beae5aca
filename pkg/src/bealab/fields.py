"""Vector fields on R^n: gradient fields, Lie brackets and the first-order
modified right-hand sides for single-task, multitask and continual SGD.

Gradient fields carry the raw gradient (no minus sign); descent fields
negate explicitly. Since the bracket is bilinear,
``[grad L1, grad L2] == [-grad L1, -grad L2]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .autodiff import (
    Partition,
    ScalarLoss,
    as_vector,
    hvp,
    partition_of,
    value_and_grad,
)
from .errors import DimensionError, PartitionError


class VectorField:
    """A map R^n -> R^n with an optional exact Jacobian-vector product."""

    def __init__(self, dimension: int, fn: Callable, jvp: Optional[Callable] = None, name: str = "field"):
        self.dimension = int(dimension)
        self._fn = fn
        self._jvp = jvp
        self.name = name

    def eval(self, point):
        return np.asarray(self._fn(as_vector(point, self.dimension)), dtype=float)

    __call__ = eval

    def jvp(self, point, direction):
        """``J(x) v`` where ``J`` is the Jacobian of the field."""
        if self._jvp is None:
            raise NotImplementedError(f"{self.name} has no exact Jacobian-vector product")
        x = as_vector(point, self.dimension)
        v = as_vector(direction, self.dimension, "direction")
        return np.asarray(self._jvp(x, v), dtype=float)

    def __neg__(self):
        return self.scaled(-1.0)

    def scaled(self, a):
        jvp = None if self._jvp is None else (lambda x, v: a * self._jvp(x, v))
        return VectorField(self.dimension, lambda x: a * self._fn(x), jvp, f"{a}*{self.name}")

    def __add__(self, other):
        if other.dimension != self.dimension:
            raise DimensionError("cannot add fields of different dimension")
        jvp = None
        if self._jvp is not None and other._jvp is not None:
            jvp = lambda x, v: self._jvp(x, v) + other._jvp(x, v)
        return VectorField(self.dimension, lambda x: self._fn(x) + other._fn(x), jvp,
                           f"{self.name}+{other.name}")


def linear_field(M) -> VectorField:
    """``x -> M x``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return VectorField(M.shape[0], lambda x: M @ x, lambda x, v: M @ v, "linear")


def grad_field(loss: ScalarLoss) -> VectorField:
    """Raw gradient field of ``loss``; its Jacobian is the Hessian."""
    return VectorField(
        loss.dimension,
        lambda x: value_and_grad(loss, x)[1],
        lambda x, v: hvp(loss, x, v),
        "grad",
    )


def lie_bracket(F: VectorField, G: VectorField, point) -> np.ndarray:
    """``[F, G](x) = JG(x) F(x) - JF(x) G(x)``."""
    if F.dimension != G.dimension:
        raise DimensionError(f"field dimensions {F.dimension} and {G.dimension} differ")
    x = as_vector(point, F.dimension)
    return G.jvp(x, F.eval(x)) - F.jvp(x, G.eval(x))


def igr_grad(loss: ScalarLoss, point) -> np.ndarray:
    """Gradient of ``0.25 * ||grad L||^2``, i.e. ``0.5 * H grad L``."""
    _, g = value_and_grad(loss, point)
    return 0.5 * hvp(loss, point, g)


def _check_h(h):
    if not h > 0:
        raise ValueError(f"learning rate must be positive, got {h}")


def single_task_modified_field(loss: ScalarLoss, h: float) -> VectorField:
    """``-grad(L + h/4 ||grad L||^2)``.

    ``h == 0`` is accepted and gives the plain descent field.
    """
    if h < 0:
        raise ValueError(f"learning rate must be nonnegative, got {h}")

    def fn(x):
        _, g = value_and_grad(loss, x)
        if h == 0:
            return -g
        return -g - 0.5 * h * hvp(loss, x, g)

    return VectorField(loss.dimension, fn, name="single_task_modified")


def _require_partition(partition, n):
    if partition is None:
        raise PartitionError("multitask quantities need a [phi1 | phi2 | theta] partition")
    return Partition(*partition).validate(n)


def _task_grads(L1, L2, x, part):
    _, g1 = value_and_grad(L1, x)
    _, g2 = value_and_grad(L2, x)
    if np.any(g1[part.phi2] != 0) or np.any(g2[part.phi1] != 0):
        raise PartitionError("a task loss depends on the other task's head parameters")
    return g1, g2


def multitask_modified_field(L1: ScalarLoss, L2: ScalarLoss, alpha: float, beta: float,
                             h: float, partition=None) -> VectorField:
    """Descent field of the two-task modified loss.

    Sums the weighted task gradients, each task's IGR gradient over its own
    variables and the gradient of the shared-block conflict term, which is
    ``H1 P g2 + H2 P g1`` with ``P`` the embedding of the shared block.
    """
    if L1.dimension != L2.dimension:
        raise DimensionError("task losses have different dimensions")
    part = _require_partition(partition, L1.dimension)
    if h < 0:
        raise ValueError(f"learning rate must be nonnegative, got {h}")

    def fn(x):
        g1, g2 = _task_grads(L1, L2, x, part)
        out = alpha * g1 + beta * g2
        if h == 0:
            return -out
        out = out + 0.5 * h * alpha ** 2 * hvp(L1, x, g1) + 0.5 * h * beta ** 2 * hvp(L2, x, g2)
        conflict = hvp(L1, x, part.embed_theta(g2[part.theta])) + hvp(L2, x, part.embed_theta(g1[part.theta]))
        return -(out + 0.5 * h * alpha * beta * conflict)

    return VectorField(L1.dimension, fn, name="multitask_modified")


def multitask_conflict(L1: ScalarLoss, L2: ScalarLoss, point, partition=None) -> float:
    """``<grad_theta L1, grad_theta L2>`` over the shared block."""
    part = _require_partition(partition_of(partition, point), L1.dimension)
    x = as_vector(point, L1.dimension)
    g1, g2 = _task_grads(L1, L2, x, part)
    return float(g1[part.theta] @ g2[part.theta])


def multitask_modified_loss_value(L1: ScalarLoss, L2: ScalarLoss, alpha: float, beta: float,
                                  h: float, point, partition=None) -> float:
    """Scalar two-task modified loss (weighted losses + IGR + conflict)."""
    part = _require_partition(partition_of(partition, point), L1.dimension)
    x = as_vector(point, L1.dimension)
    f1, g1 = value_and_grad(L1, x)
    f2, g2 = value_and_grad(L2, x)
    if np.any(g1[part.phi2] != 0) or np.any(g2[part.phi1] != 0):
        raise PartitionError("a task loss depends on the other task's head parameters")
    # g1 vanishes on phi2, so ||g1|| is the norm over (phi1, theta)
    return float(
        alpha * f1 + beta * f2
        + 0.25 * h * alpha ** 2 * (g1 @ g1)
        + 0.25 * h * beta ** 2 * (g2 @ g2)
        + 0.5 * h * alpha * beta * (g1[part.theta] @ g2[part.theta])
    )


def single_task_modified_loss_value(loss: ScalarLoss, h: float, point) -> float:
    f, g = value_and_grad(loss, point)
    return float(f + 0.25 * h * (g @ g))


def continual_modified_loss_value(L1: ScalarLoss, L2: ScalarLoss, h: float, point) -> float:
    """``L1 + L2 + h/4 (||grad L1||^2 + ||grad L2||^2)``."""
    return single_task_modified_loss_value(L1, h, point) + single_task_modified_loss_value(L2, h, point)


def continual_modified_field(L1: ScalarLoss, L2: ScalarLoss, h: float,
                             include_bracket: bool = True) -> VectorField:
    """Modified field for the composition of an L1 step then an L2 step.

    ``-grad L1 - grad L2 - h (igr1 + igr2) + h/2 [grad L1, grad L2]``; the
    bracket term is dropped when ``include_bracket`` is false.
    """
    _check_h(h)
    if L1.dimension != L2.dimension:
        raise DimensionError("task losses have different dimensions")

    def fn(x):
        _, g1 = value_and_grad(L1, x)
        _, g2 = value_and_grad(L2, x)
        H1g1 = hvp(L1, x, g1)
        H2g2 = hvp(L2, x, g2)
        out = -g1 - g2 - 0.5 * h * (H1g1 + H2g2)
        if include_bracket:
            # [grad L1, grad L2] = H2 g1 - H1 g2
            out = out + 0.5 * h * (hvp(L2, x, g1) - hvp(L1, x, g2))
        return out

    return VectorField(L1.dimension, fn, name="continual_modified")


SETTINGS = ("single", "multitask", "continual")


@dataclass(frozen=True)
class ModifiedFlowSpec:
    """Which modified right-hand side to build and with what coefficients."""

    setting: str
    h: float
    alpha: float = 1.0
    beta: float = 1.0
    include_bracket: bool = True

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}; expected one of {SETTINGS}")
        _check_h(self.h)
        if self.setting == "multitask" and not (self.alpha > 0 and self.beta > 0):
            raise ValueError("task weights must be positive")

    def build(self, losses, partition=None) -> VectorField:
        if self.setting == "single":
            return single_task_modified_field(losses[0], self.h)
        if self.setting == "multitask":
            return multitask_modified_field(losses[0], losses[1], self.alpha, self.beta, self.h, partition)
        return continual_modified_field(losses[0], losses[1], self.h, self.include_bracket)


def plain_descent_field(setting, losses, alpha=1.0, beta=1.0) -> VectorField:
    """Unmodified gradient flow matching each setting's discrete rule."""
    if setting == "single":
        return -grad_field(losses[0])
    if setting == "multitask":
        return -(grad_field(losses[0]).scaled(alpha) + grad_field(losses[1]).scaled(beta))
    if setting == "continual":
        return -(grad_field(losses[0]) + grad_field(losses[1]))
    raise ValueError(f"unknown setting {setting!r}")
