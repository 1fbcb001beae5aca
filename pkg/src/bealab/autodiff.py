"""Loss oracles: value, gradient and Hessian-vector product, plus a
central-difference gradient checker used as a test oracle."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import DimensionError, NonFiniteError, PartitionError

#: cube root of machine epsilon, the central-difference sweet spot
FD_STEP = float(np.cbrt(np.finfo(float).eps))


class Partition(NamedTuple):
    """Segment lengths of ``omega = [phi1 | phi2 | theta]``."""

    n_phi1: int
    n_phi2: int
    n_theta: int

    @property
    def size(self):
        return self.n_phi1 + self.n_phi2 + self.n_theta

    @property
    def phi1(self):
        return slice(0, self.n_phi1)

    @property
    def phi2(self):
        return slice(self.n_phi1, self.n_phi1 + self.n_phi2)

    @property
    def theta(self):
        return slice(self.n_phi1 + self.n_phi2, self.size)

    def head(self, task):
        return self.phi1 if task == 1 else self.phi2

    def embed_theta(self, block):
        """Place a shared-block vector into a full-length zero vector."""
        out = np.zeros(self.size)
        out[self.theta] = block
        return out

    def validate(self, n=None):
        if min(self) < 0:
            raise PartitionError(f"negative segment length in {tuple(self)}")
        if n is not None and self.size != n:
            raise PartitionError(f"partition {tuple(self)} sums to {self.size}, expected {n}")
        return self


@dataclass
class ParamVector:
    """Flat parameter vector with an optional head/head/shared partition."""

    values: np.ndarray
    partition: Optional[Partition] = None

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteError("parameter vector has non-finite entries")
        if self.partition is not None:
            self.partition = Partition(*self.partition).validate(self.values.size)

    @property
    def dimension(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def as_vector(x, n=None, name="point"):
    """Coerce ``x`` to a 1-d float array, checking its length against ``n``."""
    arr = np.asarray(x.values if isinstance(x, ParamVector) else x, dtype=float)
    arr = arr.reshape(-1)
    if n is not None and arr.size != n:
        raise DimensionError(f"{name} has dimension {arr.size}, expected {n}")
    return arr


def partition_of(partition, point=None):
    """``partition`` if given, else the partition carried by a ParamVector."""
    if partition is None and isinstance(point, ParamVector):
        partition = point.partition
    return None if partition is None else Partition(*partition)


class ScalarLoss:
    """Twice-differentiable scalar objective on R^n.

    Subclasses implement :meth:`value_and_grad` and :meth:`hvp` on plain
    arrays of length :attr:`dimension`. Use the module-level functions for
    checked access.
    """

    dimension: int

    def value(self, x):
        return self.value_and_grad(as_vector(x, self.dimension))[0]

    def grad(self, x):
        return self.value_and_grad(as_vector(x, self.dimension))[1]

    def value_and_grad(self, x):
        raise NotImplementedError

    def hvp(self, x, v):
        raise NotImplementedError

    def __add__(self, other):
        return WeightedSumLoss([self, other], [1.0, 1.0])

    def __mul__(self, scale):
        return WeightedSumLoss([self], [float(scale)])

    __rmul__ = __mul__


class WeightedSumLoss(ScalarLoss):
    """``sum_i w_i L_i``; gradient terms are accumulated in list order."""

    def __init__(self, losses: Sequence[ScalarLoss], weights: Sequence[float]):
        if len(losses) != len(weights) or not losses:
            raise ValueError("need one weight per loss")
        dims = {loss.dimension for loss in losses}
        if len(dims) != 1:
            raise DimensionError(f"losses have differing dimensions {sorted(dims)}")
        self.losses = list(losses)
        self.weights = [float(w) for w in weights]
        self.dimension = dims.pop()

    def value_and_grad(self, x):
        total, grad = 0.0, np.zeros(self.dimension)
        for w, loss in zip(self.weights, self.losses):
            f, g = loss.value_and_grad(x)
            total += w * f
            grad += w * g
        return total, grad

    def hvp(self, x, v):
        out = np.zeros(self.dimension)
        for w, loss in zip(self.weights, self.losses):
            out += w * loss.hvp(x, v)
        return out


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{what} is not finite")
    return arr


def value_and_grad(loss: ScalarLoss, point):
    """Checked ``(L(x), grad L(x))``."""
    x = as_vector(point, loss.dimension)
    f, g = loss.value_and_grad(x)
    _check_finite(np.asarray(f), "loss value")
    _check_finite(g, "gradient")
    return float(f), np.asarray(g, dtype=float)


def hvp(loss: ScalarLoss, point, direction):
    """Checked Hessian-vector product ``H(x) v``."""
    x = as_vector(point, loss.dimension)
    v = as_vector(direction, loss.dimension, "direction")
    return _check_finite(np.asarray(loss.hvp(x, v), dtype=float), "Hessian-vector product")


def fd_step_for(point):
    """Central-difference step scaled to the parameter magnitude."""
    scale = max(1.0, float(np.max(np.abs(point)))) if np.size(point) else 1.0
    return scale * FD_STEP


def fd_gradient(fun, x, step=None):
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    step = fd_step_for(x) if step is None else step
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        out[i] = (fun(x + e) - fun(x - e)) / (2 * step)
    return out


def fd_jacobian(fun, x, step=None):
    """Central-difference Jacobian of a vector function, columns by coordinate."""
    x = np.asarray(x, dtype=float)
    step = fd_step_for(x) if step is None else step
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * step))
    return np.stack(cols, axis=1)


def fd_directional(fun, x, v, step=None):
    """Central-difference derivative of ``fun`` along ``v``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        return np.zeros_like(np.asarray(fun(x), dtype=float))
    step = (fd_step_for(x) if step is None else step) / nv
    return (np.asarray(fun(x + step * v)) - np.asarray(fun(x - step * v))) / (2 * step)


def check_grad_fd(loss: ScalarLoss, point, fd_step: float | None = None) -> float:
    """Largest ``|analytic - FD| / max(1, |analytic|)`` over coordinates."""
    if fd_step is not None and fd_step <= 0:
        raise ValueError("fd_step must be positive")
    x = as_vector(point, loss.dimension)
    _, g = value_and_grad(loss, x)
    fd = fd_gradient(loss.value, x, fd_step)
    return float(np.max(np.abs(g - fd) / np.maximum(1.0, np.abs(g)), initial=0.0))


def rel_err(a, b):
    """``|a - b| / max(|b|, tiny)`` for arrays or scalars (norm-wise)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    denom = max(float(np.linalg.norm(b)), np.finfo(float).tiny)
    return float(np.linalg.norm(a - b)) / denom
