"""Test problems: quadratics with controlled commutators and a small
shared-trunk network with two regression heads."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tape as _tape
from .autodiff import Partition, ScalarLoss, as_vector


@dataclass
class QuadraticSpec:
    """``0.5 x'Ax - b'x + c`` with symmetric PSD ``A``."""

    A: np.ndarray
    b: Optional[np.ndarray] = None
    c: float = 0.0

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {self.A.shape}")
        self.b = np.zeros(n) if self.b is None else as_vector(self.b, n, "b")
        if np.max(np.abs(self.A - self.A.T), initial=0.0) > 1e-14:
            raise ValueError("A is not symmetric")
        if n and np.linalg.eigvalsh(self.A).min() < -1e-12 * max(1.0, np.abs(self.A).max()):
            raise ValueError("A is not positive semidefinite")


class QuadraticLoss(ScalarLoss):
    """Exact oracles for a :class:`QuadraticSpec`."""

    def __init__(self, spec: QuadraticSpec):
        self.spec = spec
        self.A = spec.A
        self.b = spec.b
        self.dimension = spec.A.shape[0]

    def value_and_grad(self, x):
        Ax = self.A @ x
        return 0.5 * x @ Ax - self.b @ x + self.spec.c, Ax - self.b

    def hvp(self, x, v):
        return self.A @ v


def quadratic_loss(spec: QuadraticSpec) -> QuadraticLoss:
    return QuadraticLoss(spec)


def _orthogonal(n, rng):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _sym(M):
    return 0.5 * (M + M.T)


def commuting_pair(n: int, seed: int):
    """Two SPD matrices sharing a random eigenbasis, hence ``AB = BA``.

    The returned matrices are symmetrized after assembly so that the
    validation in :class:`QuadraticSpec` holds exactly.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng(seed)
    Q = _orthogonal(n, rng)
    lam1 = rng.uniform(0.1, 1.0, n)
    lam2 = rng.uniform(0.1, 1.0, n)
    A = _sym((Q * lam1) @ Q.T)
    B = _sym((Q * lam2) @ Q.T)
    return QuadraticSpec(A), QuadraticSpec(B)


def noncommuting_pair(n: int, seed: int, commutator_scale: float = 0.4, max_tries: int = 1000):
    """Two SPD matrices with ``||AB - BA||_F >= commutator_scale``.

    ``A`` is diagonal with eigenvalues spread over ``[0.1, 1]``; ``B`` has
    eigenvalues drawn from the same range and a random eigenbasis. Draws are
    repeated with derived seeds until the bound is met. For ``n == 2`` the
    commutator is a nonzero multiple of a rotation, so the bracket of the
    gradient fields vanishes only at the origin.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    A = np.diag(np.linspace(0.1, 1.0, n))
    for attempt in range(max_tries):
        rng = np.random.default_rng([seed, attempt])
        Q = _orthogonal(n, rng)
        B = _sym((Q * rng.uniform(0.1, 1.0, n)) @ Q.T)
        if np.linalg.norm(A @ B - B @ A) >= commutator_scale:
            return QuadraticSpec(A), QuadraticSpec(B)
    raise RuntimeError(f"no pair with commutator norm >= {commutator_scale} after {max_tries} draws")


def block_quadratic_tasks(partition, seed: int):
    """Two random SPD quadratics on ``omega = [phi1 | phi2 | theta]``.

    Task ``i`` only touches ``(phi_i, theta)``; each has a random offset so
    the gradients are nonzero at the origin.
    """
    part = Partition(*partition).validate()
    rng = np.random.default_rng(seed)
    n = part.size
    specs = []
    for task in (1, 2):
        idx = np.r_[np.arange(n)[part.head(task)], np.arange(n)[part.theta]]
        k = idx.size
        Q = _orthogonal(k, rng)
        local = _sym((Q * rng.uniform(0.5, 1.5, k)) @ Q.T)
        A = np.zeros((n, n))
        A[np.ix_(idx, idx)] = local
        b = np.zeros(n)
        b[idx] = rng.standard_normal(k)
        specs.append(QuadraticSpec(A, b))
    return specs[0], specs[1], part


@dataclass
class MlpSpec:
    """Shared tanh trunk with two linear heads on synthetic regression data.

    ``trunk_widths`` lists the input width followed by each trunk layer
    width; every trunk layer applies tanh. Heads map the last trunk width
    to ``head_width`` outputs.
    """

    trunk_widths: tuple = (4, 8, 4)
    head_width: int = 1
    n_samples: int = 32
    data_seed: int = 0
    init_seed: int = 1
    target_scale: float = 1.0

    def __post_init__(self):
        self.trunk_widths = tuple(int(w) for w in self.trunk_widths)
        if len(self.trunk_widths) < 2 or min(self.trunk_widths) < 1:
            raise ValueError(f"invalid trunk widths {self.trunk_widths}")
        if self.head_width < 1 or self.n_samples < 1:
            raise ValueError("head width and sample count must be positive")


class _Layout:
    """Offsets of every weight block inside the flat ``[phi1|phi2|theta]`` vector."""

    def __init__(self, spec: MlpSpec):
        widths = spec.trunk_widths
        head_shapes = [(widths[-1], spec.head_width), (spec.head_width,)]
        trunk_shapes = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            trunk_shapes += [(fan_in, fan_out), (fan_out,)]
        self.blocks = {}
        offset = 0
        for name, shapes in (("phi1", head_shapes), ("phi2", head_shapes), ("theta", trunk_shapes)):
            entries = []
            for shape in shapes:
                size = int(np.prod(shape))
                entries.append((offset, shape))
                offset += size
            self.blocks[name] = entries
        n_head = sum(int(np.prod(s)) for s in head_shapes)
        self.partition = Partition(n_head, n_head, offset - 2 * n_head)

    def unpack(self, tape, x, v, names):
        out = {}
        for name in names:
            out[name] = [
                tape.variable(x[o:o + int(np.prod(s))].reshape(s), v[o:o + int(np.prod(s))].reshape(s))
                for o, s in self.blocks[name]
            ]
        return out


def _trunk(tape, X, params):
    h = tape.constant(X)
    for W, b in zip(params[0::2], params[1::2]):
        h = tape.tanh(h @ W + b)
    return h


def _trunk_numpy(X, params):
    h = X
    for W, b in zip(params[0::2], params[1::2]):
        h = np.tanh(h @ W + b)
    return h


class MlpTaskLoss(ScalarLoss):
    """Half mean squared error of one head over the full ``omega`` vector.

    Gradients and HVPs come from the dual-number tape, so one backward
    sweep yields both.
    """

    def __init__(self, layout: _Layout, task: int, X, Y):
        self.layout = layout
        self.task = task
        self.head = "phi1" if task == 1 else "phi2"
        self.X = X
        self.Y = Y
        self.dimension = layout.partition.size

    def _sweep(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        tp = _tape.Tape()
        p = self.layout.unpack(tp, x, v, (self.head, "theta"))
        V, c = p[self.head]
        pred = _trunk(tp, self.X, p["theta"]) @ V + c
        r = pred - self.Y
        loss = tp.mul(tp.mean(r * r), 0.5)
        leaves = p[self.head] + p["theta"]
        offsets = [o for o, _ in self.layout.blocks[self.head] + self.layout.blocks["theta"]]
        grad = np.zeros(self.dimension)
        tang = np.zeros(self.dimension)
        for o, g in zip(offsets, tp.backward(loss, leaves)):
            grad[o:o + g.val.size] = g.val.reshape(-1)
            tang[o:o + g.val.size] = g.tan.reshape(-1)
        return float(loss.value.val), grad, tang

    def value_and_grad(self, x):
        f, g, _ = self._sweep(x, np.zeros(self.dimension))
        return f, g

    def hvp(self, x, v):
        return self._sweep(x, v)[2]

    def predict(self, x):
        """Head output on the training inputs (plain numpy, no tape)."""
        x = np.asarray(x, dtype=float)
        blocks = self.layout.blocks
        theta = [x[o:o + int(np.prod(s))].reshape(s) for o, s in blocks["theta"]]
        V, c = (x[o:o + int(np.prod(s))].reshape(s) for o, s in blocks[self.head])
        return _trunk_numpy(self.X, theta) @ V + c


@dataclass
class MlpProblem:
    loss1: MlpTaskLoss
    loss2: MlpTaskLoss
    partition: Partition
    init: np.ndarray = field(repr=False)


def mlp_multitask_loss(spec: Optional[MlpSpec] = None, identical_tasks: bool = False) -> MlpProblem:
    """Build the two task losses, the partition and a seeded initial point.

    Inputs are standard normal; targets come from a random teacher trunk
    followed by a different random readout per task (the same readout and
    data for both tasks when ``identical_tasks``).
    """
    spec = spec or MlpSpec()
    layout = _Layout(spec)
    widths = spec.trunk_widths
    rng = np.random.default_rng(spec.data_seed)
    X = rng.standard_normal((spec.n_samples, widths[0]))
    teacher = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        teacher += [rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in), 0.1 * rng.standard_normal(fan_out)]
    feats = _trunk_numpy(X, teacher)
    readouts = [rng.standard_normal((widths[-1], spec.head_width)) / np.sqrt(widths[-1]) for _ in range(2)]
    if identical_tasks:
        readouts[1] = readouts[0]
    Y1 = spec.target_scale * feats @ readouts[0]
    Y2 = spec.target_scale * np.sin(feats @ readouts[1]) if not identical_tasks else Y1.copy()

    init_rng = np.random.default_rng(spec.init_seed)
    init = np.zeros(layout.partition.size)
    for name in ("phi1", "phi2", "theta"):
        for o, s in layout.blocks[name]:
            size = int(np.prod(s))
            fan_in = s[0] if len(s) == 2 else 1
            scale = 1.0 / np.sqrt(fan_in) if len(s) == 2 else 0.1
            init[o:o + size] = scale * init_rng.standard_normal(size)
    if identical_tasks:
        part = layout.partition
        init[part.phi2] = init[part.phi1]
    return MlpProblem(MlpTaskLoss(layout, 1, X, Y1), MlpTaskLoss(layout, 2, X, Y2), layout.partition, init)
