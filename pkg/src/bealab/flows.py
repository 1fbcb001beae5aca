"""Reference integration of vector-field flows.

The default is Dormand-Prince 5(4) with a PI step-size controller; a
fixed-step classical RK4 is kept as a fallback and as a cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import as_vector
from .errors import IntegrationError, NonFiniteError

METHODS = ("rk45_adaptive", "rk4_fixed")

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
# PI gains for a 5(4) pair
_BETA = 0.04
_ALPHA = 0.2 - 0.75 * _BETA


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45_adaptive"
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_steps: int = 100_000
    substeps: int = 64

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown integrator {self.method!r}; expected one of {METHODS}")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.substeps < 1 or self.max_steps < 1:
            raise ValueError("substeps and max_steps must be at least 1")

    @property
    def tolerance(self):
        return max(self.abs_tol, self.rel_tol)


def _field_fn(field):
    return field.eval if hasattr(field, "eval") else field


def _finite(y, t):
    if not np.all(np.isfinite(y)):
        raise NonFiniteError(f"flow state became non-finite at t={t:g}")
    return y


def _rk4(f, y, T, n):
    dt = T / n
    for i in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = _finite(y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4), (i + 1) * dt)
    return y


def _err_norm(err, y, y_new, cfg):
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(f, y, f0, T, cfg):
    # Hairer, Norsett & Wanner II.4 starting-step heuristic
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, T)
    f1 = f(y + h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, T)


def _dopri(f, y, T, cfg):
    t = 0.0
    k = [None] * 7
    k[0] = f(y)
    dt = _initial_step(f, y, k[0], T, cfg)
    err_prev = 1.0
    attempts = 0
    while t < T:
        if attempts >= cfg.max_steps:
            raise IntegrationError(f"exceeded {cfg.max_steps} steps at t={t:g} of {T:g}")
        attempts += 1
        last = t + dt >= T * (1 - 1e-14)
        if last:
            dt = T - t
        for s in range(1, 7):
            ys = y + dt * sum(a * k[j] for j, a in enumerate(_A[s]) if a != 0.0)
            k[s] = f(ys)
        # the stage-7 point is the fifth-order solution (FSAL)
        y_new = y + dt * sum(b * k[j] for j, b in enumerate(_B5) if b != 0.0)
        err = dt * sum(e * k[j] for j, e in enumerate(_E))
        en = _err_norm(err, y, y_new, cfg)
        if not np.isfinite(en):
            raise NonFiniteError(f"flow state became non-finite near t={t:g}")
        if en <= 1.0:
            t = T if last else t + dt
            y = y_new
            k[0] = k[6]
            en = max(en, 1e-10)
            factor = SAFETY * en ** -_ALPHA * err_prev ** _BETA
            err_prev = en
            dt *= min(MAX_FACTOR, max(MIN_FACTOR, factor))
        else:
            dt *= max(MIN_FACTOR, SAFETY * en ** -_ALPHA)
    return y


def integrate(field, start, T: float, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """State at time ``T`` of ``x' = field(x)`` started from ``start``."""
    cfg = cfg or IntegratorConfig()
    if T < 0:
        raise ValueError(f"integration time must be nonnegative, got {T}")
    dim = getattr(field, "dimension", None)
    y = as_vector(start, dim, "start").copy()
    if T == 0:
        return y
    f = _field_fn(field)
    if cfg.method == "rk4_fixed":
        return _rk4(f, y, T, cfg.substeps)
    return _finite(_dopri(f, y, T, cfg), T)


def flow_commutator_defect(F, G, start, t: float, cfg: IntegratorConfig | None = None) -> float:
    """``|| flow_F^t(flow_G^t(x)) - flow_G^t(flow_F^t(x)) ||``."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    fg = integrate(F, integrate(G, start, t, cfg), t, cfg)
    gf = integrate(G, integrate(F, start, t, cfg), t, cfg)
    return float(np.linalg.norm(fg - gf))
