"""Drift between one discrete update and a reference flow, and log-log
order fits over a sweep of learning rates."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .autodiff import as_vector, partition_of
from .fields import (
    SETTINGS,
    ModifiedFlowSpec,
    grad_field,
    lie_bracket,
    multitask_conflict,
    plain_descent_field,
)
from .flows import IntegratorConfig, integrate
from .optim import joint_multitask_step, sequential_pair_step, sgd_step

FLOW_KINDS = ("plain_gf", "modified_order1")
EPS = np.finfo(float).eps
#: records below ``FLOOR_FACTOR * eps * ||theta0||`` are rounding noise
FLOOR_FACTOR = 1e3
DEFAULT_H_LIST = tuple(float(h) for h in np.geomspace(0.0125, 0.2, 8))


@dataclass
class DriftRecord:
    h: float
    drift: float
    flow_kind: str
    setting: str
    include_bracket: bool
    floor_flagged: bool = False


@dataclass
class OrderFitReport:
    slope: float
    intercept: float
    r_squared: float
    records: List[DriftRecord] = field(default_factory=list)
    floor_flagged: bool = False

    def within(self, order, band, min_r_squared=0.99):
        """True when the fitted slope is ``order +- band`` with a good fit."""
        return (not self.floor_flagged and abs(self.slope - order) <= band
                and self.r_squared >= min_r_squared)


def discrete_update(setting, losses, theta0, h, alpha=1.0, beta=1.0, partition=None):
    if setting == "single":
        return sgd_step(losses[0], theta0, h)
    if setting == "multitask":
        return joint_multitask_step(losses[0], losses[1], alpha, beta, theta0, h, partition)
    if setting == "continual":
        return sequential_pair_step(losses[0], losses[1], theta0, h)[1]
    raise ValueError(f"unknown setting {setting!r}; expected one of {SETTINGS}")


def reference_field(setting, losses, h, flow_kind, include_bracket=True, alpha=1.0, beta=1.0, partition=None):
    if flow_kind == "plain_gf":
        return plain_descent_field(setting, losses, alpha, beta)
    if flow_kind == "modified_order1":
        spec = ModifiedFlowSpec(setting, h, alpha, beta, include_bracket)
        return spec.build(losses, partition)
    raise ValueError(f"unknown flow kind {flow_kind!r}; expected one of {FLOW_KINDS}")


def measure_drift(setting, losses, theta0, h, flow_kind="modified_order1", include_bracket=True,
                  cfg: IntegratorConfig | None = None, alpha=1.0, beta=1.0, partition=None) -> DriftRecord:
    """Distance after one update (a pair of updates for ``continual``)
    between the discrete iterate and the chosen flow run for time ``h``."""
    if not h > 0:
        raise ValueError(f"learning rate must be positive, got {h}")
    part = partition_of(partition, theta0)
    x0 = as_vector(theta0, losses[0].dimension, "theta0")
    discrete = discrete_update(setting, losses, x0, h, alpha, beta, part)
    field_ = reference_field(setting, losses, h, flow_kind, include_bracket, alpha, beta, part)
    flowed = integrate(field_, x0, h, cfg)
    drift = float(np.linalg.norm(flowed - discrete))
    floor = FLOOR_FACTOR * EPS * float(np.linalg.norm(x0))
    return DriftRecord(float(h), drift, flow_kind, setting, bool(include_bracket), drift < floor)


def fit_order(records: Sequence[DriftRecord]) -> OrderFitReport:
    """Least-squares line through ``(log h, log drift)`` of unflagged records."""
    records = list(records)
    if len({r.h for r in records}) < 4:
        raise ValueError("need at least 4 distinct step sizes")
    usable = [r for r in records if not r.floor_flagged and r.drift > 0]
    if len(usable) < 2:
        return OrderFitReport(float("nan"), float("nan"), float("nan"), records, True)
    x = np.log([r.h for r in usable])
    y = np.log([r.drift for r in usable])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return OrderFitReport(float(slope), float(intercept), r2, records, False)


def order_sweep(setting, losses, theta0, h_list=DEFAULT_H_LIST, flow_kind="modified_order1",
                include_bracket=True, cfg: IntegratorConfig | None = None, alpha=1.0, beta=1.0,
                partition=None) -> OrderFitReport:
    """Measure drift at every ``h`` and fit the log-log slope."""
    hs = sorted({float(h) for h in h_list})
    if len(hs) < 4:
        raise ValueError("h_list needs at least 4 distinct values")
    records = [
        measure_drift(setting, losses, theta0, h, flow_kind, include_bracket, cfg, alpha, beta, partition)
        for h in hs
    ]
    return fit_order(records)


def bracket_trace(L1, L2, trace) -> List[float]:
    """``||[grad L1, grad L2](theta_k)||`` at every recorded point."""
    F, G = grad_field(L1), grad_field(L2)
    return [float(np.linalg.norm(lie_bracket(F, G, x))) for x in trace.points]


def conflict_trace(L1, L2, trace, partition) -> List[float]:
    """Shared-block gradient inner product at every recorded point."""
    return [multitask_conflict(L1, L2, x, partition) for x in trace.points]
