"""Statically registered invariant checks run by ``bealab selftest``."""
from __future__ import annotations

from typing import Callable, List, NamedTuple, Tuple

import numpy as np

from .autodiff import check_grad_fd, fd_jacobian, hvp, rel_err, value_and_grad
from .fields import grad_field, lie_bracket, multitask_conflict
from .flows import IntegratorConfig, flow_commutator_defect, integrate
from .models import (
    QuadraticSpec,
    commuting_pair,
    mlp_multitask_loss,
    noncommuting_pair,
    quadratic_loss,
)


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


CHECKS: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = []


def register(name):
    def deco(fn):
        CHECKS.append((name, fn))
        return fn
    return deco


def _rng():
    return np.random.default_rng(20240611)


@register("gradient_fd_quadratic")
def _fd_quadratic():
    A, _ = noncommuting_pair(4, 0)
    loss = quadratic_loss(A)
    err = max(check_grad_fd(loss, _rng().standard_normal(4)) for _ in range(5))
    return err <= 1e-9, f"max rel err {err:.2e} (tol 1e-9)"


@register("gradient_fd_mlp")
def _fd_mlp():
    prob = mlp_multitask_loss()
    err = max(check_grad_fd(loss, prob.init) for loss in (prob.loss1, prob.loss2))
    return err <= 1e-5, f"max rel err {err:.2e} (tol 1e-5)"


@register("hvp_symmetry_mlp")
def _hvp_sym():
    prob = mlp_multitask_loss()
    rng = _rng()
    worst = 0.0
    for _ in range(20):
        u, v = rng.standard_normal((2, prob.init.size))
        a = u @ hvp(prob.loss1, prob.init, v)
        b = v @ hvp(prob.loss1, prob.init, u)
        worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
    return worst <= 1e-8, f"max rel asymmetry {worst:.2e} (tol 1e-8)"


@register("bracket_antisymmetry")
def _antisym():
    prob = mlp_multitask_loss()
    F, G = grad_field(prob.loss1), grad_field(prob.loss2)
    ok = np.array_equal(lie_bracket(F, G, prob.init), -lie_bracket(G, F, prob.init))
    return ok, "exact under negation" if ok else "mismatch"


@register("bracket_quadratic_closed_form")
def _bracket_closed():
    A, B = noncommuting_pair(3, 0)
    x = _rng().standard_normal(3)
    got = lie_bracket(grad_field(quadratic_loss(A)), grad_field(quadratic_loss(B)), x)
    err = rel_err(got, (B.A @ A.A - A.A @ B.A) @ x)
    return err <= 1e-12, f"rel err {err:.2e} (tol 1e-12)"


@register("bracket_fd_jacobian_mlp")
def _bracket_fd():
    prob = mlp_multitask_loss()
    x = prob.init
    g1, g2 = prob.loss1.grad(x), prob.loss2.grad(x)
    J1, J2 = fd_jacobian(prob.loss1.grad, x), fd_jacobian(prob.loss2.grad, x)
    got = lie_bracket(grad_field(prob.loss1), grad_field(prob.loss2), x)
    err = rel_err(got, J2 @ g1 - J1 @ g2)
    return err <= 1e-4, f"rel err {err:.2e} (tol 1e-4)"


@register("norm_decomposition_mlp")
def _norm_decomp():
    prob = mlp_multitask_loss()
    rng = _rng()
    alpha, beta = 0.3, 1.7
    worst = 0.0
    for _ in range(10):
        w = prob.init + 0.3 * rng.standard_normal(prob.init.size)
        _, g1 = value_and_grad(prob.loss1, w)
        _, g2 = value_and_grad(prob.loss2, w)
        lhs = np.sum((alpha * g1 + beta * g2) ** 2)
        rhs = alpha ** 2 * g1 @ g1 + beta ** 2 * g2 @ g2 + 2 * alpha * beta * multitask_conflict(
            prob.loss1, prob.loss2, w, prob.partition)
        worst = max(worst, abs(lhs - rhs) / lhs)
    return worst <= 1e-10, f"max rel err {worst:.2e} (tol 1e-10)"


@register("integrator_closed_form")
def _integrator():
    loss = quadratic_loss(QuadraticSpec(np.diag([1.0, 2.0])))
    got = integrate(-grad_field(loss), [1.0, 1.0], 0.5)
    err = float(np.max(np.abs(got - np.exp([-0.5, -1.0]))))
    return err <= 1e-10, f"abs err {err:.2e} (tol 1e-10)"


@register("commuting_flow_defect")
def _commuting():
    cfg = IntegratorConfig()
    A, B = commuting_pair(3, 0)
    F, G = -grad_field(quadratic_loss(A)), -grad_field(quadratic_loss(B))
    defect = flow_commutator_defect(F, G, _rng().standard_normal(3), 0.1, cfg)
    return defect <= 10 * cfg.tolerance, f"defect {defect:.2e} (tol {10 * cfg.tolerance:.0e})"


def run_checks() -> List[CheckResult]:
    results = []
    for name, fn in CHECKS:
        try:
            passed, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed), detail))
    return results
