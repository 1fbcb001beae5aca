import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bealab import (
    ModifiedFlowSpec,
    commuting_pair,
    continual_modified_field,
    grad_field,
    igr_grad,
    lie_bracket,
    multitask_conflict,
    multitask_modified_field,
    multitask_modified_loss_value,
    noncommuting_pair,
    quadratic_loss,
    single_task_modified_field,
    value_and_grad,
)
from bealab.autodiff import Partition, ParamVector, fd_gradient, fd_jacobian, rel_err
from bealab.errors import DimensionError, PartitionError
from bealab.fields import continual_modified_loss_value, linear_field, single_task_modified_loss_value

from conftest import quad

finite = st.floats(-10, 10, allow_nan=False)


def opposing_scalars():
    return quad([[1.0]], [1.0], 0.5), quad([[1.0]], [-1.0], 0.5)


# --- grad_field -----------------------------------------------------------

def test_grad_field_linear(rng):
    A = np.diag([1.0, 2.0])
    F = grad_field(quad(A))
    x, v = rng.standard_normal((2, 2))
    np.testing.assert_array_equal(F(x), A @ x)
    np.testing.assert_array_equal(F.jvp(x, v), A @ v)


def test_grad_field_of_constant_is_zero(rng):
    F = grad_field(quad(np.zeros((3, 3)), None, 4.0))
    assert not np.any(F(rng.standard_normal(3)))


def test_grad_field_matches_value_and_grad(mlp):
    np.testing.assert_array_equal(grad_field(mlp.loss1)(mlp.init), value_and_grad(mlp.loss1, mlp.init)[1])


# --- lie_bracket ----------------------------------------------------------

def test_bracket_with_itself_vanishes(mlp):
    F = grad_field(mlp.loss1)
    assert not np.any(lie_bracket(F, F, mlp.init))


def test_bracket_worked_example():
    A = np.diag([1.0, 2.0])
    B = np.array([[0.0, 1.0], [1.0, 0.0]])
    x = np.array([1.0, 1.0])
    got = lie_bracket(linear_field(A), linear_field(B), x)
    # explicit matrix arithmetic
    np.testing.assert_allclose(got, (B @ A - A @ B) @ x, rtol=0, atol=0)
    np.testing.assert_allclose(got, [1.0, -1.0])
    # finite-difference Jacobians of the two fields
    JA = fd_jacobian(lambda y: A @ y, x)
    JB = fd_jacobian(lambda y: B @ y, x)
    np.testing.assert_allclose(JB @ (A @ x) - JA @ (B @ x), [1.0, -1.0], atol=1e-9)


def test_bracket_commuting_pair_vanishes(rng):
    A, B = commuting_pair(4, 3)
    F, G = grad_field(quadratic_loss(A)), grad_field(quadratic_loss(B))
    for _ in range(20):
        x = rng.standard_normal(4)
        assert np.linalg.norm(lie_bracket(F, G, x)) <= 1e-12 * np.linalg.norm(x) * 4


def test_bracket_dimension_mismatch():
    with pytest.raises(DimensionError):
        lie_bracket(linear_field(np.eye(2)), linear_field(np.eye(3)), [0.0, 0.0])


def test_bracket_antisymmetry_mlp(mlp, rng):
    F, G = grad_field(mlp.loss1), grad_field(mlp.loss2)
    for _ in range(100):
        x = mlp.init + 0.5 * rng.standard_normal(mlp.init.size)
        np.testing.assert_array_equal(lie_bracket(F, G, x), -lie_bracket(G, F, x))


@settings(max_examples=100, deadline=None)
@given(arrays(float, 3, elements=finite), st.integers(0, 2**16))
def test_bracket_quadratic_closed_form(x, seed):
    A, B = noncommuting_pair(3, seed, 0.0)
    got = lie_bracket(grad_field(quadratic_loss(A)), grad_field(quadratic_loss(B)), x)
    want = (B.A @ A.A - A.A @ B.A) @ x
    assert np.linalg.norm(got - want) <= 1e-12 * max(np.linalg.norm(want), np.linalg.norm(x))
    np.testing.assert_array_equal(
        got, -lie_bracket(grad_field(quadratic_loss(B)), grad_field(quadratic_loss(A)), x))


@settings(max_examples=100, deadline=None)
@given(arrays(float, 3, elements=finite), finite, finite)
def test_bracket_bilinearity(x, a, b):
    A1, B1 = noncommuting_pair(3, 1, 0.0)
    A2, _ = noncommuting_pair(3, 2, 0.0)
    F1, F2, G = (grad_field(quadratic_loss(s)) for s in (A1, A2, B1))
    lhs = lie_bracket(F1.scaled(a) + F2.scaled(b), G, x)
    rhs = a * lie_bracket(F1, G, x) + b * lie_bracket(F2, G, x)
    scale = max(1.0, abs(a) + abs(b)) * max(1.0, np.linalg.norm(x))
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * scale


def _bracket_matrix(F, G, n):
    # a bracket of linear fields is linear; read off its matrix column by column
    return np.stack([lie_bracket(F, G, e) for e in np.eye(n)], axis=1)


def test_jacobi_identity_linear_fields(rng):
    mats = [rng.standard_normal((3, 3)) for _ in range(3)]
    F, G, H = (linear_field(M) for M in mats)
    FG = linear_field(_bracket_matrix(F, G, 3))
    GH = linear_field(_bracket_matrix(G, H, 3))
    HF = linear_field(_bracket_matrix(H, F, 3))
    x = rng.standard_normal(3)
    total = lie_bracket(FG, H, x) + lie_bracket(GH, F, x) + lie_bracket(HF, G, x)
    assert np.linalg.norm(total) <= 1e-12


def test_bracket_mlp_matches_fd_jacobians(mlp):
    x = mlp.init
    g1, g2 = mlp.loss1.grad(x), mlp.loss2.grad(x)
    J1, J2 = fd_jacobian(mlp.loss1.grad, x), fd_jacobian(mlp.loss2.grad, x)
    got = lie_bracket(grad_field(mlp.loss1), grad_field(mlp.loss2), x)
    assert rel_err(got, J2 @ g1 - J1 @ g2) <= 1e-4


def test_descent_fields_have_same_bracket(mlp):
    F, G = grad_field(mlp.loss1), grad_field(mlp.loss2)
    np.testing.assert_allclose(lie_bracket(-F, -G, mlp.init), lie_bracket(F, G, mlp.init), rtol=1e-14, atol=0)


# --- igr_grad / single-task modified field --------------------------------

def test_igr_grad_scalar():
    assert igr_grad(quad([[1.0]]), [2.0]) == pytest.approx([1.0])


def test_igr_grad_quadratic(rng):
    M = rng.standard_normal((4, 4))
    A = M @ M.T
    x = rng.standard_normal(4)
    assert rel_err(igr_grad(quad(A), x), 0.5 * A.T @ A @ x) <= 1e-13


def test_igr_grad_mlp_matches_fd(mlp):
    def quarter_sq_grad(x):
        g = mlp.loss1.grad(x)
        return 0.25 * g @ g

    assert rel_err(igr_grad(mlp.loss1, mlp.init), fd_gradient(quarter_sq_grad, mlp.init)) <= 1e-4


def test_single_task_modified_field_values(rng):
    assert single_task_modified_field(quad([[1.0]]), 0.1)([1.0]) == pytest.approx([-1.05], rel=1e-15)
    M = rng.standard_normal((3, 3))
    A = M @ M.T
    x = rng.standard_normal(3)
    np.testing.assert_array_equal(single_task_modified_field(quad(A), 0.0)(x), -grad_field(quad(A))(x))
    want = -(A + 0.05 * A @ A) @ x
    assert rel_err(single_task_modified_field(quad(A), 0.1)(x), want) <= 1e-13
    with pytest.raises(ValueError):
        single_task_modified_field(quad(A), -0.1)


def test_single_task_field_is_gradient_of_modified_loss(mlp):
    h = 0.1
    fd = fd_gradient(lambda x: single_task_modified_loss_value(mlp.loss1, h, x), mlp.init)
    assert rel_err(single_task_modified_field(mlp.loss1, h)(mlp.init), -fd) <= 1e-5


# --- multitask ------------------------------------------------------------

def test_multitask_reduces_to_single_task(rng):
    M = rng.standard_normal((3, 3))
    L = quad(M @ M.T, rng.standard_normal(3))
    part = Partition(0, 0, 3)
    two_L = 2 * L
    for _ in range(10):
        x = rng.standard_normal(3)
        a = multitask_modified_field(L, L, 1.0, 1.0, 0.1, part)(x)
        b = single_task_modified_field(two_L, 0.1)(x)
        assert np.linalg.norm(a - b) <= 1e-12


def test_multitask_h_zero_is_plain(mlp):
    got = multitask_modified_field(mlp.loss1, mlp.loss2, 0.3, 1.7, 0.0, mlp.partition)(mlp.init)
    want = -(0.3 * mlp.loss1.grad(mlp.init) + 1.7 * mlp.loss2.grad(mlp.init))
    np.testing.assert_array_equal(got, want)


def test_multitask_loss_value_opposing_scalars():
    L1, L2 = opposing_scalars()
    part = Partition(0, 0, 1)
    # 0.5 + 0.5 + 0.025 + 0.025 - 0.05
    assert multitask_modified_loss_value(L1, L2, 1, 1, 0.1, [0.0], part) == pytest.approx(1.0, abs=1e-15)
    assert multitask_modified_loss_value(L1, L2, 1, 1, 0.0, [0.3], part) == pytest.approx(
        L1.value([0.3]) + L2.value([0.3]))


def test_multitask_field_opposing_scalars_fd():
    L1, L2 = opposing_scalars()
    part = Partition(0, 0, 1)
    x = np.array([0.0])
    fd = fd_gradient(lambda y: multitask_modified_loss_value(L1, L2, 1, 1, 0.1, y, part), x)
    got = multitask_modified_field(L1, L2, 1, 1, 0.1, part)(x)
    # the gradient is exactly zero at the symmetric point
    assert abs(got[0] + fd[0]) <= 1e-6 * max(1.0, abs(fd[0]))
    x = np.array([0.4])
    fd = fd_gradient(lambda y: multitask_modified_loss_value(L1, L2, 1, 1, 0.1, y, part), x)
    assert rel_err(multitask_modified_field(L1, L2, 1, 1, 0.1, part)(x), -fd) <= 1e-6


@pytest.mark.parametrize("alpha,beta", [(1.0, 1.0), (0.3, 1.7)])
def test_multitask_field_is_gradient_of_modified_loss(mlp, alpha, beta):
    h = 0.1
    fd = fd_gradient(
        lambda x: multitask_modified_loss_value(mlp.loss1, mlp.loss2, alpha, beta, h, x, mlp.partition),
        mlp.init)
    got = multitask_modified_field(mlp.loss1, mlp.loss2, alpha, beta, h, mlp.partition)(mlp.init)
    assert rel_err(got, -fd) <= 1e-5


def test_multitask_requires_partition(mlp):
    with pytest.raises(PartitionError):
        multitask_modified_field(mlp.loss1, mlp.loss2, 1, 1, 0.1, None)
    with pytest.raises(PartitionError):
        multitask_conflict(mlp.loss1, mlp.loss2, mlp.init)
    # a ParamVector can carry the partition
    omega = ParamVector(mlp.init, mlp.partition)
    assert np.isfinite(multitask_conflict(mlp.loss1, mlp.loss2, omega))


def test_multitask_detects_foreign_head_dependence(rng):
    # L1 touches coordinate 1, which the partition assigns to head 2
    L1 = quad(np.eye(3))
    L2 = quad(np.diag([0.0, 1.0, 1.0]))
    field = multitask_modified_field(L1, L2, 1, 1, 0.1, Partition(1, 1, 1))
    with pytest.raises(PartitionError):
        field(np.ones(3))


def test_norm_decomposition(mlp, rng):
    alpha, beta = 0.3, 1.7
    for _ in range(100):
        w = mlp.init + 0.5 * rng.standard_normal(mlp.init.size)
        g1, g2 = mlp.loss1.grad(w), mlp.loss2.grad(w)
        lhs = np.sum((alpha * g1 + beta * g2) ** 2)
        rhs = (alpha ** 2 * g1 @ g1 + beta ** 2 * g2 @ g2
               + 2 * alpha * beta * multitask_conflict(mlp.loss1, mlp.loss2, w, mlp.partition))
        assert abs(lhs - rhs) <= 1e-10 * lhs


def test_conflict_examples(mlp):
    L1, L2 = opposing_scalars()
    assert multitask_conflict(L1, L2, [0.0], Partition(0, 0, 1)) == -1.0
    assert multitask_conflict(L1, L1, [0.7], Partition(0, 0, 1)) >= 0
    g1, g2 = mlp.loss1.grad(mlp.init), mlp.loss2.grad(mlp.init)
    th = mlp.partition.theta
    assert multitask_conflict(mlp.loss1, mlp.loss2, mlp.init, mlp.partition) == float(g1[th] @ g2[th])


# --- continual ------------------------------------------------------------

def test_continual_commuting_bracket_irrelevant(rng):
    A, B = commuting_pair(3, 0)
    L1, L2 = quadratic_loss(A), quadratic_loss(B)
    on = continual_modified_field(L1, L2, 0.1, True)
    off = continual_modified_field(L1, L2, 0.1, False)
    for _ in range(20):
        x = rng.standard_normal(3)
        assert np.linalg.norm(on(x) - off(x)) <= 1e-12


@pytest.mark.parametrize("include", [True, False])
def test_continual_quadratic_closed_form(include, rng):
    A, B = (s.A for s in noncommuting_pair(3, 4, 0.0))
    x = rng.standard_normal(3)
    h = 0.1
    want = -(A + B) @ x - h / 2 * (A @ A + B @ B) @ x
    if include:
        want = want + h / 2 * (B @ A - A @ B) @ x
    assert rel_err(continual_modified_field(quad(A), quad(B), h, include)(x), want) <= 1e-13


def test_continual_identical_scalars():
    L = quad([[1.0]])
    assert continual_modified_field(L, L, 0.1)([1.0]) == pytest.approx([-2.1], rel=1e-15)


def test_continual_gradient_part_matches_fd(mlp):
    h = 0.1
    fd = fd_gradient(lambda x: continual_modified_loss_value(mlp.loss1, mlp.loss2, h, x), mlp.init)
    got = continual_modified_field(mlp.loss1, mlp.loss2, h, include_bracket=False)(mlp.init)
    assert rel_err(got, -fd) <= 1e-5


def test_continual_bracket_term_matches_fd_jacobians(mlp):
    h = 0.1
    x = mlp.init
    diff = (continual_modified_field(mlp.loss1, mlp.loss2, h, True)(x)
            - continual_modified_field(mlp.loss1, mlp.loss2, h, False)(x))
    J1, J2 = fd_jacobian(mlp.loss1.grad, x), fd_jacobian(mlp.loss2.grad, x)
    want = h / 2 * (J2 @ mlp.loss1.grad(x) - J1 @ mlp.loss2.grad(x))
    assert rel_err(diff, want) <= 1e-4


def test_continual_rejects_nonpositive_h():
    with pytest.raises(ValueError):
        continual_modified_field(quad([[1.0]]), quad([[1.0]]), 0.0)


def test_modified_flow_spec_validation(mlp):
    with pytest.raises(ValueError):
        ModifiedFlowSpec("single", 0.0)
    with pytest.raises(ValueError):
        ModifiedFlowSpec("multitask", 0.1, alpha=0.0)
    with pytest.raises(ValueError):
        ModifiedFlowSpec("bogus", 0.1)
    field = ModifiedFlowSpec("multitask", 0.1, 0.3, 1.7).build((mlp.loss1, mlp.loss2), mlp.partition)
    np.testing.assert_array_equal(
        field(mlp.init),
        multitask_modified_field(mlp.loss1, mlp.loss2, 0.3, 1.7, 0.1, mlp.partition)(mlp.init))


def test_modified_field_has_no_exact_jvp():
    with pytest.raises(NotImplementedError):
        single_task_modified_field(quad([[1.0]]), 0.1).jvp([1.0], [1.0])
