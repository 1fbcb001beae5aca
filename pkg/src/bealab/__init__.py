"""Backward-error-analysis toolkit: modified flows of SGD for single-task,
multitask and continual training, Lie brackets of gradient fields, and
empirical drift-order verification on small problems."""
from .analysis import (
    DriftRecord,
    OrderFitReport,
    bracket_trace,
    conflict_trace,
    fit_order,
    measure_drift,
    order_sweep,
)
from .autodiff import (
    ParamVector,
    Partition,
    ScalarLoss,
    WeightedSumLoss,
    check_grad_fd,
    hvp,
    value_and_grad,
)
from .fields import (
    ModifiedFlowSpec,
    VectorField,
    continual_modified_field,
    grad_field,
    igr_grad,
    lie_bracket,
    multitask_conflict,
    multitask_modified_field,
    multitask_modified_loss_value,
    single_task_modified_field,
)
from .flows import IntegratorConfig, flow_commutator_defect, integrate
from .models import (
    MlpSpec,
    QuadraticSpec,
    block_quadratic_tasks,
    commuting_pair,
    mlp_multitask_loss,
    noncommuting_pair,
    quadratic_loss,
)
from .optim import TrajectoryTrace, joint_multitask_step, run_training, sequential_pair_step, sgd_step

__version__ = "0.1.0"
