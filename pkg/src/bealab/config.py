"""Flat ``key = value`` experiment configuration and problem construction.

Blank lines and ``#`` comments are ignored. Every key has a default; the
fully resolved configuration is written next to each run's outputs.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .analysis import DEFAULT_H_LIST, FLOW_KINDS
from .autodiff import Partition, ScalarLoss
from .fields import SETTINGS
from .flows import IntegratorConfig, METHODS
from .models import (
    MlpSpec,
    QuadraticSpec,
    block_quadratic_tasks,
    commuting_pair,
    mlp_multitask_loss,
    noncommuting_pair,
    quadratic_loss,
)

PROBLEMS = (
    "quadratic_unit",
    "quadratic_commuting",
    "quadratic_noncommuting",
    "quadratic_identical",
    "scalar_opposing",
    "mlp",
    "mlp_identical",
)


class ConfigError(ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"config key {key!r}: {message}")


@dataclass
class ExperimentConfig:
    setting: str = "single"
    problem: str = "quadratic_unit"
    dim: int = 2
    h_list: Tuple[float, ...] = DEFAULT_H_LIST
    flow_kinds: Tuple[str, ...] = FLOW_KINDS
    alpha: float = 1.0
    beta: float = 1.0
    include_bracket: bool = True
    commutator_scale: float = 0.4
    n_phi1: int = 2
    n_phi2: int = 2
    n_theta: int = 3
    integrator: str = "rk45_adaptive"
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_steps: int = 100_000
    substeps: int = 64
    h: float = 0.05
    steps: int = 200
    seed: int = 0

    def __post_init__(self):
        checks = [
            ("setting", self.setting in SETTINGS, f"expected one of {SETTINGS}"),
            ("problem", self.problem in PROBLEMS, f"expected one of {PROBLEMS}"),
            ("dim", self.dim >= 2 or self.problem == "scalar_opposing", "must be at least 2"),
            ("h_list", len(set(self.h_list)) >= 4 and min(self.h_list) > 0,
             "need at least 4 distinct positive values"),
            ("flow_kinds", bool(self.flow_kinds) and set(self.flow_kinds) <= set(FLOW_KINDS),
             f"subset of {FLOW_KINDS}"),
            ("alpha", self.alpha > 0, "must be positive"),
            ("beta", self.beta > 0, "must be positive"),
            ("commutator_scale", self.commutator_scale >= 0, "must be nonnegative"),
            ("n_phi1", self.n_phi1 >= 0, "must be nonnegative"),
            ("n_phi2", self.n_phi2 >= 0, "must be nonnegative"),
            ("n_theta", self.n_theta >= 1, "must be positive"),
            ("integrator", self.integrator in METHODS, f"expected one of {METHODS}"),
            ("abs_tol", self.abs_tol > 0, "must be positive"),
            ("rel_tol", self.rel_tol > 0, "must be positive"),
            ("max_steps", self.max_steps >= 1, "must be positive"),
            ("substeps", self.substeps >= 1, "must be positive"),
            ("h", self.h > 0, "must be positive"),
            ("steps", self.steps >= 1, "must be positive"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, msg)

    @property
    def integrator_config(self):
        return IntegratorConfig(self.integrator, self.abs_tol, self.rel_tol, self.max_steps, self.substeps)

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(_fmt(v) for v in value)
            else:
                value = _fmt(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARSERS = {
    int: int,
    float: float,
    bool: _parse_bool,
    str: str,
}


def _convert(name, raw):
    default = getattr(ExperimentConfig, name, None)
    if name == "h_list":
        return tuple(float(x) for x in raw.split(",") if x.strip())
    if name == "flow_kinds":
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    return _PARSERS[type(default)](raw)


def parse_config(text: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"line {lineno} is not of the form key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in names:
            raise ConfigError(key, "unknown key")
        if key in values:
            raise ConfigError(key, "given twice")
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path: Optional[Path], overrides: Optional[dict] = None) -> ExperimentConfig:
    if path is None:
        return parse_config("", overrides)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, overrides)


class Problem(NamedTuple):
    losses: Tuple[ScalarLoss, ...]
    start: np.ndarray
    partition: Optional[Partition]
    bracket_vanishes: bool


def build_problem(cfg: ExperimentConfig) -> Problem:
    """Losses, starting point and partition for ``cfg.problem``.

    Quadratic problems in the multitask setting are replaced by block
    quadratics on the ``n_phi1 / n_phi2 / n_theta`` partition so that each
    task only sees its own head.
    """
    rng = np.random.default_rng(cfg.seed)
    if cfg.problem in ("mlp", "mlp_identical"):
        prob = mlp_multitask_loss(MlpSpec(data_seed=cfg.seed, init_seed=cfg.seed + 1),
                                  identical_tasks=cfg.problem == "mlp_identical")
        return Problem((prob.loss1, prob.loss2), prob.init, prob.partition,
                       cfg.problem == "mlp_identical")
    if cfg.problem == "scalar_opposing":
        L1 = quadratic_loss(QuadraticSpec([[1.0]], [1.0], 0.5))
        L2 = quadratic_loss(QuadraticSpec([[1.0]], [-1.0], 0.5))
        return Problem((L1, L2), rng.standard_normal(1), Partition(0, 0, 1), False)
    if cfg.setting == "multitask" and cfg.problem != "quadratic_unit":
        A, B, part = block_quadratic_tasks((cfg.n_phi1, cfg.n_phi2, cfg.n_theta), cfg.seed)
        losses = (quadratic_loss(A), quadratic_loss(B))
        if cfg.problem == "quadratic_identical":
            losses = (losses[0], losses[0])
            part = Partition(0, 0, part.size)
        return Problem(losses, rng.standard_normal(part.size), part, cfg.problem == "quadratic_identical")
    n = cfg.dim
    if cfg.problem == "quadratic_unit":
        L = quadratic_loss(QuadraticSpec(np.eye(n)))
        return Problem((L, L), rng.standard_normal(n), Partition(0, 0, n), True)
    if cfg.problem == "quadratic_commuting":
        A, B = commuting_pair(n, cfg.seed)
        vanishes = True
    elif cfg.problem == "quadratic_noncommuting":
        A, B = noncommuting_pair(n, cfg.seed, cfg.commutator_scale)
        vanishes = False
    else:
        A, _ = commuting_pair(n, cfg.seed)
        B, vanishes = A, True
    return Problem((quadratic_loss(A), quadratic_loss(B)), rng.standard_normal(n), Partition(0, 0, n), vanishes)
