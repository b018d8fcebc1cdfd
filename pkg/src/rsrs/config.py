"""Experiment configuration

A single JSON document describes the problem, the tree, the method and its
parameters. Parsing and dumping are inverse to each other.

"""
import logging
from functools import singledispatch
from typing import Annotated, ClassVar, List, Literal, Optional, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveInt,
    ValidationError,
)

from . import oracles
from .exceptions import ConfigError

log = logging.getLogger("rsrs")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LogKernel1D(_Section):
    """Log kernel on N equispaced points of the unit interval"""
    dim: ClassVar[int] = 1

    type: Literal["log-kernel-1d"]
    n: PositiveInt
    geometry_seed: NonNegativeInt = 0
    diag_shift: Union[Literal["quadrature"], float] = "quadrature"


class LogKernel2D(_Section):
    """Log kernel on N random points of the unit square"""
    dim: ClassVar[int] = 2

    type: Literal["log-kernel-2d"]
    n: PositiveInt
    geometry_seed: NonNegativeInt = 0
    diag_shift: Union[Literal["quadrature"], float] = "quadrature"


class SchurSlab2D(_Section):
    dim: ClassVar[int] = 1

    type: Literal["schur-slab-2d"]
    grid_n: int = Field(ge=3)
    slab_width: PositiveInt = 10


class DenseFile(_Section):
    dim: ClassVar[int] = 1

    type: Literal["dense-file"]
    path: str


Problem = Annotated[
    Union[LogKernel1D, LogKernel2D, SchurSlab2D, DenseFile],
    Field(discriminator="type"),
]

_PROBLEM_TAGS = {"log-kernel-1d", "log-kernel-2d", "schur-slab-2d",
                 "dense-file"}


class TreeSection(_Section):
    m: PositiveInt = 32
    admissibility: Literal["strong", "weak"] = "strong"
    dim: Optional[int] = Field(default=None, ge=1, le=3)


class SamplingSection(_Section):
    p: Union[Literal["auto"], PositiveInt] = "auto"
    kmax: PositiveInt = 40
    oversampling: PositiveInt = 10


class ScheduleSection(_Section):
    atol_leaf: NonNegativeFloat = 1e-8
    growth: float = Field(default=2.0, ge=1.0)
    stop_level: NonNegativeInt = 2


class ProxySection(_Section):
    radius_factor: float = Field(default=1.5, gt=1.0)
    n_proxy: PositiveInt = 64


class VerifySection(_Section):
    power_iterations: int = Field(default=20, ge=2)
    probes: PositiveInt = 10


class BenchSection(_Section):
    sweep: List[PositiveInt] = []
    include_sketch_time: bool = False


class ExperimentConfig(_Section):
    problem: Problem
    tree: TreeSection = TreeSection()
    method: Literal["rsrs", "srs-proxy"] = "rsrs"
    sampling: SamplingSection = SamplingSection()
    schedule: ScheduleSection = ScheduleSection()
    proxy: ProxySection = ProxySection()
    verify: VerifySection = VerifySection()
    bench: BenchSection = BenchSection()
    parallel: bool = False
    seed: NonNegativeInt = 0


def _check_slab(problem):
    if isinstance(problem, SchurSlab2D) and \
            problem.slab_width >= problem.grid_n:
        raise ConfigError(
            f"problem.slab_width: {problem.slab_width} must be below "
            f"grid_n={problem.grid_n}",
            field="problem.slab_width",
        )


def _field_path(location):
    return ".".join(str(part) for part in location
                    if part not in _PROBLEM_TAGS)


def parse_config(text):
    """Validate a JSON document

    :param str text:
    :rtype: ExperimentConfig
    :raises ConfigError: naming the first offending field
    """
    try:
        cfg = ExperimentConfig.model_validate_json(text)
    except ValidationError as e:
        error = e.errors()[0]
        field = _field_path(error["loc"])
        raise ConfigError(f"{field or 'config'}: {error['msg']}",
                          field=field)

    _check_slab(cfg.problem)
    if cfg.tree.dim is not None and cfg.tree.dim != cfg.problem.dim:
        raise ConfigError(
            f"tree.dim: {cfg.tree.dim} does not match the "
            f"{cfg.problem.dim}-dimensional {cfg.problem.type} problem",
            field="tree.dim",
        )
    return cfg


def load_config(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {e.strerror}")

    log.debug(f"Loaded config from {path}")
    return parse_config(text)


def dump_config(cfg):
    return cfg.model_dump_json(indent=2)


def with_overrides(cfg, seed=None):
    if seed is None:
        return cfg
    return cfg.model_copy(update={"seed": seed})


def _diag_shift(problem, points):
    if problem.diag_shift == "quadrature":
        return oracles.quadrature_diag_shift(points)
    return float(problem.diag_shift)


@singledispatch
def oracle_for(problem):
    """Build the operator a problem descriptor stands for

    :rtype: LinearOracle
    """
    raise ConfigError(f"Unknown problem {problem!r}", field="problem")


@oracle_for.register
def _(problem: LogKernel1D):
    points = oracles.line_points(problem.n)
    return oracles.kernel_oracle(points,
                                 diag_shift=_diag_shift(problem, points))


@oracle_for.register
def _(problem: LogKernel2D):
    points = oracles.square_points(problem.n, seed=problem.geometry_seed)
    return oracles.kernel_oracle(points,
                                 diag_shift=_diag_shift(problem, points))


@oracle_for.register
def _(problem: SchurSlab2D):
    _check_slab(problem)
    return oracles.schur_slab_oracle(problem.grid_n, problem.slab_width)


@oracle_for.register
def _(problem: DenseFile):
    return oracles.dense_oracle(oracles.load_dense_matrix(problem.path))


def points_for(o):
    """Geometry of an oracle, equispaced on [0, 1] when it has none"""
    if o.points is not None:
        return o.points
    return oracles.line_points(o.n)


@singledispatch
def resize(problem, n):
    """Copy of `problem` at size `n`, for sweeps"""
    raise ConfigError(f"{problem.type} problems cannot be resized",
                      field="bench.sweep")


@resize.register(LogKernel1D)
@resize.register(LogKernel2D)
def _(problem, n):
    return problem.model_copy(update={"n": n})


@resize.register
def _(problem: SchurSlab2D, n):
    return problem.model_copy(update={"grid_n": n})
