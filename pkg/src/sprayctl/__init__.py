"""Prioritized task-space control and positional IK for spraying manipulators."""

from .errors import DimensionError, InfeasibleError, InvalidState, NotFound, SprayctlError, ValidationError
from .kinematics import (
    FramePose,
    JointLimits,
    JointSpec,
    JointState,
    KinematicChain,
    demo_chain,
    forward_kinematics,
    geometric_jacobian,
    load_chain,
    local_rotational_rows,
)
from .pik import IkReport, PikParams, Termination, gradient_update, solve_pik
from .ptsc import (
    CascadeSolution,
    PrioritizedProblem,
    PriorityLevel,
    ThreeLevel,
    TwoLevelBlend,
    build_height_constraint,
    build_velocity_constraints,
    solve_ptsc,
    spraying_problem,
)
from .qp import QpProblem, QpSolution, QpStatus, solve_qp
from .scenario import Scenario, load_scenario, run_continuous, run_selective
from .tasks import (
    Gains,
    Task,
    TaskError,
    TaskKind,
    angular_velocity_command,
    approach_axis_error,
    clamp_task_error,
    joint_velocity_command,
    task_error_and_jacobian,
)
from .trace import Trace, TraceRow, emit_trace, reports_to_csv, trace_to_csv

__version__ = "0.1.0"
