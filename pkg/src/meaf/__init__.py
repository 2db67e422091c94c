"""Minimum-activation transaction routing toolkit.

Users hold transaction demands, apps hold capacity caps, and some
user-app edges are preinstalled.  The toolkit finds routings of all
demand that respect the caps while activating as few additional edges
as possible: exact search, a rational lower bound, two greedy
heuristics, instance generators, and a benchmark harness.
"""

from __future__ import annotations

__version__ = "0.1.0"

from ._kernels import BACKEND, warmup
from .bench import (
    BenchRecord,
    MetricError,
    SweepPoint,
    TailDropPoint,
    inverse_gini,
    run_comparison,
    sweep_capacity,
    tail_drop_eval,
)
from .flowcore import (
    FlowNetwork,
    MaxFlowResult,
    MinCostFlowResult,
    build_network,
    feasible,
    max_flow,
    min_cost_max_flow,
    to_dot,
)
from .heuristics import carl, dtas
from .model import (
    Allocation,
    Instance,
    InstanceError,
    SolveResult,
    UserRecord,
    VerificationReport,
    canonical_dumps,
    dashed_edges,
    format_count,
    instance_to_dict,
    read_allocation,
    read_instance,
    validate_instance,
    verify_allocation,
    write_allocation,
    write_instance,
)
from .solvers import (
    ExactConfig,
    GloballyInfeasibleError,
    check_3partition,
    exact_solve,
    export_milp,
    lp_lower_bound,
)
from .synth import GenConfig, generate, genconfig_from_file, reduce_3partition

__all__ = [
    "__version__",
    "BACKEND",
    "warmup",
    "Instance",
    "InstanceError",
    "UserRecord",
    "Allocation",
    "SolveResult",
    "VerificationReport",
    "validate_instance",
    "dashed_edges",
    "verify_allocation",
    "format_count",
    "read_instance",
    "write_instance",
    "read_allocation",
    "write_allocation",
    "FlowNetwork",
    "MaxFlowResult",
    "MinCostFlowResult",
    "build_network",
    "max_flow",
    "min_cost_max_flow",
    "feasible",
    "to_dot",
    "ExactConfig",
    "GloballyInfeasibleError",
    "exact_solve",
    "lp_lower_bound",
    "export_milp",
    "check_3partition",
    "carl",
    "dtas",
    "GenConfig",
    "generate",
    "genconfig_from_file",
    "reduce_3partition",
    "MetricError",
    "BenchRecord",
    "TailDropPoint",
    "SweepPoint",
    "inverse_gini",
    "tail_drop_eval",
    "run_comparison",
    "sweep_capacity",
]
