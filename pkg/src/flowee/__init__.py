"""Flow-level energy efficiency of a downlink base station.

Per-state activity fixed points, processor-sharing stationary
distributions, local/global power-allocation optimization and a
discrete-event validation simulator.
"""

from flowee.rate_model import RateCurve, ZoneConfig, sinr, throughput
from flowee.fixed_point import (
    ConvergenceError,
    FixedPointSolution,
    StateMetrics,
    TrafficParams,
    activity_probability,
    solve_heterogeneous,
    solve_homogeneous,
    state_metrics,
    state_power,
)
from flowee.state_space import CellState, StateIndex, enumerate_states, neighbors
from flowee.config import CellConfig, FlowParams, load_config
from flowee.flow_level import (
    PowerPolicy,
    StationaryDistribution,
    blocking,
    global_efficiency,
    stationary_distribution,
)
from flowee.optimizer import (
    OptimizationResult,
    OptimizerConfig,
    local_policy,
    optimize_policy,
    optimize_state,
)
from flowee.simulator import SimConfig, SimResult, simulate

__version__ = "0.1.0"
