"""Distributed target-encirclement formation control, simulated deterministically.

Kinematic point agents in the plane regulate their distance to a static or
moving target and their angular spacings to sensed neighbors, using only
measurements in their own body frames.  The package provides the
continuous-time and sampled-data control laws, a fixed-step closed-loop
engine with an independent polar-form oracle, admissibility and graph
diagnostics, convergence analysis, and a scenario-driven CLI.
"""

from .analysis import (
    ConvergenceReport,
    PolarMapDiscrepancy,
    ProbePoint,
    consensus_check,
    held_equilibrium_radii,
    lyapunov_traces,
    polar_map_discrepancy,
    report,
    sampled_polar_step_exact,
    sampled_polar_step_linear,
    sampled_stability_probe,
)
from .controller import (
    ControllerParams,
    GainBoundError,
    IncompleteMeasurementError,
    LocalMeasurement,
    check_coupling_gain,
    continuous_control,
    coupling,
    coupling_ceiling,
    global_control,
    linearization_matrix,
    measure,
    sampled_control,
    sampling_bound,
)
from .geometry import (
    DegenerateFrameError,
    PolarState,
    UndefinedAngleError,
    angular_distance,
    frame_angle,
    nearest_branch,
    polar_of_relative,
    relative_of_polar,
    rotate_velocity_to_local,
    rotation,
    to_local_frame,
    vec,
    wrap_2pi,
    wrap_pi,
)
from .output import read_trajectory, write_trace
from .scenario import Scenario, ScenarioError, ValidationRecord, load_scenario
from .simulation import (
    DegenerateStateError,
    InadmissibleFormationError,
    NumericalDivergenceError,
    SimConfig,
    SimulationTrace,
    SimulationWarning,
    WorldState,
    polar_oracle_continuous,
    random_initial_positions,
    run,
    step_continuous,
    step_sampled,
    warmup_kernels,
)
from .targets import TargetModel, target_state
from .topology import (
    AdmissibilityResult,
    DegreeStats,
    FormationSpec,
    Topology,
    check_admissible,
    degree_stats,
    gain_lower_bound,
    has_directed_spanning_tree,
)

__version__ = "0.1.0"
