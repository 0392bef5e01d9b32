"""Co-simulation with power bonds: energy-residual error estimation and
adaptive macro step control, plus the quarter-car benchmark harness."""

from .control import (
    ConstantStep,
    EccoConfig,
    EccoController,
    InsufficientHistory,
    NonFiniteIndicator,
    PredictorCorrectorConfig,
    PredictorCorrectorController,
    StepPolicy,
    ecco_indicator,
    pc_indicator,
    pi_step_size,
    predict_outputs,
)
from .energy import (
    BondLedger,
    BondLedgerEntry,
    CompensatedSum,
    average_local_power_error,
    port_power,
    residual_energy_step,
    residual_power,
    total_residual_power,
    transmitted_power,
)
from .master import RunRecord, SimulatorFailure, StepRow, probe_states, run_cosimulation
from .model import (
    ConnectionGraph,
    DanglingPort,
    DuplicateConnection,
    NonAntisymmetricBond,
    PortRole,
    PowerBond,
    PowerPort,
    SimulatorSlot,
    Wiring,
    apply_connections,
    validate_graph,
)
from .quartercar import (
    LINEAR_PARAMS,
    NONLINEAR_PARAMS,
    QuarterCarParams,
    build_reticulation,
    excitation,
    preset_params,
    spring_damper_force,
    tyre_force,
)
from .reference import (
    ErrorSummary,
    NoOnsetInRange,
    ReferenceTrajectory,
    TimeRangeMismatch,
    damper_dissipation,
    linear_exact_states,
    local_power_error,
    reference_solve,
    stability_scan,
    step_size_sweep,
    summarize,
)

__version__ = "0.1.0"
