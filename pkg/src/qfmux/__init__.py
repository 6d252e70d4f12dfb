"""Quality-fair rate allocation for multiplexed video streams: source models,
aggregator buffers, coupled PI controllers, equilibrium and stability
analysis, and a closed-loop simulator."""

from .control import (
    REFERENCE_BUFFER_GAINS,
    REFERENCE_DELAY_GAINS,
    ControllerGains,
    ControlMode,
    Policy,
)
from .equilibrium import EquilibriumPoint, check_feasibility, solve_equilibrium
from .errors import (
    AllocationError,
    ConfigError,
    DomainError,
    FitError,
    InfeasibleError,
    ModelAssemblyError,
    NumericError,
    QFError,
    SimulationError,
    TuningError,
    UtilityRangeError,
)
from .linearization import (
    LinearModel,
    StabilityReport,
    assemble_A,
    classify_stability,
    decay_oracle,
    eigenvalues,
    linear_model,
    tune_gains,
)
from .plant import PlantConfig
from .sim import MetricsSummary, Scenario, StreamSpec, compute_metrics, run
from .sources import (
    REFERENCE_PSNR_PARAMS,
    REFERENCE_SSIM_PARAMS,
    ModelFamily,
    ParamNoiseSpec,
    SourceParams,
    eval_utility,
    fit_model,
    inverse_rate,
)

__version__ = "0.1.0"
