"""Multi-class nonlinear Hawkes networks with Erlang memory kernels.

Simulation of the finite network as a piecewise deterministic Markov process
(exact thinning), analysis of its deterministic mean-field cascade
(equilibria, oscillation criteria, bifurcation scans), the small-noise
diffusion approximation, and reproducible statistical experiment harnesses.
"""

__version__ = "0.1.0"

from .kernels import (
    CriticalityReport,
    ErlangKernel,
    KernelMatrix,
    NotSupercriticalError,
    classify_criticality,
    compute_alpha0,
    erlang_eval,
    erlang_l1_norm,
    offspring_matrix,
    spectral_radius,
)
from .limit import (
    CascadeParams,
    LimitTrajectory,
    NoOscillationError,
    Population,
    PositiveFeedbackError,
    StabilityReport,
    characteristic_roots,
    check_oscillation,
    compute_rho,
    find_equilibrium,
    hopf_scan,
    integrate,
    kappa_scan,
    measure_period,
    vector_field,
)
from .rates import PAPER_F1, PAPER_F2, ConstantRate, ExpSigmoidRate
from .engine import (
    CouplingResult,
    EventLog,
    PdmpState,
    PdmpTrajectory,
    PopulationSizes,
    UnboundedRateError,
    pdmp_flow,
    simulate_coupled,
    simulate_hawkes_general,
    simulate_pdmp,
)
from .diffusion import (
    DiffusionParams,
    LyapunovConfig,
    diffusion_sigma,
    drift_b,
    euler_maruyama,
    lyapunov_G,
    lyapunov_drift_estimate,
)
from .experiments import (
    ExperimentReport,
    chaos_rate_experiment,
    clt_experiment,
    phase_transition_sweep,
    tube_occupancy,
    weak_error_experiment,
)
from .config import ConfigError, RunConfig, parse_config
from .seeding import derive_seed, make_rng
