"""PSD-aligned uplink pilot design and MMSE channel estimation toolkit."""

from .bessel import j0
from .estimation import (
    EstimationReport,
    Interferer,
    SingularSceneError,
    UplinkScene,
    UplinkUser,
    asymptotic_mse,
    clarke_closed_form,
    error_covariance,
    interference_free_mse,
    mmse_estimate,
    mse_from_eigenvalues,
    processing_gain_db,
    small_alpha_mse,
    taylor_check,
)
from .fading import (
    AutocorrelationSequence,
    ChannelCovariance,
    DopplerSpectrum,
    FadingRealization,
    build_covariance,
    clarke_autocorrelation,
    clarke_psd,
    flat_psd,
    synthesize_realization,
)
from .pilots import (
    AlignmentPlan,
    PilotSequence,
    PlanInfeasibleError,
    cross_matrix,
    fft_pilot,
    hadamard_pilots,
    orthogonality_residual,
    plan_alignment,
    shift_orthogonal,
    uniform_capacity,
)
from .simkit import (
    ExperimentConfig,
    RunResult,
    run_downlink,
    run_experiment,
    run_uplink,
    user_reports,
)

__version__ = "0.1.0"
