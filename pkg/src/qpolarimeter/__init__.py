"""Real-time two-qubit polarization tomography toolkit.

A simulated entangled-photon source, Poisson coincidence counting with
configurable noise, weighted least-squares state reconstruction with a
maximum-likelihood reference, Monte Carlo precision studies, and a live
streaming polarimeter engine with a WebSocket operator interface.
"""

from .engine import (
    Ack,
    Command,
    EngineConfig,
    Frame,
    PolarimeterEngine,
    SourceState,
    run_stream,
    source_density,
)
from .measurement import (
    CountRecord,
    MeasurementMatrix,
    MeasurementSetting,
    NoiseModel,
    build_measurement_matrix,
    canonical_settings,
    expected_counts,
    perturb_projectors,
    simulate_counts,
)
from .quantum import (
    BELL_PHI_PLUS,
    DensityMatrix,
    PureState2Q,
    concurrence,
    density_from_pure,
    density_from_stokes,
    fidelity,
    purity,
    random_density,
    random_pure,
    stokes_from_density,
)
from .reconstruction import (
    RankDeficientError,
    ReconstructionReport,
    legalize_psd,
    lls_reconstruct,
    ml_reconstruct,
    weights_from_counts,
)
from .simlab import (
    PRESET_PROFILES,
    PrecisionPoint,
    TimingProfile,
    ensemble_size,
    precision_curve,
    precision_vs_time,
    time_for_ensemble,
    tomography_time,
)

__version__ = "0.1.0"
