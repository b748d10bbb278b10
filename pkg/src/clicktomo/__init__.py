"""Quantum state reconstruction from on/off photodetector clicks.

Pipeline: simulate no-click statistics of a signal state mixed with a
coherent probe on a beam splitter, reconstruct the displaced photon-number
diagonal at each phase-space point by expectation-maximization, read off the
Wigner value, and recover the density matrix by quadrature over the map.
"""

from .em import EMConfig, EMTrace, em_step, forward_probability, log_likelihood, run_em
from .errors import (
    ClicktomoError,
    ConfigError,
    DataError,
    DegenerateModelError,
    NumericalError,
    TruncationLeakError,
)
from .fock import (
    DensityMatrix,
    DiagonalDistribution,
    DisplacementMatrix,
    PureState,
    TruncationConfig,
    coherent_state,
    density_from_pure,
    displaced_diagonal,
    displaced_diagonal_padded,
    displacement_matrix,
    fock_state,
    squeezed_vacuum,
    wigner_exact,
)
from .measurement import (
    ClickRecord,
    DetectorPair,
    DualDetectorRecipe,
    Setting,
    SettingSchedule,
    SingleDetectorRecipe,
    derive_setting,
    dual_detector_schedule,
    homogeneous_efficiencies,
    no_click_probability,
    sample_clicks,
    schedule_probabilities,
    simulate_schedule,
    single_detector_schedule,
)
from .recover import RecoveredDensity, StateComparison, compare_states, dmn_kernel, integrate_rho
from .wigner import (
    ErrorReport,
    PhaseGrid,
    WignerEstimate,
    coherent_wigner,
    delta_w,
    exact_wigner_map,
    fock_wigner,
    recommend_truncation,
    reconstruct_point,
    scan_grid,
    squeezed_wigner,
    truncation_error_map,
    variance_map,
    wigner_from_values,
    wigner_map_from_function,
)

__version__ = "0.1.0"
