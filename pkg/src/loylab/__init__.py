"""Effective Hamiltonians of unstable multi-level systems on discretised continua."""

from .errors import ConfigError, LoyLabError, ModelError, NonDiagonalizableError, NumericalError
from .model import (
    Channel,
    ContinuumGrid,
    FullModel,
    SubspacePartition,
    build_model,
    build_two_level_model,
    constant_coupling,
    diagnose_loy_conditions,
    find_loy_crossing,
    lorentzian_coupling,
    random_model,
    split_blocks,
)
from .self_energy import SelfEnergyEvaluator, default_eta
from .effective import (
    EffectiveHamiltonian,
    PauliDecomposition,
    exp_php,
    h_1d,
    h_iterate,
    h_loy,
    h_loy0,
    h_loy_imp,
    h_spectral,
    iterate_v,
    pauli_decompose,
    v_spectral,
)
from .evolution import (
    ExactPropagator,
    Trajectory,
    compare_trajectories,
    decay_product_amplitudes,
    evolve_effective,
    evolve_exact,
    survival_amplitude,
    v_of_t,
)
from .symmetry import (
    AntiUnitaryOp,
    CPTModelSpec,
    build_cpt,
    cpt_residual,
    diag_difference,
    make_cpt_invariant,
    random_cpt_model,
)
from .friedrichs_lee import (
    FLParams,
    build_fl_sector,
    desk_scale_params,
    fl_cross_validate,
    fl_diag_difference_analytic,
    fl_estimate_kaon,
    fl_gamma,
    kaon_ratio_params,
)

__version__ = "0.1.0"
