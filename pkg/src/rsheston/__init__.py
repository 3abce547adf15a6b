"""Optimal dynamic investment in regime-switching Heston markets.

Closed-form value functions and portfolio weights for the solved model
variants, an independent full Monte Carlo verification layer, and a CLI
for reproducible CSV experiments.
"""

from .errors import (
    AssumptionViolated,
    BlowUp,
    ConfigError,
    DomainViolation,
    FellerViolated,
    NegativeRate,
    ParseError,
    RowSumNonZero,
    RsHestonError,
    StepFailure,
)
from .markov_chain import (
    MarkovChainSpec,
    RegimePath,
    occupation_integral,
    path_stream,
    sample_path,
    transition_probabilities,
    validate_intensity,
)
from .models import (
    AffineCoefficients,
    HestonRegimeParams,
    UtilitySpec,
    ValidationReport,
    Variant,
    to_affine_coefficients,
    validate_feller,
    validate_solution_assumptions,
)
from .regime_expectation import RegimeIntegrand, XiTable, upsilon_heston, xi_mc, xi_mc_table, xi_ode
from .riccati import (
    B_separable,
    CharFnCoeffs,
    D_leverage,
    PiecewiseAB,
    b_separable_fn,
    char_fn_coeffs,
    compose_piecewise,
    d_leverage_fn,
    riccati_numeric,
)
from .simulate import (
    HistogramTable,
    PathBundle,
    SimConfig,
    constant_strategy,
    expected_utility_mc,
    martingale_diagnostic,
    optimal_weight_fn,
    read_path_dump,
    simulate_paths,
    terminal_wealth_histogram,
    variance_observable,
    write_path_dump,
)
from .value_strategy import (
    StrategyPoint,
    ValueQuery,
    optimal_strategy,
    strategy_rows,
    timedep_strategy,
    value_mmh_general,
    value_smmh,
    value_smmh_rho,
    value_timedep_heston,
)

__version__ = "0.1.0"
