"""varcast: predict and maximize genetic variant discovery.

Given a pilot sequencing study, predict how many new variants a follow-up
study of any size and sequencing quality will reveal, fit the underlying
frequency model to the pilot by empirical Bayes, and optimize the
quality-versus-quantity split of a fixed sequencing budget.
"""
from .core import (
    BPHyperParams,
    InvalidInputError,
    NumericalError,
    PredictionCurve,
    SequencingConfig,
    SiteFrequencySpectrum,
    VariantMatrix,
    build_sfs,
    read_matrix,
    validate_hyperparams,
    write_matrix,
)
from .bnp import (
    PoissonPrediction,
    asymptotic_xi,
    asymptotic_xi_r,
    beta_expectation,
    expected_new_rare,
    expected_new_rare_cum,
    expected_new_rare_noisy,
    expected_new_rare_noisy_cum,
    expected_new_variants,
    expected_new_variants_noisy,
    log_rising,
    new_variants_posterior,
)
from .noise import calling_probability, calling_probability_naive
from .fit import DEOptions, FitResult, fit_hyperparams, fit_objective, heldout_new_counts
from .design import (
    CostModel,
    DesignPoint,
    DesignProblem,
    max_m_under_budget,
    optimize_design,
    sweep_designs,
)
from .simulate import (
    FrequencyVector,
    draw_beta_bernoulli,
    draw_from_frequencies,
    draw_ibp,
    draw_power_law,
)
from .harness import EvalConfig, emit_curves, run_folds

__version__ = "0.1.0"
