"""Tempered conjugate Bayesian linear regression with SafeBayes learning-rate
selection, model averaging over nested orders, and misspecification
diagnostics, plus a config-driven simulation harness."""

from .conjugate import (
    ConjugatePrior,
    FixedVariance,
    InvGammaVariance,
    LossRecord,
    NotPositiveDefiniteError,
    PosteriorState,
    VarianceUndefinedError,
    informative_prior,
)
from .ensembles import CesaroState, EnsembleSummary, ModelEnsemble, ModelPrior, nested_informative_builder
from .learners import (
    EtaGrid,
    EtaResult,
    baseline_model_selection,
    cv_eta,
    empirical_bayes_eta,
    run_safe_bayes,
)
from .truths import Generator, PseudoTruth, correct_model, polynomial_wrong_model, wrong_model
from .diagnostics import LossLedger, bernoulli_toy, overconfidence_ratio
from .seeds import mix64

__version__ = "0.1.0"
