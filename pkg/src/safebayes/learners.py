"""Learning-rate selection and classical model-selection baselines.

The grid learners share one structure: for every candidate learning rate on
a dyadic grid, advance a fresh ensemble through the data in the given order
and accumulate a per-step objective; the selected rate is the largest
minimizer of the cumulative objective.  Variants differ only in the
objective: posterior-randomized log loss (R-log), in-model log loss at the
posterior means (I-log), their fixed-variance squared-error counterparts,
the Bayes predictive log loss (empirical Bayes), or held-out losses
(cross-validated eta).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .conjugate import FixedVariance, InvGammaVariance
from .ensembles import ModelEnsemble, ModelPrior

__all__ = [
    "EtaGrid",
    "EtaResult",
    "run_safe_bayes",
    "empirical_bayes_eta",
    "cv_eta",
    "baseline_model_selection",
    "SAFE_BAYES_VARIANTS",
]

SAFE_BAYES_VARIANTS = ("R_log", "I_log", "R_square", "I_square")


@dataclass(frozen=True)
class EtaGrid:
    """Dyadic learning-rate grid.

    Without ``include_gt1`` the grid is {1, 2^-kappa_step, ..., 2^-kappa_max};
    with it, exponents run from +kappa_max down to -kappa_max.  Values are
    strictly decreasing, so "largest minimizer" is the first minimizer in
    grid order.
    """

    kappa_step: float
    kappa_max: float
    include_gt1: bool = False

    def __post_init__(self):
        if not (self.kappa_step > 0):
            raise ValueError("kappa_step must be positive")
        if not (self.kappa_max >= 1):
            raise ValueError("kappa_max must be >= 1")
        m = self.kappa_max / self.kappa_step
        if abs(m - round(m)) > 1e-9:
            raise ValueError("kappa_max must be an integer multiple of kappa_step")

    @property
    def values(self) -> np.ndarray:
        m = int(round(self.kappa_max / self.kappa_step))
        top = m if self.include_gt1 else 0
        exponents = np.arange(top, -m - 1, -1) * self.kappa_step
        return np.exp2(exponents)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass
class EtaResult:
    """Outcome of one grid search: selected rate, per-eta objectives, and the
    per-step objective traces needed to re-select on any data prefix."""

    eta_hat: float
    objectives: Dict[float, float]
    step_objectives: Optional[Dict[float, np.ndarray]] = None


def _largest_argmin(etas: np.ndarray, totals: np.ndarray) -> float:
    order = np.argsort(-etas)  # decreasing
    best = order[0]
    for idx in order:
        if totals[idx] < totals[best]:
            best = idx
    return float(etas[best])


def _check_variant(variant: str, fixed_variance: bool):
    if variant not in SAFE_BAYES_VARIANTS:
        raise ValueError(f"unknown SafeBayes variant {variant!r}")
    if variant.endswith("square") and not fixed_variance:
        raise ValueError(f"{variant} requires a fixed-variance model")
    if variant.endswith("log") and fixed_variance:
        raise ValueError(f"{variant} requires an inverse-gamma variance model")


def _step_objective(ensemble: ModelEnsemble, x, y, variant: str) -> float:
    if variant == "R_log":
        return ensemble.step_losses(x, y, eta_prime=1.0).r_log
    if variant == "I_log":
        return ensemble.step_losses(x, y, eta_prime=1.0).i_log  # NaN while undefined
    if variant == "R_square":
        return ensemble.r_square_step(x, y)
    summ = ensemble.summary()
    return float((y - x @ summ.mixture_coefficients) ** 2)


def prefix_objective(steps: np.ndarray, n: int, discount_fraction: float = 0.0) -> float:
    """Cumulative objective over the first n steps, discounting the leading
    ceil(discount_fraction * n) of them; NaN steps (objective undefined at
    that state, identically across eta) are skipped."""
    start = int(np.ceil(discount_fraction * n))
    window = steps[start:n]
    return float(np.nansum(window))


def run_safe_bayes(
    data,
    ensemble_factory: Callable[[float], ModelEnsemble],
    grid: EtaGrid,
    variant: str = "R_log",
    discount_fraction: float = 0.0,
) -> EtaResult:
    """Algorithm: for every eta in the grid, sequentially predict each point
    with the current eta-posterior, accumulate the variant's loss, then
    absorb the point; pick the largest cumulative-loss minimizer.

    ``data`` is the ordered dataset (X, y); the method is order dependent.
    ``discount_fraction`` only discounts the objective; posteriors always
    absorb every point.
    """
    if not (0.0 <= discount_fraction < 1.0):
        raise ValueError("discount_fraction must be in [0, 1)")
    X, y = data
    etas = grid.values
    if etas.size == 0:
        raise ValueError("empty learning-rate grid")
    ensembles = [ensemble_factory(eta) for eta in etas]
    _check_variant(variant, ensembles[0].fixed_variance)
    n = X.shape[0]
    steps = {float(eta): np.zeros(n) for eta in etas}
    for i in range(n):
        for eta, ens in zip(etas, ensembles):
            steps[float(eta)][i] = _step_objective(ens, X[i], y[i], variant)
            ens.advance(X[i], y[i])
    totals = np.array([prefix_objective(steps[float(eta)], n, discount_fraction) for eta in etas])
    return EtaResult(
        eta_hat=_largest_argmin(etas, totals),
        objectives={float(e): float(t) for e, t in zip(etas, totals)},
        step_objectives=steps,
    )


def empirical_bayes_eta(
    data, ensemble_factory: Callable[[float], ModelEnsemble], grid: EtaGrid
) -> EtaResult:
    """Prequential empirical Bayes: minimize the cumulative Bayes predictive
    log loss over the grid (at eta = 1 this equals minus the log marginal
    likelihood).  Tie-break largest."""
    X, y = data
    etas = grid.values
    if etas.size == 0:
        raise ValueError("empty learning-rate grid")
    ensembles = [ensemble_factory(eta) for eta in etas]
    n = X.shape[0]
    steps = {float(eta): np.zeros(n) for eta in etas}
    for i in range(n):
        for eta, ens in zip(etas, ensembles):
            steps[float(eta)][i] = ens.step_losses(X[i], y[i], eta_prime=1.0).bayes_log
            ens.advance(X[i], y[i])
    totals = np.array([np.nansum(steps[float(eta)]) for eta in etas])
    return EtaResult(
        eta_hat=_largest_argmin(etas, totals),
        objectives={float(e): float(t) for e, t in zip(etas, totals)},
        step_objectives=steps,
    )


def cv_eta(
    data,
    ensemble_factory: Callable[[float], ModelEnsemble],
    grid: EtaGrid,
    loss: str = "square",
    refit_each_fold: bool = False,
) -> EtaResult:
    """Leave-one-out cross-validated learning rate.

    For every eta and held-out index i, the ensemble is fit on the remaining
    points from batch sufficient statistics (the tempered posterior and the
    across-model weights are order free), then point i is scored with either
    the squared error of the mixture regression function or the Bayes
    predictive log loss.  Fits use a rank-one downdate of the full-data
    state and fall back to a from-scratch refit on numerical failure.
    """
    if loss not in ("square", "predictive_log"):
        raise ValueError(f"unknown CV loss {loss!r}")
    X, y = data
    n = X.shape[0]
    if n < 2:
        raise ValueError("leave-one-out needs at least two points")
    etas = grid.values
    if etas.size == 0:
        raise ValueError("empty learning-rate grid")
    scores = np.zeros((etas.size, n))
    for j, eta in enumerate(etas):
        full = ensemble_factory(float(eta))
        for i in range(n):
            full.advance(X[i], y[i])
        for i in range(n):
            held = _downdated_ensemble(ensemble_factory, full, X, y, i, refit_each_fold)
            if loss == "square":
                summ = held.summary()
                scores[j, i] = (y[i] - X[i] @ summ.mixture_coefficients) ** 2
            else:
                scores[j, i] = held.step_losses(X[i], y[i], eta_prime=1.0).bayes_log
    totals = scores.mean(axis=1)
    return EtaResult(
        eta_hat=_largest_argmin(etas, totals),
        objectives={float(e): float(t) for e, t in zip(etas, totals)},
    )


def _downdated_ensemble(factory, full: ModelEnsemble, X, y, i, force_refit: bool):
    """Ensemble fit on all points except i, from batch statistics.

    The across-model weights come from the batch integral (exact-scale
    integration); for fixed variance this coincides with sequential
    advancing in any order.
    """
    if not force_refit:
        held = factory(full.eta)
        held.xtx = full.xtx - np.outer(X[i], X[i])
        held.xty = full.xty - X[i] * y[i]
        held.yty = float(full.yty - y[i] ** 2)
        held.n = full.n - 1
        try:
            held._refit()
            held._recompute_means()
            held.log_weights = _batch_log_weights(held)
            return held
        except np.linalg.LinAlgError:
            pass
    held = factory(full.eta)
    for k in range(X.shape[0]):
        if k != i:
            held.advance(X[k], y[k])
    return held


def _batch_log_weights(ens: ModelEnsemble) -> np.ndarray:
    """log pi(p | data, eta) from the batch integral: prior weight plus
    log int f(y^n|X,tau)^eta d pi(tau|p), normalized."""
    logw = ens.model_prior.log_weights() + _log_partition(ens)
    return logw - logsumexp(logw)


def _log_partition(ens: ModelEnsemble) -> np.ndarray:
    """log int prod_i f(y_i|x_i,tau)^eta d pi(tau|p) for every order p,
    from the current Gram accumulators (exact integration, so the
    inverse-gamma branch uses the exact-mode scale regardless of the
    ensemble's reporting convention)."""
    from scipy.special import gammaln

    K = ens.pmax + 1
    eta, n = ens.eta, ens.n
    if ens._prefix:
        # one factorization serves every order: log det Lambda_p is the
        # cumulative log of squared Cholesky diagonals, beta'Lambda beta the
        # cumulative squared forward solve
        L, w, cum_w2 = ens._prefix_cache()
        logdet1 = np.cumsum(2.0 * np.log(np.diagonal(L)))
        logdet0 = np.cumsum(-np.log(ens._prior_diag))
        R = eta * ens.yty - cum_w2
        gauss = -0.5 * (logdet0 + logdet1)
        if ens.fixed_variance:
            s2 = ens.sigma2
            return -0.5 * n * eta * np.log(2 * np.pi * s2) + gauss - R / (2.0 * s2)
        a_n = ens.a0 + 0.5 * eta * n
        b_n = np.maximum(ens.b0 + 0.5 * R, 1e-300)
        return (
            -0.5 * n * eta * np.log(2 * np.pi)
            + gauss
            + ens.a0 * np.log(ens.b0)
            - a_n * np.log(b_n)
            + gammaln(a_n)
            - gammaln(ens.a0)
        )
    out = np.zeros(K)
    for p in range(K):
        prior = ens.priors[p]
        prec0 = prior.precision()
        Lam = prec0 + eta * ens.xtx[: p + 1, : p + 1]
        sign0, logdet0 = np.linalg.slogdet(prior.Sigma0)
        sign1, logdet1 = np.linalg.slogdet(Lam)
        if sign0 <= 0 or sign1 <= 0:
            raise np.linalg.LinAlgError("indefinite matrix in batch weight computation")
        rhs = prec0 @ prior.beta0 + eta * ens.xty[: p + 1]
        beta = np.linalg.solve(Lam, rhs)
        R = eta * ens.yty + prior.beta0 @ prec0 @ prior.beta0 - beta @ rhs
        gauss = -0.5 * (logdet0 + logdet1)
        if ens.fixed_variance:
            s2 = prior.variance.sigma2
            out[p] = -0.5 * n * eta * np.log(2 * np.pi * s2) + gauss - R / (2.0 * s2)
        else:
            a0, b0 = prior.variance.a0, prior.variance.b0
            a_n = a0 + 0.5 * eta * n
            b_n = b0 + 0.5 * R
            out[p] = (
                -0.5 * n * eta * np.log(2 * np.pi)
                + gauss
                + a0 * np.log(b0)
                - a_n * np.log(b_n)
                + gammaln(a_n)
                - gammaln(a0)
            )
    return out


# -- classical baselines ---------------------------------------------------------


def baseline_model_selection(
    data,
    pmax: int,
    method: str,
    prior_builder=None,
    k_folds: int = 10,
) -> int:
    """Select a model order with AICc, BIC, k-fold CV, LOO CV, or GCV.

    AICc and BIC score the maximum-likelihood fit with k = p + 2 parameters;
    the CV schemes and GCV score the eta = 1 posterior-mean predictor under
    the given prior (informative identity prior by default) with squared
    error.  Orders whose criterion is undefined at this sample size are
    excluded; ties break toward the smallest order.
    """
    from .conjugate import ConjugatePrior, PosteriorState

    methods = ("AICc", "BIC", "kfoldCV", "LOOCV", "GCV")
    if method not in methods:
        raise ValueError(f"method must be one of {methods}, got {method!r}")
    X, y = data
    n = X.shape[0]
    if prior_builder is None:
        from .ensembles import nested_informative_builder

        prior_builder = nested_informative_builder(InvGammaVariance(1.0, 1.0 / 40.0))
    scores = np.full(pmax + 1, np.inf)
    for p in range(pmax + 1):
        Xp = X[:, : p + 1]
        if method in ("AICc", "BIC"):
            k = p + 2
            if n <= p + 2 or (method == "AICc" and n <= k + 1):
                continue
            beta, *_ = np.linalg.lstsq(Xp, y, rcond=None)
            rss = float(np.sum((y - Xp @ beta) ** 2))
            if rss <= 0:
                continue
            maxloglik = -0.5 * n * (np.log(2 * np.pi * rss / n) + 1.0)
            if method == "AICc":
                scores[p] = -2 * maxloglik + 2 * k + 2 * k * (k + 1) / (n - k - 1)
            else:
                scores[p] = -2 * maxloglik + k * np.log(n)
        else:
            prior = prior_builder(p)
            prec0 = prior.precision()
            if method == "GCV":
                state = PosteriorState.from_stats(prior, 1.0, Xp.T @ Xp, Xp.T @ y, float(y @ y), n)
                resid = y - Xp @ state.beta_bar
                trace_h = float(np.trace(np.linalg.solve(state.Lam, Xp.T @ Xp)))
                scores[p] = (resid @ resid / n) / (1.0 - trace_h / n) ** 2
            else:
                folds = np.arange(n) % (n if method == "LOOCV" else k_folds)
                sse = 0.0
                gram, gy = Xp.T @ Xp, Xp.T @ y
                for f in np.unique(folds):
                    mask = folds == f
                    Xf, yf = Xp[mask], y[mask]
                    state = PosteriorState.from_stats(
                        prior, 1.0, gram - Xf.T @ Xf, gy - Xf.T @ yf, float(y @ y - yf @ yf), n - mask.sum()
                    )
                    sse += float(np.sum((yf - Xf @ state.beta_bar) ** 2))
                scores[p] = sse / n
    if not np.any(np.isfinite(scores)):
        raise ValueError(f"{method} undefined for every order at n={n}")
    return int(np.argmin(scores))
