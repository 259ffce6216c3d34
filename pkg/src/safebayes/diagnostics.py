"""Misspecification instruments.

A :class:`LossLedger` tracks per-step losses and their cumulatives along one
run: cumulative Bayes/randomized/in-model/square losses, the cumulative mix
loss CML, the cumulative mixability gap Delta (posterior nonconcentration),
and the hypercompression margin K = sum(-log f at the optimal comparator)
- sum(Bayes log loss).  A positive margin of many nats means the Bayes
predictive cumulatively beat the best single distribution in the model, an
event of probability exp(-K) under a correct model and prior.

The Bernoulli toy (two-point model {0.2, 0.8}, uniform prior) illustrates the
concentration story: the log likelihood ratio is a random walk, the posterior
looks concentrated at most times yet the cumulative gap Delta grows like
sqrt(n) when both parameters are equally wrong.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conjugate import LossRecord

__all__ = ["LossLedger", "overconfidence_ratio", "bernoulli_toy", "BernoulliToy"]


@dataclass
class LossLedger:
    """Cumulative loss bookkeeping for one run at one learning rate."""

    n: int = 0
    cum_bayes_log: float = 0.0
    cum_r_log: float = 0.0
    cum_i_log: float = 0.0
    n_i_log: int = 0  # i_log steps actually defined (a > 1)
    cum_square: float = 0.0
    cum_mix: float = 0.0
    cum_delta: float = 0.0
    cum_optimal_log: Optional[float] = 0.0

    def update(self, record: LossRecord, optimal_loglik_increment: Optional[float] = None) -> "LossLedger":
        """Advance every cumulative by one step's record.

        ``optimal_loglik_increment`` is the realized log loss of the optimal
        comparator at this step; pass None when no comparator is available,
        which permanently disables the hypercompression margin.
        """
        self.n += 1
        self.cum_bayes_log += record.bayes_log
        self.cum_r_log += record.r_log
        if np.isfinite(record.i_log):
            self.cum_i_log += record.i_log
            self.n_i_log += 1
        self.cum_square += record.square
        self.cum_mix += record.mix
        self.cum_delta += record.delta
        if optimal_loglik_increment is None:
            self.cum_optimal_log = None
        elif self.cum_optimal_log is not None:
            self.cum_optimal_log += optimal_loglik_increment
        return self

    @property
    def hyper_margin(self) -> Optional[float]:
        """K = cumulative optimal log loss - cumulative Bayes log loss; None
        when no comparator was supplied."""
        if self.cum_optimal_log is None:
            return None
        return self.cum_optimal_log - self.cum_bayes_log

    @property
    def relative_redundancy(self) -> Optional[float]:
        """CML minus the comparator's cumulative log loss (negative under
        hypercompression at eta' = 1)."""
        if self.cum_optimal_log is None:
            return None
        return self.cum_mix - self.cum_optimal_log


def overconfidence_ratio(generator, predictor, pmax: Optional[int] = None) -> float:
    """Self-confidence ratio of a predictor against generator P*.

    Numerator: exact squared-error risk of the predictor's regression
    function.  Denominator: the predictor's own marginal expected squared
    error, E_X[predictive variance at X], computed exactly from the covariate
    second moments.  1 means reliable, above 1 overconfident.

    ``predictor`` either exposes ``mixture_coefficients``/``coefficients``
    plus ``expected_predictive_variance(M)``, or is a plain
    ``(coefficients, self_assessed_variance)`` pair.
    """
    if isinstance(predictor, tuple):
        coeffs, self_var = predictor
        coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
        if pmax is None:
            pmax = coeffs.shape[0] - 1
        denom = float(self_var)
    else:
        if hasattr(predictor, "summary"):
            coeffs = predictor.summary().mixture_coefficients
        elif hasattr(predictor, "coefficients"):
            coeffs = predictor.coefficients()
        else:
            raise TypeError(f"cannot extract a regression function from {type(predictor)!r}")
        if pmax is None:
            pmax = coeffs.shape[0] - 1
        M = generator.second_moments(pmax)
        denom = predictor.expected_predictive_variance(M)
    if denom <= 0:
        raise ValueError("self-assessed predictive variance must be positive")
    return generator.square_risk(coeffs) / denom


# -- Bernoulli toy -------------------------------------------------------------

THETA_LO, THETA_HI = 0.2, 0.8
_E_MINUS_2 = np.e - 2.0


@dataclass
class BernoulliToy:
    """Trial statistics of the two-point Bernoulli model under theta*.

    ``L`` is the log likelihood ratio log2(f_0.8 / f_0.2) in bits, equal to
    2*(n1 - n0) exactly.  ``p_wrong`` is the fraction of trials whose
    posterior does not favor the parameter closest to theta* (ties counted;
    ``p_wrong_strict`` excludes them).  The concentration bound
    delta_n <= 2(e-2) * (min posterior mass) is checked on every trial for
    the theta*-expected next-step gap (the expectation over the next outcome,
    which is the quantity the concentration statement is about); Delta_n
    accumulates the realized per-step gaps.
    """

    theta_star: float
    n: int
    L: np.ndarray
    p_large_L: float
    p_wrong_strict: float
    p_wrong: float
    mean_delta_cum: float
    delta_bound_ok: bool


def _posterior_from_L(L_bits: np.ndarray) -> np.ndarray:
    """P(theta = 0.8 | data) for uniform prior, from L in bits."""
    return 1.0 / (1.0 + np.exp2(-L_bits))


def _step_delta(w_hi: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Mixability gap of predicting outcome y with posterior (1-w, w) on
    (0.2, 0.8)."""
    f_lo = np.where(y == 1, THETA_LO, 1.0 - THETA_LO)
    f_hi = np.where(y == 1, THETA_HI, 1.0 - THETA_HI)
    r_log = -(1.0 - w_hi) * np.log(f_lo) - w_hi * np.log(f_hi)
    bayes = -np.log((1.0 - w_hi) * f_lo + w_hi * f_hi)
    return r_log - bayes


def bernoulli_toy(theta_star: float, n: int, trials: int, rng: np.random.Generator) -> BernoulliToy:
    """Simulate the two-point Bernoulli model for `trials` sequences of
    length n under Bernoulli(theta_star), with standard (eta = 1) updating."""
    if not (0.0 < theta_star < 1.0):
        raise ValueError("theta_star must lie in (0, 1)")
    ones = np.ones(trials)
    zeros = np.zeros(trials)
    w = np.full(trials, 0.5)
    n1 = np.zeros(trials, dtype=np.int64)
    delta_cum = np.zeros(trials)
    bound_ok = True
    for i in range(1, n + 1):
        # bound check at the current posterior for the expected next-step gap
        m = np.minimum(w, 1.0 - w)
        expected = theta_star * _step_delta(w, ones) + (1.0 - theta_star) * _step_delta(w, zeros)
        if np.any(expected > 2.0 * _E_MINUS_2 * m + 1e-12):
            bound_ok = False
        y = (rng.random(trials) < theta_star).astype(np.int64)
        delta_cum += _step_delta(w, y)
        n1 += y
        w = _posterior_from_L(2.0 * (2.0 * n1 - i))
    L = 2 * (2 * n1 - n)
    return BernoulliToy(
        theta_star=theta_star,
        n=n,
        L=L,
        p_large_L=float(np.mean(np.abs(L) > np.sqrt(n) / 2.0)),
        p_wrong_strict=float(np.mean(L < 0) if theta_star > 0.5 else np.mean(L > 0)),
        p_wrong=float(np.mean(L <= 0) if theta_star > 0.5 else np.mean(L >= 0)),
        mean_delta_cum=float(np.mean(delta_cum)),
        delta_bound_ok=bound_ok,
    )
