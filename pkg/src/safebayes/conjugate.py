"""Single-model tempered conjugate Bayesian linear regression.

The model is the standard Gaussian linear model ``y = x @ beta + eps`` with
``eps ~ N(0, sigma2)`` and a covariate vector carrying a leading intercept 1.
The likelihood enters the posterior raised to a learning rate ``eta``:
posterior density proportional to ``likelihood**eta * prior``.  ``eta = 1``
is standard Bayes; ``eta = 0`` leaves the prior untouched.

Two variance treatments are supported:

* ``FixedVariance(sigma2)`` -- known noise variance, Gaussian prior
  ``beta ~ N(beta0, sigma2 * Sigma0)``.
* ``InvGammaVariance(a0, b0)`` -- conjugate inverse-gamma prior on
  ``sigma2`` with density ``sigma2**-(a+1) * exp(-b/sigma2) * b**a / Gamma(a)``,
  same conditional Gaussian prior on ``beta``.

For the inverse-gamma scale parameter two conventions are exposed: ``"paper"``
computes ``b = b0 + (eta/2) * sum((y_i - x_i @ beta_bar)**2)`` from the
residuals at the current posterior mean, while ``"exact"`` uses the scale
obtained by exact integration of ``likelihood**eta * prior``,
``b = b0 + (eta*yty + beta0' Sigma0^-1 beta0 - beta_bar' Lambda beta_bar)/2``.
The two differ by ``beta_bar' Sigma0^-1 beta_bar / 2`` when ``beta0 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
from scipy.special import digamma, gammaln

__all__ = [
    "FixedVariance",
    "InvGammaVariance",
    "VarianceSpec",
    "ConjugatePrior",
    "PosteriorState",
    "LossRecord",
    "VarianceUndefinedError",
    "NotPositiveDefiniteError",
]

LOG_2PI = np.log(2.0 * np.pi)


class VarianceUndefinedError(ValueError):
    """Posterior expectation of sigma2 requested while a <= 1."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Precision matrix lost positive definiteness (degenerate prior or eta)."""


@dataclass(frozen=True)
class FixedVariance:
    sigma2: float

    def __post_init__(self):
        if not (self.sigma2 > 0):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")


@dataclass(frozen=True)
class InvGammaVariance:
    a0: float
    b0: float

    def __post_init__(self):
        if not (self.a0 > 0 and self.b0 > 0):
            raise ValueError(f"inverse-gamma shape/scale must be positive, got a0={self.a0}, b0={self.b0}")


VarianceSpec = Union[FixedVariance, InvGammaVariance]


@dataclass(frozen=True)
class ConjugatePrior:
    """Conjugate prior for one linear model of order p (p+1 coefficients).

    Parameters
    ----------
    beta0 : (p+1,) prior mean of the coefficients.
    Sigma0 : (p+1, p+1) symmetric positive definite prior covariance scale;
        the conditional prior on beta is N(beta0, sigma2 * Sigma0).
    variance : FixedVariance or InvGammaVariance.
    """

    beta0: np.ndarray
    Sigma0: np.ndarray
    variance: VarianceSpec

    def __post_init__(self):
        beta0 = np.atleast_1d(np.asarray(self.beta0, dtype=float))
        Sigma0 = np.atleast_2d(np.asarray(self.Sigma0, dtype=float))
        object.__setattr__(self, "beta0", beta0)
        object.__setattr__(self, "Sigma0", Sigma0)
        k = beta0.shape[0]
        if Sigma0.shape != (k, k):
            raise ValueError(f"Sigma0 shape {Sigma0.shape} does not match beta0 length {k}")
        if not np.allclose(Sigma0, Sigma0.T):
            raise ValueError("Sigma0 must be symmetric")
        try:
            np.linalg.cholesky(Sigma0)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError("Sigma0 is not positive definite") from None

    @property
    def p(self) -> int:
        return self.beta0.shape[0] - 1

    def precision(self) -> np.ndarray:
        return np.linalg.inv(self.Sigma0)


def informative_prior(p: int, variance: VarianceSpec, scale: float = 1.0) -> ConjugatePrior:
    """Zero-mean prior with Sigma0 = scale * I; scale=1 is the informative
    variant, scale=1000 the slightly-informative one."""
    return ConjugatePrior(np.zeros(p + 1), scale * np.eye(p + 1), variance)


@dataclass(frozen=True)
class LossRecord:
    """Per-step prediction losses of one posterior state at one data point.

    All log quantities are in nats.  ``mix`` is evaluated at the flattening
    exponent eta_prime passed to the loss computation; ``delta = r_log - mix``
    is the per-step mixability gap.  ``i_log`` is NaN when the posterior
    expectation of sigma2 is undefined (a <= 1).
    """

    bayes_log: float
    r_log: float
    i_log: float
    square: float
    mix: float
    delta: float


def _check_point(x: np.ndarray, y: float, k: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (k,):
        raise ValueError(f"covariate vector has shape {x.shape}, expected ({k},)")
    if x[0] != 1.0:
        raise ValueError("covariate vector must carry a leading intercept 1")
    if not (np.all(np.isfinite(x)) and np.isfinite(y)):
        raise ValueError("non-finite input point")
    return x


@dataclass(frozen=True)
class PosteriorState:
    """Sufficient statistics of the eta-tempered conjugate posterior.

    The state is a value: ``update`` returns a fresh state and never mutates.
    Distinct states may therefore be advanced concurrently.

    Attributes
    ----------
    prior : ConjugatePrior
    eta : learning rate, >= 0 (eta = 0 keeps the posterior at the prior).
    n : number of absorbed observations.
    xtx, xty, yty : Gram accumulators of the absorbed data.
    Lam : precision matrix Sigma0^-1 + eta * X'X.
    beta_bar : posterior mean coefficients Lam^-1 (Sigma0^-1 beta0 + eta X'y).
    a, b : inverse-gamma shape/scale of the sigma2 posterior (NaN for fixed
        variance); a = a0 + eta*n/2, b per ``b_formula``.
    b_formula : "paper" or "exact", see module docstring.
    """

    prior: ConjugatePrior
    eta: float
    n: int
    xtx: np.ndarray
    xty: np.ndarray
    yty: float
    Lam: np.ndarray
    beta_bar: np.ndarray
    a: float
    b: float
    b_formula: str = "paper"

    @classmethod
    def from_prior(cls, prior: ConjugatePrior, eta: float, b_formula: str = "paper") -> "PosteriorState":
        if eta < 0 or not np.isfinite(eta):
            raise ValueError(f"learning rate must be finite and >= 0, got {eta}")
        if b_formula not in ("paper", "exact"):
            raise ValueError(f"b_formula must be 'paper' or 'exact', got {b_formula!r}")
        k = prior.p + 1
        if isinstance(prior.variance, InvGammaVariance):
            a, b = prior.variance.a0, prior.variance.b0
        else:
            a, b = np.nan, np.nan
        return cls(
            prior=prior,
            eta=eta,
            n=0,
            xtx=np.zeros((k, k)),
            xty=np.zeros(k),
            yty=0.0,
            Lam=prior.precision(),
            beta_bar=prior.beta0.copy(),
            a=a,
            b=b,
            b_formula=b_formula,
        )

    @classmethod
    def from_stats(
        cls,
        prior: ConjugatePrior,
        eta: float,
        xtx: np.ndarray,
        xty: np.ndarray,
        yty: float,
        n: int,
        b_formula: str = "paper",
    ) -> "PosteriorState":
        """Build the posterior directly from Gram sufficient statistics.

        The posterior depends on the data only through (X'X, X'y, y'y, n),
        so any permutation of the data yields the identical state.
        """
        state = cls.from_prior(prior, eta, b_formula)
        return state._refit(np.asarray(xtx, float), np.asarray(xty, float), float(yty), int(n))

    def _refit(self, xtx, xty, yty, n) -> "PosteriorState":
        prior = self.prior
        prec0 = prior.precision()
        Lam = prec0 + self.eta * xtx
        try:
            L = np.linalg.cholesky(Lam)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError(
                "posterior precision is not positive definite; Sigma0 or eta is degenerate"
            ) from None
        rhs = prec0 @ prior.beta0 + self.eta * xty
        beta_bar = _chol_solve(L, rhs)
        if isinstance(prior.variance, InvGammaVariance):
            a0, b0 = prior.variance.a0, prior.variance.b0
            a = a0 + self.eta * n / 2.0
            if self.b_formula == "paper":
                rss = yty - 2.0 * beta_bar @ xty + beta_bar @ xtx @ beta_bar
                b = b0 + 0.5 * self.eta * max(rss, 0.0)
            else:
                b = b0 + 0.5 * (
                    self.eta * yty + prior.beta0 @ prec0 @ prior.beta0 - beta_bar @ Lam @ beta_bar
                )
        else:
            a, b = np.nan, np.nan
        return replace(self, n=n, xtx=xtx, xty=xty, yty=yty, Lam=Lam, beta_bar=beta_bar, a=a, b=b)

    # -- core operations ---------------------------------------------------

    def update(self, x: np.ndarray, y: float) -> "PosteriorState":
        """Absorb one observation (x, y) and return the new state."""
        x = _check_point(x, y, self.prior.p + 1)
        xtx = self.xtx + np.outer(x, x)
        xty = self.xty + x * y
        return self._refit(xtx, xty, self.yty + y * y, self.n + 1)

    @property
    def Sigma(self) -> np.ndarray:
        """Posterior covariance scale Lambda^-1 (covariance of beta is sigma2 * Sigma)."""
        return np.linalg.inv(self.Lam)

    def expected_sigma2(self) -> float:
        """Posterior mean of sigma2, b/(a-1); defined only for a > 1."""
        var = self.prior.variance
        if isinstance(var, FixedVariance):
            return var.sigma2
        if self.a <= 1.0:
            raise VarianceUndefinedError(
                f"posterior expectation of sigma2 undefined: a = {self.a} <= 1"
            )
        return self.b / (self.a - 1.0)

    def posterior_summary(self) -> dict:
        """Closed-form posterior summaries.

        ``sigma2`` is the posterior expectation of the noise variance and is
        None when undefined (inverse-gamma shape a <= 1).
        """
        var = self.prior.variance
        if isinstance(var, FixedVariance):
            sigma2 = var.sigma2
        else:
            sigma2 = self.b / (self.a - 1.0) if self.a > 1.0 else None
        return {
            "beta_bar": self.beta_bar.copy(),
            "Sigma": self.Sigma,
            "sigma2": sigma2,
            "a": self.a,
            "b": self.b,
        }

    def predictive_moments(self, x: np.ndarray) -> tuple[float, float]:
        """Mean and variance of Y at covariate x when theta is drawn from the
        posterior and Y from the model at theta.

        Variance is sigma2 * (1 + x Sigma x') for fixed variance and
        (b/(a-1)) * (1 + x Sigma x') for the inverse-gamma case (a > 1).
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != self.beta_bar.shape:
            raise ValueError(f"covariate vector has shape {x.shape}, expected {self.beta_bar.shape}")
        s2 = self.expected_sigma2()
        xSx = float(x @ _solve_psd(self.Lam, x))
        return float(x @ self.beta_bar), s2 * (1.0 + xSx)

    def step_losses(self, x: np.ndarray, y: float, eta_prime: float) -> LossRecord:
        """All per-step loss functionals for predicting y at covariate x.

        Must be called before absorbing (x, y).  ``eta_prime`` is the
        flattening exponent of the mix loss; the Bayes predictive log loss
        is the mix loss at eta_prime = 1.
        """
        if not (eta_prime > 0):
            raise ValueError(f"flattening exponent must be positive, got {eta_prime}")
        x = _check_point(x, y, self.prior.p + 1)
        xSx = float(x @ _solve_psd(self.Lam, x))
        resid2 = float((y - x @ self.beta_bar) ** 2)
        var = self.prior.variance
        if isinstance(var, FixedVariance):
            parts = _fixed_losses(var.sigma2, resid2, xSx, eta_prime)
        else:
            parts = _nig_losses(self.a, self.b, resid2, xSx, eta_prime)
        bayes_log, r_log, i_log, mix = parts
        return LossRecord(
            bayes_log=bayes_log,
            r_log=r_log,
            i_log=i_log,
            square=resid2,
            mix=mix,
            delta=r_log - mix,
        )


def _chol_solve(L: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    z = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, z)


def _solve_psd(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("matrix is not positive definite") from None
    return _chol_solve(L, rhs)


def _fixed_losses(sigma2, resid2, xSx, eta_prime):
    """Loss functionals for the fixed-variance model, vectorizable in all args.

    r_log is the posterior expectation of the log loss,
    ``log(2 pi sigma2)/2 + resid2/(2 sigma2) + xSx/2``; i_log drops the final
    term; the mix loss uses sigma2_mix = sigma2 * (1/eta' + xSx).
    """
    base = 0.5 * (LOG_2PI + np.log(sigma2)) + resid2 / (2.0 * sigma2)
    r_log = base + 0.5 * xSx
    i_log = base
    mix = _fixed_mix(sigma2, resid2, xSx, eta_prime)
    bayes = _fixed_mix(sigma2, resid2, xSx, 1.0)
    return bayes, r_log, i_log, mix


def _fixed_mix(sigma2, resid2, xSx, eta_prime):
    s2_mix = sigma2 * (1.0 / eta_prime + xSx)
    return (
        0.5 * (eta_prime - 1.0) * (LOG_2PI + np.log(sigma2))
        + 0.5 * np.log(eta_prime)
        + 0.5 * (LOG_2PI + np.log(s2_mix))
        + resid2 / (2.0 * s2_mix)
    ) / eta_prime


def _nig_losses(a, b, resid2, xSx, eta_prime):
    """Loss functionals for the inverse-gamma-variance model.

    r_log uses the digamma closed form
    ``log(2 pi b)/2 - psi(a)/2 + a resid2/(2b) + xSx/2``; i_log plugs the
    posterior means (beta_bar, b/(a-1)) into the Gaussian log loss and is NaN
    for a <= 1; the Bayes predictive is Student-t with 2a degrees of freedom.
    """
    r_log = 0.5 * (LOG_2PI + np.log(b)) - 0.5 * digamma(a) + a * resid2 / (2.0 * b) + 0.5 * xSx
    with np.errstate(divide="ignore", invalid="ignore"):
        s2_bar = np.where(a > 1.0, b / np.where(a > 1.0, a - 1.0, 1.0), np.nan)
        i_log = 0.5 * (LOG_2PI + np.log(s2_bar)) + resid2 / (2.0 * s2_bar)
    mix = _nig_mix(a, b, resid2, xSx, eta_prime)
    bayes = _nig_mix(a, b, resid2, xSx, 1.0)
    return bayes, r_log, i_log, mix


def _nig_mix(a, b, resid2, xSx, eta_prime):
    c = 1.0 / eta_prime + xSx
    return (
        0.5 * eta_prime * LOG_2PI
        + 0.5 * np.log1p(eta_prime * xSx)
        + (a + 0.5 * eta_prime) * np.log(b + resid2 / (2.0 * c))
        - a * np.log(b)
        - (gammaln(a + 0.5 * eta_prime) - gammaln(a))
    ) / eta_prime
