"""Tempered posterior over a nested family of linear models M_0 .. M_pmax.

Model M_p reads the leading p+1 entries of the padded covariate vector
(intercept plus the first p covariates).  Across-model weights are updated
incrementally: absorbing one point multiplies the unnormalized weight of
model p by ``exp(-eta * mix_p)`` where ``mix_p`` is the model's mix loss at
flattening exponent eta, i.e. the integral of ``f(y|x,theta)**eta`` under the
model's current tempered posterior.  Weights live in log space throughout.

For the standard nested priors (zero mean, one shared diagonal covariance
read off per order) every model's precision is a leading principal block of
the full-order precision Lambda.  Forward substitution against the Cholesky
factor of Lambda is prefix-closed, so a single factorization per step yields
every model's predictive mean, predictive spread x Sigma_p x', and
inverse-gamma scale as cumulative sums; the whole family costs O(pmax^2) per
step plus one factorization.  Arbitrary per-order priors fall back to a
stacked representation with rank-one covariance updates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .conjugate import (
    LOG_2PI,
    ConjugatePrior,
    FixedVariance,
    InvGammaVariance,
    LossRecord,
    NotPositiveDefiniteError,
    PosteriorState,
    VarianceSpec,
    VarianceUndefinedError,
    _check_point,
    _fixed_losses,
    _fixed_mix,
    _nig_losses,
    _nig_mix,
    informative_prior,
)

__all__ = [
    "ModelPrior",
    "ModelEnsemble",
    "EnsembleSummary",
    "CesaroState",
    "nested_informative_builder",
]

REFACTOR_EVERY = 64  # fallback path: full re-factorization cadence


@dataclass(frozen=True)
class ModelPrior:
    """Prior over the model order p = 0 .. pmax.

    ``log_squared`` puts mass proportional to 1/((p+2) * log(p+2)**2), which
    stays normalizable for an infinite family; ``uniform`` is the sanity-check
    alternative; ``single`` conditions on the largest order (the ridge
    setting, where the family collapses to one high-dimensional model).
    """

    kind: str = "log_squared"
    pmax: int = 0

    def __post_init__(self):
        if self.kind not in ("log_squared", "uniform", "single"):
            raise ValueError(f"unknown model prior kind {self.kind!r}")
        if self.pmax < 0:
            raise ValueError(f"pmax must be >= 0, got {self.pmax}")

    def log_weights(self) -> np.ndarray:
        p = np.arange(self.pmax + 1)
        if self.kind == "uniform":
            logw = np.zeros(self.pmax + 1)
        elif self.kind == "single":
            logw = np.full(self.pmax + 1, -np.inf)
            logw[-1] = 0.0
            return logw
        else:
            logw = -(np.log(p + 2.0) + 2.0 * np.log(np.log(p + 2.0)))
        return logw - logsumexp(logw)


@dataclass
class EnsembleSummary:
    """Across-model posterior summary.

    ``mixture_coefficients`` is the weight-averaged, zero-padded posterior
    mean, i.e. the coefficients of the posterior regression function;
    ``mixture_sigma2`` is the weight-averaged posterior noise variance and is
    None while undefined (inverse-gamma shape <= 1).
    """

    weights: np.ndarray
    map_order: int
    mixture_coefficients: np.ndarray
    mixture_sigma2: Optional[float]


class ModelEnsemble:
    """One tempered posterior over models and parameters, advanced pointwise.

    Parameters
    ----------
    model_prior : ModelPrior
    prior_builder : callable p -> ConjugatePrior of dimension p+1.  All
        orders must share the variance family (all fixed or all inverse
        gamma).
    eta : learning rate >= 0.
    b_formula : "paper" or "exact" inverse-gamma scale convention.
    """

    def __init__(
        self,
        model_prior: ModelPrior,
        prior_builder: Callable[[int], ConjugatePrior],
        eta: float,
        b_formula: str = "paper",
    ):
        if eta < 0 or not np.isfinite(eta):
            raise ValueError(f"learning rate must be finite and >= 0, got {eta}")
        if b_formula not in ("paper", "exact"):
            raise ValueError(f"b_formula must be 'paper' or 'exact', got {b_formula!r}")
        self.model_prior = model_prior
        self.eta = float(eta)
        self.b_formula = b_formula
        self.priors = [prior_builder(p) for p in range(model_prior.pmax + 1)]
        K = model_prior.pmax + 1
        for p, prior in enumerate(self.priors):
            if prior.p != p:
                raise ValueError(f"prior builder returned dimension {prior.p + 1} for order {p}")
        kinds = {type(pr.variance) for pr in self.priors}
        if len(kinds) != 1:
            raise ValueError("all model orders must share the variance family")
        self.fixed_variance = kinds == {FixedVariance}
        if self.fixed_variance:
            self.sigma2 = np.array([pr.variance.sigma2 for pr in self.priors])
            self.a0 = self.b0 = None
            self.a = self.b = None
        else:
            self.a0 = np.array([pr.variance.a0 for pr in self.priors])
            self.b0 = np.array([pr.variance.b0 for pr in self.priors])
            self.a = self.a0.copy()
            self.b = self.b0.copy()

        self.log_weights = model_prior.log_weights()
        self.n = 0
        self.xtx = np.zeros((K, K))
        self.xty = np.zeros(K)
        self.yty = 0.0

        self._prefix = self._detect_prefix_structure()
        self._cache = None
        if not self._prefix:
            self._init_stacked()

    # -- shared plumbing -----------------------------------------------------

    @property
    def pmax(self) -> int:
        return self.model_prior.pmax

    def _detect_prefix_structure(self) -> bool:
        """True when every order's prior precision is the leading block of a
        shared diagonal and the prior means are zero; then all posteriors
        factor through one Cholesky of the full-order precision."""
        diag = None
        for p, prior in enumerate(self.priors):
            if np.any(prior.beta0 != 0.0):
                return False
            if np.any(prior.Sigma0 != np.diag(np.diagonal(prior.Sigma0))):
                return False
            d = 1.0 / np.diagonal(prior.Sigma0)
            if diag is not None and not np.array_equal(d[: p], diag[: p]):
                return False
            diag = d
        self._prior_diag = diag  # precision diagonal of the largest order
        return True

    def _init_stacked(self):
        K = self.pmax + 1
        self._prec0 = np.zeros((K, K, K))
        self._theta0 = np.zeros((K, K))
        self._prior_quad = np.zeros(K)
        for p, prior in enumerate(self.priors):
            prec = prior.precision()
            self._prec0[p, : p + 1, : p + 1] = prec
            self._theta0[p, : p + 1] = prec @ prior.beta0
            self._prior_quad[p] = prior.beta0 @ prec @ prior.beta0
        self._Sig_arr = np.zeros((K, K, K))
        for p, prior in enumerate(self.priors):
            self._Sig_arr[p, : p + 1, : p + 1] = prior.Sigma0
        self._beta_arr = np.array(
            [np.pad(pr.beta0, (0, K - p - 1)) for p, pr in enumerate(self.priors)]
        )

    # -- prefix fast path ----------------------------------------------------

    def _prefix_cache(self):
        """(L, w, cum_w2) for the current Gram state: L = chol(Lambda_full),
        w = L^-1 rhs; prefix-closedness of forward substitution makes the
        leading slices exact for every smaller order."""
        if self._cache is not None and self._cache[0] == self.n:
            return self._cache[1]
        Lam = np.diag(self._prior_diag) + self.eta * self.xtx
        try:
            L = np.linalg.cholesky(Lam)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError(
                "posterior precision lost positive definiteness"
            ) from None
        w = solve_triangular(L, self.eta * self.xty, lower=True, check_finite=False)
        cum_w2 = np.cumsum(w * w)
        self._cache = (self.n, (L, w, cum_w2))
        self._beta_cache = None
        return L, w, cum_w2

    def _all_means(self) -> np.ndarray:
        """(K, K) array; row p is the zero-padded posterior mean of order p."""
        if self._prefix:
            if getattr(self, "_beta_cache", None) is not None and self._beta_cache[0] == self.n:
                return self._beta_cache[1]
            L, w, _ = self._prefix_cache()
            K = self.pmax + 1
            W = w[:, None] * np.triu(np.ones((K, K)))  # column p = [w[:p+1]; 0]
            B = solve_triangular(L.T, W, lower=False, check_finite=False)
            means = B.T
            self._beta_cache = (self.n, means)
            return means
        return self._beta_arr

    def _scale_vector(self) -> Optional[np.ndarray]:
        """Per-order inverse-gamma scale b (None for fixed variance).

        Exact mode: b = b0 + (eta y'y - beta' Lambda beta)/2 with
        beta' Lambda beta = |w[:p+1]|^2; the paper convention subtracts the
        prior quadratic beta' Sigma0^-1 beta / 2 (zero-mean priors here).
        """
        if self.fixed_variance:
            return None
        _, _, cum_w2 = self._prefix_cache()
        b_exact = self.b0 + 0.5 * (self.eta * self.yty - cum_w2)
        if self.b_formula == "exact":
            return np.maximum(b_exact, 1e-300)
        means = self._all_means()
        prior_quad = (means**2) @ self._prior_diag
        return np.maximum(b_exact - 0.5 * prior_quad, 1e-300)

    def _xsx_resid(self, x: np.ndarray, y: float):
        """Per-order x Sigma_p x' and squared residual at the posterior mean."""
        if self._prefix:
            L, w, _ = self._prefix_cache()
            z = solve_triangular(L, x, lower=True, check_finite=False)
            xSx = np.cumsum(z * z)
            pred = np.cumsum(z * w)
            resid2 = (y - pred) ** 2
            return None, xSx, resid2
        Sx = np.einsum("pij,j->pi", self._Sig_arr, x)
        xSx = Sx @ x
        resid2 = (y - self._beta_arr @ x) ** 2
        return Sx, xSx, resid2

    # -- stacked fallback internals -------------------------------------------

    def _refit(self):
        """Full re-factorization from the Gram accumulators."""
        if self._prefix:
            self._cache = None
            return
        K = self.pmax + 1
        for p in range(K):
            Lam = self._prec0[p, : p + 1, : p + 1] + self.eta * self.xtx[: p + 1, : p + 1]
            try:
                L = np.linalg.cholesky(Lam)
            except np.linalg.LinAlgError:
                raise NotPositiveDefiniteError(
                    f"model {p}: posterior precision lost positive definiteness"
                ) from None
            inv = np.linalg.inv(L)
            self._Sig_arr[p] = 0.0
            self._Sig_arr[p, : p + 1, : p + 1] = inv.T @ inv

    def _recompute_means(self):
        if self._prefix:
            if not self.fixed_variance:
                self.a = self.a0 + 0.5 * self.eta * self.n
                self.b = self._scale_vector()
            return
        rhs = self._theta0 + self.eta * self.xty[None, :]
        self._beta_arr = np.einsum("pij,pj->pi", self._Sig_arr, rhs)
        if not self.fixed_variance:
            self.a = self.a0 + 0.5 * self.eta * self.n
            if self.b_formula == "paper":
                rss = (
                    self.yty
                    - 2.0 * self._beta_arr @ self.xty
                    + np.einsum("pi,ij,pj->p", self._beta_arr, self.xtx, self._beta_arr)
                )
                self.b = self.b0 + 0.5 * self.eta * np.maximum(rss, 0.0)
            else:
                quad = np.einsum("pi,pi->p", self._beta_arr, rhs)
                self.b = self.b0 + 0.5 * (self.eta * self.yty + self._prior_quad - quad)

    # -- operations ----------------------------------------------------------

    def _per_model_losses(self, x: np.ndarray, y: float, eta_prime: float):
        """(bayes, r_log, i_log, mix) vectors across model orders."""
        _, xSx, resid2 = self._xsx_resid(x, y)
        if self.fixed_variance:
            return _fixed_losses(self.sigma2, resid2, xSx, eta_prime)
        return _nig_losses(self.a, self.b, resid2, xSx, eta_prime)

    def advance(self, x: np.ndarray, y: float) -> "ModelEnsemble":
        """Absorb one observation: update across-model weights by the
        per-model flattened-likelihood integrals, renormalize, then update
        every model's posterior.  Returns self."""
        x = _check_point(x, y, self.pmax + 1)
        Sx, xSx, resid2 = self._xsx_resid(x, y)
        if self.eta > 0:
            if self.fixed_variance:
                mix = _fixed_mix(self.sigma2, resid2, xSx, self.eta)
            else:
                mix = _nig_mix(self.a, self.b, resid2, xSx, self.eta)
            self.log_weights = self.log_weights - self.eta * mix
            self.log_weights -= logsumexp(self.log_weights)
        self._absorb(x, y, Sx, xSx)
        return self

    def advance_with_losses(self, x: np.ndarray, y: float) -> LossRecord:
        """step_losses at eta_prime = eta followed by advance, sharing the
        per-model work; this is the hot path of a sequential run."""
        x = _check_point(x, y, self.pmax + 1)
        eta_prime = self.eta if self.eta > 0 else 1.0
        Sx, xSx, resid2 = self._xsx_resid(x, y)
        if self.fixed_variance:
            parts = _fixed_losses(self.sigma2, resid2, xSx, eta_prime)
        else:
            parts = _nig_losses(self.a, self.b, resid2, xSx, eta_prime)
        record = self._aggregate_record(x, y, eta_prime, parts)
        if self.eta > 0:
            self.log_weights = self.log_weights - self.eta * parts[3]
            self.log_weights -= logsumexp(self.log_weights)
        self._absorb(x, y, Sx, xSx)
        return record

    def _absorb(self, x, y, Sx, xSx):
        if not self._prefix:
            denom = 1.0 + self.eta * xSx
            self._Sig_arr -= (self.eta / denom)[:, None, None] * np.einsum("pi,pj->pij", Sx, Sx)
        self.xtx += np.outer(x, x)
        self.xty += x * y
        self.yty += y * y
        self.n += 1
        self._cache = None
        if not self._prefix and self.n % REFACTOR_EVERY == 0:
            self._refit()
        self._recompute_means()

    def summary(self) -> EnsembleSummary:
        w = np.exp(self.log_weights)
        coeffs = w @ self._all_means()
        if self.fixed_variance:
            sigma2 = float(w @ self.sigma2)
        elif np.all(self.a > 1.0):
            sigma2 = float(w @ (self.b / (self.a - 1.0)))
        else:
            sigma2 = None
        return EnsembleSummary(
            weights=w,
            map_order=int(np.argmax(self.log_weights)),
            mixture_coefficients=coeffs,
            mixture_sigma2=sigma2,
        )

    def step_losses(self, x: np.ndarray, y: float, eta_prime: float) -> LossRecord:
        """Across-model losses for predicting y at x, before absorbing it.

        r_log is the posterior-weighted per-model r_log; the Bayes and mix
        losses compose the per-model flattened integrals; square and i_log
        are evaluated at the mixture parameters (weight-averaged coefficients
        and noise variance).
        """
        if not (eta_prime > 0):
            raise ValueError(f"flattening exponent must be positive, got {eta_prime}")
        x = _check_point(x, y, self.pmax + 1)
        _, xSx, resid2 = self._xsx_resid(x, y)
        if self.fixed_variance:
            parts = _fixed_losses(self.sigma2, resid2, xSx, eta_prime)
        else:
            parts = _nig_losses(self.a, self.b, resid2, xSx, eta_prime)
        return self._aggregate_record(x, y, eta_prime, parts)

    def _aggregate_record(self, x, y, eta_prime, parts) -> LossRecord:
        bayes_v, r_v, _, mix_v = parts
        logw = self.log_weights
        w = np.exp(logw)
        r_log = float(w @ r_v)
        bayes = float(-logsumexp(logw - bayes_v))
        mix = float(-logsumexp(logw - eta_prime * mix_v) / eta_prime)
        pred = self._mixture_prediction(x)
        resid2 = float((y - pred) ** 2)
        s2 = self._mixture_sigma2()
        if s2 is None:
            i_log = np.nan
        else:
            i_log = 0.5 * (LOG_2PI + np.log(s2)) + resid2 / (2.0 * s2)
        return LossRecord(
            bayes_log=bayes,
            r_log=r_log,
            i_log=i_log,
            square=resid2,
            mix=mix,
            delta=r_log - mix,
        )

    def _mixture_prediction(self, x: np.ndarray) -> float:
        w = np.exp(self.log_weights)
        if self._prefix:
            L, wv, _ = self._prefix_cache()
            z = solve_triangular(L, x, lower=True, check_finite=False)
            return float(w @ np.cumsum(z * wv))
        return float(w @ (self._beta_arr @ x))

    def _mixture_sigma2(self) -> Optional[float]:
        w = np.exp(self.log_weights)
        if self.fixed_variance:
            return float(w @ self.sigma2)
        if np.all(self.a > 1.0):
            return float(w @ (self.b / (self.a - 1.0)))
        return None

    def r_square_step(self, x: np.ndarray, y: float) -> float:
        """Posterior-expected posterior-randomized squared error, the
        squared-units objective of the fixed-variance randomized learner:
        sum_p w_p [ (y - x beta_bar_p)^2 + sigma2_p x Sigma_p x' ]."""
        if not self.fixed_variance:
            raise ValueError("r_square_step requires a fixed-variance ensemble")
        _, xSx, resid2 = self._xsx_resid(x, y)
        w = np.exp(self.log_weights)
        return float(w @ (resid2 + self.sigma2 * xSx))

    def expected_predictive_variance(self, second_moments: np.ndarray) -> float:
        """E_X[Var(Y|X)] under the ensemble posterior predictive, computed
        exactly from the covariate second-moment matrix.

        Law of total variance over (p, beta, sigma2):
        sum_p w_p sigma2_p (1 + tr(Sigma_p M)) + sum_p w_p beta_p' M beta_p
        - cbar' M cbar.
        """
        w = np.exp(self.log_weights)
        if self.fixed_variance:
            s2 = self.sigma2
        else:
            if not np.all(self.a > 1.0):
                raise VarianceUndefinedError("predictive variance undefined: a <= 1")
            s2 = self.b / (self.a - 1.0)
        M = second_moments
        means = self._all_means()
        if self._prefix:
            L, _, _ = self._prefix_cache()
            Q = solve_triangular(L, M, lower=True, check_finite=False)
            R = solve_triangular(L, Q.T, lower=True, check_finite=False)
            tr = np.cumsum(np.diagonal(R))  # tr(Sigma_p M) for every order p
        else:
            tr = np.einsum("pij,ji->p", self._Sig_arr, M)
        bMb = np.einsum("pi,ij,pj->p", means, M, means)
        cbar = w @ means
        return float(w @ (s2 * (1.0 + tr)) + w @ bMb - cbar @ M @ cbar)

    def _sigma_tensor(self) -> np.ndarray:
        """(K, K, K) padded covariance scales, one slice per order."""
        if not self._prefix:
            return self._Sig_arr
        L, _, _ = self._prefix_cache()
        K = self.pmax + 1
        Linv = solve_triangular(L, np.eye(K), lower=True, check_finite=False)
        out = np.zeros((K, K, K))
        for p in range(K):
            block = Linv[: p + 1, : p + 1]
            out[p, : p + 1, : p + 1] = block.T @ block
        return out

    @property
    def states(self) -> list[PosteriorState]:
        """Per-order PosteriorState values rebuilt from the shared Gram
        accumulators (exact, order-free)."""
        out = []
        for p, prior in enumerate(self.priors):
            out.append(
                PosteriorState.from_stats(
                    prior,
                    self.eta,
                    self.xtx[: p + 1, : p + 1],
                    self.xty[: p + 1],
                    self.yty,
                    self.n,
                    b_formula=self.b_formula,
                )
            )
        return out


@dataclass
class CesaroState:
    """Accumulators for the Cesaro average of the visited posteriors.

    The Cesaro regression function is the arithmetic mean of the mixture
    regression functions seen so far; its predictive variance follows from
    the law of total variance over the uniform mixture of stored posterior
    summaries.
    """

    n: int = 0
    coef_sum: Optional[np.ndarray] = None
    sig_sum: float = 0.0
    mat_sum: Optional[np.ndarray] = None

    def update(self, ensemble: ModelEnsemble) -> "CesaroState":
        w = np.exp(ensemble.log_weights)
        if ensemble.fixed_variance:
            s2 = ensemble.sigma2
        else:
            if not np.all(ensemble.a > 1.0):
                raise VarianceUndefinedError("Cesaro accumulation needs a > 1 for every order")
            s2 = ensemble.b / (ensemble.a - 1.0)
        means = ensemble._all_means()
        Sig = ensemble._sigma_tensor()
        coef = w @ means
        mat = np.einsum("p,pij->ij", w * s2, Sig) + np.einsum("p,pi,pj->ij", w, means, means)
        if self.coef_sum is None:
            self.coef_sum = np.zeros_like(coef)
            self.mat_sum = np.zeros_like(mat)
        self.n += 1
        self.coef_sum += coef
        self.sig_sum += float(w @ s2)
        self.mat_sum += mat
        return self

    def coefficients(self) -> np.ndarray:
        if self.n == 0:
            raise ValueError("empty Cesaro state")
        return self.coef_sum / self.n

    def expected_predictive_variance(self, second_moments: np.ndarray) -> float:
        cbar = self.coefficients()
        M = second_moments
        return float(
            (self.sig_sum + np.trace(M @ self.mat_sum)) / self.n - cbar @ M @ cbar
        )

    def variance_at(self, x: np.ndarray) -> float:
        cbar = self.coefficients()
        return float((self.sig_sum + x @ self.mat_sum @ x) / self.n - (x @ cbar) ** 2)


def nested_informative_builder(
    variance: VarianceSpec, scale: float = 1.0
) -> Callable[[int], ConjugatePrior]:
    """Builder producing the zero-mean scale*I prior at every order."""

    def build(p: int) -> ConjugatePrior:
        return informative_prior(p, variance, scale=scale)

    return build
