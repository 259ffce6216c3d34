"""Sampling distributions for the simulation studies, with exact risks.

Every generator mixes a "regular" branch (linear signal plus Gaussian noise)
with an optional "easy" branch drawn with probability ``easy_prob``: either a
deterministic point (default: all-zero covariates, response 0) or, for the
"less-easy" variant, a regular draw with covariates and noise shrunk by
``easy_scale``.  The heteroskedastic easy points are what breaks the
homoskedastic model.

Risks are never estimated from held-out samples: all second moments of the
covariate law have closed forms, so the squared-error risk of any coefficient
vector is an exact quadratic form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

__all__ = ["Generator", "PseudoTruth", "wrong_model", "correct_model", "polynomial_wrong_model"]


@dataclass(frozen=True)
class Generator:
    """Description of one sampling distribution P*.

    Parameters
    ----------
    covariate_law : "iid_gauss" (standard normal entries), "iid_uniform"
        (uniform on [-1, 1]) or "polynomial" (X_j = S**j with S uniform on
        [-1, 1]).
    coefficients : base regression coefficients (c0, c1, ...); the regression
        function is (c0 + intercept_offset) + sum_j c_j X_j.
    intercept_offset : additive intercept shift.
    noise_sd2 : noise variance of the regular branch.
    easy_prob : probability of the easy branch.
    easy_x, easy_y : the deterministic easy point; every non-intercept
        covariate equals easy_x and the response equals easy_y.
    easy_scale : if set, easy points are instead regular draws with
        covariates and noise both multiplied by this factor.
    """

    covariate_law: str = "iid_gauss"
    coefficients: Tuple[float, ...] = (0.0, 0.1, 0.1, 0.1, 0.1)
    intercept_offset: float = 0.0
    noise_sd2: float = 1.0 / 20.0
    easy_prob: float = 0.5
    easy_x: float = 0.0
    easy_y: float = 0.0
    easy_scale: Optional[float] = None

    def __post_init__(self):
        if self.covariate_law not in ("iid_gauss", "iid_uniform", "polynomial"):
            raise ValueError(f"unknown covariate law {self.covariate_law!r}")
        if not (0.0 <= self.easy_prob < 1.0):
            raise ValueError(f"easy_prob must be in [0, 1), got {self.easy_prob}")
        if not (self.noise_sd2 > 0):
            raise ValueError("noise variance must be positive")

    # -- sampling ------------------------------------------------------------

    def _regular_covariates(self, m: int, pmax: int, rng: np.random.Generator) -> np.ndarray:
        if self.covariate_law == "iid_gauss":
            return rng.standard_normal((m, pmax))
        if self.covariate_law == "iid_uniform":
            return rng.uniform(-1.0, 1.0, size=(m, pmax))
        s = rng.uniform(-1.0, 1.0, size=m)
        return s[:, None] ** np.arange(1, pmax + 1)[None, :]

    def _full_coefficients(self, pmax: int) -> np.ndarray:
        t = np.zeros(pmax + 1)
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape[0] > pmax + 1:
            raise ValueError(f"generator has {c.shape[0] - 1} true covariates, pmax={pmax} too small")
        t[: c.shape[0]] = c
        t[0] += self.intercept_offset
        return t

    def sample(self, n: int, rng: np.random.Generator, pmax: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw n i.i.d. points; X has shape (n, pmax+1) with leading 1."""
        t = self._full_coefficients(pmax)
        X = np.ones((n, pmax + 1))
        X[:, 1:] = self._regular_covariates(n, pmax, rng)
        noise = rng.standard_normal(n) * np.sqrt(self.noise_sd2)
        easy = rng.random(n) < self.easy_prob
        if self.easy_scale is not None:
            X[easy, 1:] *= self.easy_scale
            noise[easy] *= self.easy_scale
            y = X @ t + noise
        else:
            y = X @ t + noise
            X[easy, 1:] = self.easy_x
            y[easy] = self.easy_y
        return X, y

    # -- exact moments --------------------------------------------------------

    def _regular_moment_matrix(self, pmax: int) -> np.ndarray:
        k = pmax + 1
        if self.covariate_law == "polynomial":
            j = np.arange(k)
            power = j[:, None] + j[None, :]
            return np.where(power % 2 == 0, 1.0 / (power + 1.0), 0.0)
        m2 = 1.0 if self.covariate_law == "iid_gauss" else 1.0 / 3.0
        M = np.eye(k) * m2
        M[0, 0] = 1.0
        return M

    def second_moments(self, pmax: int) -> np.ndarray:
        """E[X X'] including the intercept row/column, mixed over branches."""
        M_reg = self._regular_moment_matrix(pmax)
        if self.easy_prob == 0.0:
            return M_reg
        if self.easy_scale is not None:
            scale = np.full(pmax + 1, self.easy_scale)
            scale[0] = 1.0
            M_easy = M_reg * np.outer(scale, scale)
        else:
            xe = np.full(pmax + 1, self.easy_x)
            xe[0] = 1.0
            M_easy = np.outer(xe, xe)
        return self.easy_prob * M_easy + (1.0 - self.easy_prob) * M_reg

    def _xy_moments(self, pmax: int) -> tuple[np.ndarray, np.ndarray, float]:
        """(M, v, s) = (E[XX'], E[XY], E[Y^2]), all exact."""
        t = self._full_coefficients(pmax)
        M_reg = self._regular_moment_matrix(pmax)
        v_reg = M_reg @ t
        s_reg = t @ v_reg + self.noise_sd2
        rho = self.easy_prob
        if rho == 0.0:
            return M_reg, v_reg, s_reg
        if self.easy_scale is not None:
            scale = np.full(pmax + 1, self.easy_scale)
            scale[0] = 1.0
            M_easy = M_reg * np.outer(scale, scale)
            v_easy = M_easy @ t
            s_easy = t @ v_easy + self.noise_sd2 * self.easy_scale**2
        else:
            xe = np.full(pmax + 1, self.easy_x)
            xe[0] = 1.0
            M_easy = np.outer(xe, xe)
            v_easy = xe * self.easy_y
            s_easy = self.easy_y**2
        M = rho * M_easy + (1.0 - rho) * M_reg
        v = rho * v_easy + (1.0 - rho) * v_reg
        s = rho * s_easy + (1.0 - rho) * s_reg
        return M, v, s

    # -- risk functionals ------------------------------------------------------

    def square_risk(self, coefficients: np.ndarray) -> float:
        """Exact E[(Y - X c)^2] for predicting with coefficient vector c."""
        c = np.atleast_1d(np.asarray(coefficients, dtype=float))
        pmax = max(c.shape[0] - 1, len(self.coefficients) - 1)
        M, v, s = self._xy_moments(pmax)
        k = c.shape[0]
        return float(s - 2.0 * c @ v[:k] + c @ M[:k, :k] @ c)

    def log_risk(self, coefficients: np.ndarray, sigma2: float) -> float:
        """Exact expected log loss of the Gaussian model (c, sigma2):
        square_risk / (2 sigma2) + log(2 pi sigma2) / 2."""
        if not (sigma2 > 0):
            raise ValueError("sigma2 must be positive")
        return self.square_risk(coefficients) / (2.0 * sigma2) + 0.5 * np.log(
            2.0 * np.pi * sigma2
        )

    def optimal_params(self, pmax: int) -> "PseudoTruth":
        """The model element closest to P* in KL divergence.

        Its coefficients carry the true regression function, its variance
        equals its own squared-error risk (reliability), and it is also the
        square-risk minimizer.
        """
        t = self._full_coefficients(pmax)
        M, v, s = self._xy_moments(pmax)
        on_curve = True
        if self.easy_prob > 0.0 and self.easy_scale is None:
            xe = np.full(pmax + 1, self.easy_x)
            xe[0] = 1.0
            on_curve = abs(self.easy_y - xe @ t) < 1e-12
        beta = t if on_curve else np.linalg.solve(M, v)
        sigma2 = self.square_risk(beta)
        nz = np.nonzero(np.abs(beta) > 1e-12)[0]
        p_tilde = int(nz[-1]) if nz.size else 0
        return PseudoTruth(p_tilde=p_tilde, beta=beta, sigma2=float(sigma2))

    def optimal_log_loss(self, x: np.ndarray, y: float, pseudo: "PseudoTruth") -> float:
        """Realized log loss of the optimal comparator at one point."""
        r = y - x[: pseudo.beta.shape[0]] @ pseudo.beta
        return 0.5 * np.log(2.0 * np.pi * pseudo.sigma2) + r * r / (2.0 * pseudo.sigma2)


@dataclass(frozen=True)
class PseudoTruth:
    """KL-optimal parameters (p, beta, sigma2) of the linear family under P*."""

    p_tilde: int
    beta: np.ndarray
    sigma2: float


def wrong_model(**kwargs) -> Generator:
    """Heteroskedastic truth: fair-coin easy points at (0, 0), regular noise
    variance 1/20, signal 0.1 on the first four covariates."""
    defaults = dict(noise_sd2=1.0 / 20.0, easy_prob=0.5)
    defaults.update(kwargs)
    return Generator(**defaults)


def correct_model(**kwargs) -> Generator:
    """Homoskedastic truth inside the model: no easy points, noise 1/40."""
    defaults = dict(noise_sd2=1.0 / 40.0, easy_prob=0.0)
    defaults.update(kwargs)
    return Generator(**defaults)


def polynomial_wrong_model(**kwargs) -> Generator:
    """Polynomial-basis variant: flat true regression, easy points at S=0."""
    defaults = dict(
        covariate_law="polynomial",
        coefficients=(0.0,),
        noise_sd2=1.0 / 20.0,
        easy_prob=0.5,
    )
    defaults.update(kwargs)
    return Generator(**defaults)
