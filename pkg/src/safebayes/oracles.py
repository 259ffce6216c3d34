"""Brute-force oracles: numerical quadrature of likelihood**eta * prior and
Monte Carlo predictive checks.

These deliberately avoid the conjugate closed forms: the tempered posterior
density is evaluated pointwise on a tensor quadrature grid and every reported
moment is a plain weighted sum.  The integration box is chosen from a rough
regularized least-squares probe and checked to contain the mass (boundary
density must be negligible), so a wrong closed form cannot steer the oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conjugate import ConjugatePrior, FixedVariance, InvGammaVariance, PosteriorState

__all__ = ["quadrature_moments", "QuadratureMoments", "run_oracle_suite"]


@dataclass
class QuadratureMoments:
    """Moments of the tempered posterior obtained by quadrature."""

    mean: np.ndarray
    cov: np.ndarray
    e_sigma2: float
    e_inv_sigma2: float
    e_log_sigma2: float

    @property
    def implied_a(self) -> float:
        """Inverse-gamma shape from E[sigma2] and E[1/sigma2]."""
        vu = self.e_sigma2 * self.e_inv_sigma2
        return vu / (vu - 1.0)

    @property
    def implied_b(self) -> float:
        return self.implied_a / self.e_inv_sigma2

    @property
    def scale_matrix(self) -> np.ndarray:
        """Cov(beta) / E[sigma2], comparable to the precision inverse."""
        return self.cov / self.e_sigma2


def _box_probe(prior: ConjugatePrior, X, y, eta):
    """Center and per-coordinate spread for the integration box via
    regularized least squares on the stacked design (SVD path)."""
    L0 = np.linalg.cholesky(np.linalg.inv(prior.Sigma0))
    A = np.vstack([np.sqrt(max(eta, 1e-12)) * X, L0.T])
    rhs = np.concatenate([np.sqrt(max(eta, 1e-12)) * y, L0.T @ prior.beta0])
    center, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    resid = y - X @ center
    n = X.shape[0]
    if isinstance(prior.variance, FixedVariance):
        scale = prior.variance.sigma2
    else:
        scale = (prior.variance.b0 + 0.5 * eta * float(resid @ resid)) / (
            prior.variance.a0 + 0.5 * eta * n
        )
    _, svals, Vt = np.linalg.svd(A, full_matrices=False)
    diag = (Vt.T**2) @ (1.0 / np.maximum(svals, 1e-9) ** 2)
    sd = np.sqrt(scale * diag)
    return center, sd, scale


def quadrature_moments(
    prior: ConjugatePrior,
    X: np.ndarray,
    y: np.ndarray,
    eta: float,
    mix_points: tuple = (),
    n_beta: int = 48,
    n_sigma: int = 300,
    half_width: float = 9.5,
) -> tuple[QuadratureMoments, list[float]]:
    """Integrate likelihood**eta * prior on a tensor Gauss-Legendre grid.

    ``mix_points`` is a sequence of (x_new, y_new, eta_prime); for each, the
    returned list carries the flattened-predictive integral
    E_posterior[f(y_new | x_new)**eta_prime] so mix losses can be checked as
    -log(value) / eta_prime.
    """
    k = prior.p + 1
    X = np.asarray(X, dtype=float).reshape(-1, k)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    center, sd, scale = _box_probe(prior, X, y, eta)

    nodes, weights = np.polynomial.legendre.leggauss(n_beta)
    axes, axw = [], []
    for j in range(k):
        lo, hi = center[j] - half_width * sd[j], center[j] + half_width * sd[j]
        axes.append(0.5 * (hi - lo) * nodes + 0.5 * (hi + lo))
        axw.append(0.5 * (hi - lo) * weights)
    grids = np.meshgrid(*axes, indexing="ij")
    B = np.stack([g.ravel() for g in grids], axis=-1)  # (m, k)
    W = axw[0]
    for j in range(1, k):
        W = np.multiply.outer(W, axw[j])
    wB = W.ravel()
    # quadratic form S(beta) = eta * RSS(beta) + (beta-b0)' Sigma0^-1 (beta-b0)
    R = y[None, :] - B @ X.T
    S = eta * np.sum(R * R, axis=1)
    prec0 = np.linalg.inv(prior.Sigma0)
    D = B - prior.beta0[None, :]
    S = S + np.einsum("mi,ij,mj->m", D, prec0, D)
    mix_resid = [(yy - B @ np.asarray(xx, float)) ** 2 for xx, yy, _ in mix_points]

    if isinstance(prior.variance, FixedVariance):
        s2 = prior.variance.sigma2
        logw = -S / (2.0 * s2)
        logw -= logw.max()
        w = np.exp(logw) * wB
        _check_boundary(w, [len(a) for a in axes])
        Z = w.sum()
        mean = (w @ B) / Z
        Dm = B - mean[None, :]
        cov = np.einsum("m,mi,mj->ij", w, Dm, Dm) / Z
        mix_vals = []
        for (xx, yy, ep), r2 in zip(mix_points, mix_resid):
            f_pow = (2.0 * np.pi * s2) ** (-0.5 * ep) * np.exp(-ep * r2 / (2.0 * s2))
            mix_vals.append(float((w @ f_pow) / Z))
        mom = QuadratureMoments(mean, cov, s2, 1.0 / s2, float(np.log(s2)))
        return mom, mix_vals

    # Varying variance: the beta marginal is heavy tailed, so integrate beta
    # in sigma-standardized coordinates: beta = center + sqrt(sigma2/scale) * Z
    # with Z the fixed displacement grid.  The conditional given sigma2 is
    # Gaussian with sd proportional to sqrt(sigma2), so one +-half_width box
    # in Z covers every slice equally well.
    a0, b0 = prior.variance.a0, prior.variance.b0
    kappa = 0.5 * eta * n + 0.5 * k + a0 + 1.0
    u_lo, u_hi = np.log(scale) - 14.0, np.log(scale) + 22.0
    un, uw = np.polynomial.legendre.leggauss(n_sigma)
    u = 0.5 * (u_hi - u_lo) * un + 0.5 * (u_hi + u_lo)
    uw = 0.5 * (u_hi - u_lo) * uw
    sig2 = np.exp(u)

    Z_disp = B - center[None, :]
    prec_w = np.asarray(prec0)
    x_mix = [np.asarray(xx, float) for xx, _, _ in mix_points]
    # center minimizes S, so the exact grid max of the log integrand is on
    # the center column; precompute it as the overflow offset
    rc = y - X @ center
    dc = center - prior.beta0
    S_c = eta * float(rc @ rc) + float(dc @ prec_w @ dc)
    s_rel_all = np.sqrt(sig2 / scale)
    glob = float(np.max(-(0.5 * S_c + b0) / sig2 - (kappa - 1.0) * u + k * np.log(s_rel_all)))
    Ztot = 0.0
    m1 = np.zeros(k)
    m2 = np.zeros((k, k))
    e_s2 = e_inv = e_log = 0.0
    mix_vals = np.zeros(len(mix_points))
    beta_marg = np.zeros(B.shape[0])
    ws_per_t = np.zeros(n_sigma)
    for t in range(n_sigma):
        s2 = sig2[t]
        s_rel = np.sqrt(s2 / scale)
        Bt = center[None, :] + s_rel * Z_disp
        Rt = y[None, :] - Bt @ X.T
        St = eta * np.sum(Rt * Rt, axis=1)
        Dt = Bt - prior.beta0[None, :]
        St = St + np.einsum("mi,ij,mj->m", Dt, prec_w, Dt)
        # log density + Jacobians: dbeta = s_rel^k dZ, dsigma2 = sigma2 du
        logw = -(0.5 * St + b0) / s2 - kappa * u[t] + u[t] + k * np.log(s_rel)
        w = np.exp(logw - glob) * wB * uw[t]
        ws = w.sum()
        ws_per_t[t] = ws
        beta_marg += w
        Ztot += ws
        m1 += w @ Bt
        m2 += np.einsum("m,mi,mj->ij", w, Bt, Bt)
        e_s2 += ws * s2
        e_inv += ws / s2
        e_log += ws * u[t]
        for q, ((_, yy, ep), xv) in enumerate(zip(mix_points, x_mix)):
            r2 = (yy - Bt @ xv) ** 2
            f_pow = (2.0 * np.pi * s2) ** (-0.5 * ep) * np.exp(-ep * r2 / (2.0 * s2))
            mix_vals[q] += w @ f_pow
    _check_boundary(beta_marg, [len(a) for a in axes])
    if (ws_per_t[0] + ws_per_t[-1]) / Ztot > 1e-10:
        raise RuntimeError("sigma2 integration range too small")
    mean = m1 / Ztot
    cov = m2 / Ztot - np.outer(mean, mean)
    mom = QuadratureMoments(mean, cov, e_s2 / Ztot, e_inv / Ztot, e_log / Ztot)
    return mom, [float(v / Ztot) for v in mix_vals]


def _check_boundary(w: np.ndarray, shape):
    """The integration box must contain the mass: total weight on the outer
    shell has to be negligible."""
    w = w.reshape(shape)
    total = w.sum()
    if total <= 0:
        raise RuntimeError("quadrature mass vanished; box badly placed")
    shell = 0.0
    for ax in range(w.ndim):
        sl = [slice(None)] * w.ndim
        for edge in (0, -1):
            sl[ax] = edge
            shell += w[tuple(sl)].sum()
    if shell / total > 1e-10:
        raise RuntimeError(f"quadrature box too small: boundary mass {shell / total:.2e}")


# -- the oracle suite -----------------------------------------------------------


def run_oracle_suite(verbose: bool = True) -> list[tuple[str, bool, str]]:
    """Quadrature and Monte Carlo checks of the conjugate closed forms.

    Returns (name, passed, detail) triples; used by the CLI's oracle-check
    subcommand and by the acceptance suite.
    """
    results = []
    rng = np.random.default_rng(20240517)

    def record(name, err, tol):
        ok = err < tol
        results.append((name, ok, f"max rel err {err:.3g} (tol {tol:g})"))
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: max rel err {err:.3g} (tol {tol:g})")

    for p in (0, 1, 2):
        for eta in (0.25, 0.5, 1.0):
            n = 8
            X = np.ones((n, p + 1))
            X[:, 1:] = rng.standard_normal((n, p))
            y = 0.1 * X[:, 1:].sum(axis=1) + 0.2 * rng.standard_normal(n)
            prior = ConjugatePrior(np.zeros(p + 1), np.eye(p + 1), InvGammaVariance(1.0, 1.0 / 40.0))
            state = PosteriorState.from_stats(prior, eta, X.T @ X, X.T @ y, float(y @ y), n, b_formula="exact")
            x_new = np.ones(p + 1)
            x_new[1:] = 0.3
            y_new = 0.1
            mom, mix_ints = quadrature_moments(
                prior,
                X,
                y,
                eta,
                mix_points=[(x_new, y_new, eta), (x_new, y_new, 1.0)],
                n_beta=40 if p == 2 else 48,
                n_sigma=260,
            )
            errs = [
                _rel(mom.mean, state.beta_bar),
                _rel(mom.scale_matrix, state.Sigma),
                _rel(mom.implied_a, state.a),
                _rel(mom.implied_b, state.b),
            ]
            rec = state.step_losses(x_new, y_new, eta_prime=eta)
            errs.append(_rel(-np.log(mix_ints[0]) / eta, rec.mix))
            errs.append(_rel(-np.log(mix_ints[1]), rec.bayes_log))
            record(f"quadrature NIG p={p} eta={eta}", max(errs), 1e-6)

    for p in (0, 1):
        eta = 0.5
        n = 6
        X = np.ones((n, p + 1))
        X[:, 1:] = rng.standard_normal((n, p))
        y = 0.1 * X[:, 1:].sum(axis=1) + 0.2 * rng.standard_normal(n)
        prior = ConjugatePrior(np.zeros(p + 1), np.eye(p + 1), FixedVariance(0.04))
        state = PosteriorState.from_stats(prior, eta, X.T @ X, X.T @ y, float(y @ y), n)
        x_new = np.ones(p + 1)
        y_new = -0.05
        mom, mix_ints = quadrature_moments(
            prior, X, y, eta, mix_points=[(x_new, y_new, eta), (x_new, y_new, 1.0)]
        )
        rec = state.step_losses(x_new, y_new, eta_prime=eta)
        errs = [
            _rel(mom.mean, state.beta_bar),
            _rel(mom.scale_matrix, state.Sigma),
            _rel(-np.log(mix_ints[0]) / eta, rec.mix),
            _rel(-np.log(mix_ints[1]), rec.bayes_log),
        ]
        record(f"quadrature fixed-sigma2 p={p} eta={eta}", max(errs), 1e-6)

    # Monte Carlo predictive variance of a small NIG state
    p, eta, n = 1, 0.5, 12
    X = np.ones((n, p + 1))
    X[:, 1:] = rng.standard_normal((n, p))
    y = 0.1 * X[:, 1] + 0.2 * rng.standard_normal(n)
    prior = ConjugatePrior(np.zeros(p + 1), np.eye(p + 1), InvGammaVariance(2.0, 0.05))
    state = PosteriorState.from_stats(prior, eta, X.T @ X, X.T @ y, float(y @ y), n, b_formula="exact")
    x_new = np.array([1.0, 0.7])
    mean, var = state.predictive_moments(x_new)
    m = 1_000_000
    sig2_draws = 1.0 / rng.gamma(state.a, 1.0 / state.b, size=m)
    L = np.linalg.cholesky(state.Sigma)
    beta_draws = state.beta_bar[None, :] + np.sqrt(sig2_draws)[:, None] * (
        rng.standard_normal((m, p + 1)) @ L.T
    )
    y_draws = beta_draws @ x_new + np.sqrt(sig2_draws) * rng.standard_normal(m)
    mc_var = y_draws.var()
    # variance of the sample variance ~ (E[(Y-mu)^4] - var^2)/m, bounded crudely
    se = np.sqrt(max(np.mean((y_draws - y_draws.mean()) ** 4) - mc_var**2, 0.0) / m)
    err = abs(mc_var - var)
    ok = err < 3.0 * se
    results.append(("monte-carlo predictive variance", ok, f"|mc-closed| {err:.3g} vs 3se {3 * se:.3g}"))
    if verbose:
        print(f"[{'PASS' if ok else 'FAIL'}] monte-carlo predictive variance: |diff| {err:.3g} (3se {3 * se:.3g})")
    return results


def _rel(approx, exact) -> float:
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    denom = np.maximum(np.abs(exact), 1e-12)
    return float(np.max(np.abs(approx - exact) / denom))
