"""Asymptotic law of the KL statistic under independence.

Under the null, ``2n I_hat_KL`` for an exponential bilinear model
converges in distribution to ``Z'Z`` with ``Z ~ N(0, C)`` and
``C = Sigma1^{-1/2} Sigma2 Sigma1^{-1/2}``, where

* ``Sigma1 = E[w w']`` with ``w = (1, xi_1(X) zeta_1(Y), ...)`` and X, Y
  independent;
* ``Sigma2`` is the delta-method covariance of the score at theta = 0,
  built from the moment vector of ``V = (1, xi_k(X), zeta_k(Y),
  xi_k(X) zeta_k(Y))``.

Moments are estimated from ``m`` independent product draws when the
margins are continuous, and by exact enumeration when both margins are
finite-discrete.  For the saturated finite-discrete model the limit is
the chi-square law with (K1 - 1)(K2 - 1) degrees of freedom, for which an
exact quantile routine is provided.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaincc, gammaln

from .errors import DomainError, SingularityError
from .divergence import Interval

__all__ = [
    "AsymptoticCovariances",
    "covariances_under_h0",
    "sigma1_under_h0",
    "sigma2_under_h0",
    "limit_quantile_ztz",
    "chisq_df_finite",
    "chi2_quantile",
    "chi2_sf",
]

_COND_LIMIT = 1e12
_EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class AsymptoticCovariances:
    """Sigma1, Sigma2 and the limit covariance C of the KL statistic."""

    sigma1: np.ndarray
    sigma2: np.ndarray
    c_matrix: np.ndarray

    @classmethod
    def from_sigmas(cls, sigma1, sigma2) -> "AsymptoticCovariances":
        sigma1 = _symmetrize(np.asarray(sigma1, dtype=float))
        sigma2 = _symmetrize(np.asarray(sigma2, dtype=float))
        vals, vecs = np.linalg.eigh(sigma1)
        vals = np.maximum(vals, _EIG_FLOOR)
        inv_sqrt = (vecs / np.sqrt(vals)) @ vecs.T
        c = _symmetrize(inv_sqrt @ sigma2 @ inv_sqrt)
        return cls(sigma1, sigma2, c)


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2.0


def _margin_draws(margin, rng, m):
    """Draw m values from a margin given as sampler, sample, or (values, probs)."""
    if callable(margin):
        return np.asarray(margin(rng, m))
    if isinstance(margin, tuple) and len(margin) == 2:
        values, probs = margin
        idx = rng.choice(len(values), size=m, p=np.asarray(probs, dtype=float))
        return np.asarray(values)[idx]
    arr = np.asarray(margin)
    return arr[rng.integers(0, arr.size, size=m)]


def _is_exact(margin) -> bool:
    return isinstance(margin, tuple) and len(margin) == 2


def _moment_inputs(model, marg_x, marg_y, m, seed):
    """Feature matrices Xi, Ze and point weights for moment computation.

    Exact enumeration over the product support when both margins are
    finite-discrete; otherwise m independent product draws.
    """
    pairs = model.feature_pairs()
    if _is_exact(marg_x) and _is_exact(marg_y):
        vx, px = marg_x
        vy, py = marg_y
        vx = np.asarray(vx)
        vy = np.asarray(vy)
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        xs = np.repeat(vx, vy.size)
        ys = np.tile(vy, vx.size)
        weights = np.repeat(px, py.size) * np.tile(py, px.size)
    else:
        rng = np.random.default_rng(seed)
        xs = _margin_draws(marg_x, rng, m)
        ys = _margin_draws(marg_y, np.random.default_rng(rng.integers(2**63)), m)
        weights = np.full(xs.size, 1.0 / xs.size)
    xi = np.stack([p[0](xs) for p in pairs], axis=1).astype(float)
    ze = np.stack([p[1](ys) for p in pairs], axis=1).astype(float)
    return xi, ze, weights


def _v_matrix(xi, ze):
    npts = xi.shape[0]
    return np.hstack([np.ones((npts, 1)), xi, ze, xi * ze])


def sigma1_under_h0(model, marg_x, marg_y, m: int = 1_000_000, seed: int = 0) -> np.ndarray:
    """E[w w'] under the product measure, w = (1, xi_k(X) zeta_k(Y))."""
    xi, ze, w = _moment_inputs(model, marg_x, marg_y, m, seed)
    feats = np.hstack([np.ones((xi.shape[0], 1)), xi * ze])
    sigma1 = _symmetrize(feats.T @ (feats * w[:, None]))
    if np.linalg.cond(sigma1) > _COND_LIMIT:
        raise SingularityError("estimated Sigma1 is numerically singular")
    return sigma1


def sigma2_under_h0(model, marg_x, marg_y, m: int = 1_000_000, seed: int = 0) -> np.ndarray:
    """Delta-method covariance of the score at theta = 0.

    Returns J Cov(V) J' padded with a zero first row and column, where
    row k of J reads the moments (mu_zeta_k, mu_xi_k, -1) off the slots
    of V = (1, xi, zeta, xi*zeta).
    """
    xi, ze, w = _moment_inputs(model, marg_x, marg_y, m, seed)
    v = _v_matrix(xi, ze)
    mu = w @ v
    centered = v - mu
    cov = centered.T @ (centered * w[:, None])
    d = xi.shape[1]
    jac = np.zeros((1 + d, 1 + 3 * d))
    for k in range(1, d + 1):
        jac[k, k] = mu[d + k]
        jac[k, d + k] = mu[k]
        jac[k, 2 * d + k] = -1.0
    return _symmetrize(jac @ cov @ jac.T)


def covariances_under_h0(model, marg_x, marg_y, m: int = 1_000_000,
                         seed: int = 0) -> AsymptoticCovariances:
    """Sigma1, Sigma2 and C from a single set of product draws."""
    xi, ze, w = _moment_inputs(model, marg_x, marg_y, m, seed)
    feats = np.hstack([np.ones((xi.shape[0], 1)), xi * ze])
    sigma1 = _symmetrize(feats.T @ (feats * w[:, None]))
    if np.linalg.cond(sigma1) > _COND_LIMIT:
        raise SingularityError("estimated Sigma1 is numerically singular")
    v = _v_matrix(xi, ze)
    mu = w @ v
    centered = v - mu
    cov = centered.T @ (centered * w[:, None])
    d = xi.shape[1]
    jac = np.zeros((1 + d, 1 + 3 * d))
    for k in range(1, d + 1):
        jac[k, k] = mu[d + k]
        jac[k, d + k] = mu[k]
        jac[k, 2 * d + k] = -1.0
    sigma2 = _symmetrize(jac @ cov @ jac.T)
    return AsymptoticCovariances.from_sigmas(sigma1, sigma2)


def limit_quantile_ztz(cov, alpha: float, n_draws: int = 10_000, seed: int = 0) -> float:
    """Upper-alpha quantile of Z'Z, Z ~ N(0, C), by Monte Carlo.

    The quantile is read off the linearly interpolated empirical CDF of
    ``n_draws`` simulated values; deterministic given the seed.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(alpha, Interval(0.0, 1.0), what="alpha")
    c = np.asarray(getattr(cov, "c_matrix", cov), dtype=float)
    vals = np.linalg.eigvalsh(_symmetrize(c))
    vals = np.clip(vals, 0.0, None)
    rng = np.random.default_rng(seed)
    # Z'Z equals sum_i lambda_i eps_i^2 for orthonormal eigenvectors
    draws = rng.standard_normal((n_draws, vals.size)) ** 2 @ vals
    return float(np.quantile(draws, 1.0 - alpha, method="linear"))


def chisq_df_finite(k1: int, k2: int) -> int:
    """Degrees of freedom (K1 - 1)(K2 - 1) of the finite-discrete limit."""
    interval = Interval(2.0, np.inf, lo_closed=True)
    for k in (k1, k2):
        if int(k) != k or k < 2:
            raise DomainError(k, interval, what="level count")
    return (int(k1) - 1) * (int(k2) - 1)


def chi2_sf(x: float, df: float) -> float:
    """Chi-square survival function via the regularized incomplete gamma."""
    if x <= 0.0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def chi2_quantile(p: float, df: float) -> float:
    """Chi-square quantile: invert gammainc(df/2, q/2) = p.

    Newton iterations safeguarded by bisection on a bracketing interval;
    accurate to ~1e-12 relative.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(p, Interval(0.0, 1.0), what="probability")
    if df <= 0.0:
        raise DomainError(df, _POSITIVE_DF, what="df")
    a = df / 2.0

    def cdf(q):
        return float(gammainc(a, q / 2.0))

    def log_pdf(q):
        return (a - 1.0) * np.log(q) - q / 2.0 - a * np.log(2.0) - gammaln(a)

    # bracket the root
    lo, hi = 0.0, df + 10.0 * np.sqrt(2.0 * df) + 10.0
    while cdf(hi) < p:
        lo, hi = hi, 2.0 * hi
    # Wilson-Hilferty start
    z = _normal_quantile(p)
    q = df * (1.0 - 2.0 / (9.0 * df) + z * np.sqrt(2.0 / (9.0 * df))) ** 3
    if not lo < q < hi:
        q = 0.5 * (lo + hi)
    for _ in range(100):
        f = cdf(q) - p
        if f > 0.0:
            hi = q
        else:
            lo = q
        step = f / np.exp(log_pdf(q))
        q_new = q - step
        if not lo < q_new < hi:
            q_new = 0.5 * (lo + hi)
        if abs(q_new - q) <= 1e-13 * max(1.0, q):
            return float(q_new)
        q = q_new
    return float(q)


_POSITIVE_DF = Interval(0.0, np.inf)


def _normal_quantile(p: float) -> float:
    """Standard normal quantile (Acklam's rational approximation).

    Only used to seed the chi-square Newton iteration, so modest accuracy
    (~1e-9) is plenty.
    """
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    p_low = 0.02425
    if p < p_low:
        q = np.sqrt(-2.0 * np.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    if p > 1.0 - p_low:
        q = np.sqrt(-2.0 * np.log(1.0 - p))
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
